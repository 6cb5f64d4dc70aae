#pragma once

#include "istanet/sampling.hpp"

#include <Eigen/Dense>

#include <vector>

namespace istanet {

// Orthonormal sparsifying transform W acting on vectorized signals.
class OrthoTransform {
 public:
  virtual ~OrthoTransform() = default;
  virtual Eigen::VectorXd forward(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd inverse(const Eigen::VectorXd& c) const = 0;
};

class IdentityTransform final : public OrthoTransform {
 public:
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override { return x; }
  Eigen::VectorXd inverse(const Eigen::VectorXd& c) const override { return c; }
};

// Orthonormal type-II DCT matrix: C(k, i) = a_k cos(pi (2i + 1) k / 2n).
Eigen::MatrixXd dct_matrix(Eigen::Index n);

// Separable orthonormal 2-D DCT-II on square grids.
Eigen::MatrixXd dct2_orthonormal(const Eigen::MatrixXd& grid);
Eigen::MatrixXd idct2_orthonormal(const Eigen::MatrixXd& coeffs);

// 2-D DCT on a side x side grid, vectorized row-major.
class Dct2Transform final : public OrthoTransform {
 public:
  explicit Dct2Transform(Eigen::Index side);
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd inverse(const Eigen::VectorXd& c) const override;
  Eigen::Index side() const { return c_.rows(); }

 private:
  Eigen::MatrixXd c_;
};

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double theta);

// argmin_x 1/2 ||x - r||^2 + lambda ||W x||_1 = W^T soft(W r, lambda).
Eigen::VectorXd prox_orthogonal(const Eigen::VectorXd& r, double lambda, const OrthoTransform& w);

struct IstaConfig {
  double lambda = 0.01;
  double rho = 1.0;
  int max_iters = 200;
  double tol = 1e-8;  // relative iterate change; 0 disables early stopping
};

struct IstaResult {
  Eigen::VectorXd x;
  // objective[0] is at the starting point, objective[k] after iteration k.
  std::vector<double> objective;
  int iterations = 0;
};

double ista_objective(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const MeasurementMatrix& phi, double lambda, const OrthoTransform& w);

// Classical ISTA for min 1/2 ||phi x - y||^2 + lambda ||W x||_1 from x0
// (zero when empty). With rho <= 1 and a row-orthonormal phi the objective
// cannot increase; an increase signals a bug and raises NumericError.
IstaResult ista_solve(const Eigen::VectorXd& y, const MeasurementMatrix& phi,
                      const IstaConfig& cfg, const OrthoTransform& w,
                      const Eigen::VectorXd& x0 = {});

// Same, with the 2-D DCT on a sqrt(N) x sqrt(N) block.
IstaResult ista_solve(const Eigen::VectorXd& y, const MeasurementMatrix& phi,
                      const IstaConfig& cfg);

}  // namespace istanet
