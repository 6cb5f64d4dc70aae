#include "istanet/errors.hpp"
#include "istanet/image.hpp"
#include "istanet/ista.hpp"

#include <cmath>
#include <numbers>

namespace istanet {

Eigen::MatrixXd dct_matrix(Eigen::Index n) {
  if (n < 1) throw ShapeError("dct_matrix: size must be positive");
  Eigen::MatrixXd c(n, n);
  const double nd = static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd);
    for (Eigen::Index i = 0; i < n; ++i) {
      c(k, i) = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                             static_cast<double>(k) / (2.0 * nd));
    }
  }
  return c;
}

namespace {

void require_square(const Eigen::MatrixXd& g, const char* op) {
  if (g.rows() != g.cols()) {
    throw ShapeError(std::string(op) + ": grid must be square, got " + std::to_string(g.rows()) +
                     "x" + std::to_string(g.cols()));
  }
}

}  // namespace

Eigen::MatrixXd dct2_orthonormal(const Eigen::MatrixXd& grid) {
  require_square(grid, "dct2_orthonormal");
  const Eigen::MatrixXd c = dct_matrix(grid.rows());
  return c * grid * c.transpose();
}

Eigen::MatrixXd idct2_orthonormal(const Eigen::MatrixXd& coeffs) {
  require_square(coeffs, "idct2_orthonormal");
  const Eigen::MatrixXd c = dct_matrix(coeffs.rows());
  return c.transpose() * coeffs * c;
}

Dct2Transform::Dct2Transform(Eigen::Index side) : c_(dct_matrix(side)) {}

Eigen::VectorXd Dct2Transform::forward(const Eigen::VectorXd& x) const {
  const Eigen::Index side = grid_side(x.size());
  if (side != c_.rows()) throw ShapeError("Dct2Transform: grid size mismatch");
  return vectorize(c_ * unvectorize(x, side) * c_.transpose());
}

Eigen::VectorXd Dct2Transform::inverse(const Eigen::VectorXd& c) const {
  const Eigen::Index side = grid_side(c.size());
  if (side != c_.rows()) throw ShapeError("Dct2Transform: grid size mismatch");
  return vectorize(c_.transpose() * unvectorize(c, side) * c_);
}

}  // namespace istanet
