#include "istanet/ista.hpp"

#include "istanet/errors.hpp"
#include "istanet/tensor.hpp"

#include <cmath>

namespace istanet {

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double theta) {
  if (!(theta >= 0.0)) throw DomainError("soft_threshold: threshold must be >= 0");
  return x.unaryExpr([theta](double v) { return kernels::soft_threshold(v, theta); });
}

Eigen::VectorXd prox_orthogonal(const Eigen::VectorXd& r, double lambda, const OrthoTransform& w) {
  return w.inverse(soft_threshold(w.forward(r), lambda));
}

double ista_objective(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const MeasurementMatrix& phi, double lambda, const OrthoTransform& w) {
  return 0.5 * (phi.phi * x - y).squaredNorm() + lambda * w.forward(x).lpNorm<1>();
}

IstaResult ista_solve(const Eigen::VectorXd& y, const MeasurementMatrix& phi,
                      const IstaConfig& cfg, const OrthoTransform& w, const Eigen::VectorXd& x0) {
  if (!(cfg.lambda >= 0.0)) throw DomainError("ista: lambda must be >= 0");
  if (!(cfg.rho > 0.0)) throw DomainError("ista: rho must be > 0");
  if (cfg.max_iters < 1) throw DomainError("ista: max_iters must be positive");
  if (!(cfg.tol >= 0.0)) throw DomainError("ista: tol must be >= 0");
  if (y.size() != phi.rows()) throw ShapeError("ista: measurement length does not match phi");

  IstaResult res;
  res.x = x0.size() ? x0 : Eigen::VectorXd::Zero(phi.cols());
  if (res.x.size() != phi.cols()) throw ShapeError("ista: x0 length does not match phi");
  res.objective.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);
  res.objective.push_back(ista_objective(res.x, y, phi, cfg.lambda, w));

  const bool monotone = cfg.rho <= 1.0;
  for (int k = 0; k < cfg.max_iters; ++k) {
    const Eigen::VectorXd r = res.x - cfg.rho * (phi.phi.transpose() * (phi.phi * res.x - y));
    Eigen::VectorXd next = prox_orthogonal(r, cfg.rho * cfg.lambda, w);
    const double change = (next - res.x).norm() / std::max(res.x.norm(), 1e-300);
    res.x = std::move(next);
    res.iterations = k + 1;
    const double obj = ista_objective(res.x, y, phi, cfg.lambda, w);
    const double prev = res.objective.back();
    res.objective.push_back(obj);
    if (monotone && obj > prev + 1e-10 * std::max(1.0, std::abs(prev))) {
      throw NumericError("ista: objective increased from " + std::to_string(prev) + " to " +
                         std::to_string(obj) + " at iteration " + std::to_string(k + 1));
    }
    if (cfg.tol > 0.0 && change < cfg.tol) break;
  }
  return res;
}

IstaResult ista_solve(const Eigen::VectorXd& y, const MeasurementMatrix& phi,
                      const IstaConfig& cfg) {
  const Dct2Transform dct(grid_side(phi.cols()));
  return ista_solve(y, phi, cfg, dct);
}

}  // namespace istanet
