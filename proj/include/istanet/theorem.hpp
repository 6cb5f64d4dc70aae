#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace istanet {

struct RatioEstimate {
  double alpha = 0.0;
  double std_error = 0.0;  // delta-method standard error of alpha
};

// Monte Carlo estimate of tr Cov(Y) / tr Cov(X) for X ~ N(0, sigma^2 I) and
// Y = B max(0, A X), using unbiased sample covariances.
// Requires sigma > 0 and samples >= 1e4.
RatioEstimate theorem1_ratio(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma,
                             long samples, std::uint64_t seed);

struct VarianceProbe {
  Eigen::MatrixXd a;  // m x n
  Eigen::MatrixXd b;  // s x m
  std::vector<double> sigmas;
  long samples = 1'000'000;
  std::vector<RatioEstimate> estimates;  // one per sigma

  // Largest pairwise relative gap between estimates, and whether every pair
  // agrees within max(rel_tol, k combined standard errors).
  double max_relative_gap() const;
  bool sigma_invariant(double rel_tol = 0.02, double k = 4.0) const;
};

// Draws A (m x n) and B (s x m) with standard normal entries.
VarianceProbe random_probe(Eigen::Index n, Eigen::Index m, Eigen::Index s, std::uint64_t seed);

// Fills probe.estimates; sigma i uses seed + i so the estimates are independent.
void run_probe(VarianceProbe& probe, std::uint64_t seed);

}  // namespace istanet
