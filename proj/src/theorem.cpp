#include "istanet/theorem.hpp"

#include "istanet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace istanet {

namespace {

constexpr long kChunk = 4096;

// Fills a chunk of samples (columns) of X and Y. The generator is consumed in
// the same order on every pass, so a reseeded pass reproduces the draws.
void draw(std::mt19937_64& rng, std::normal_distribution<double>& nd, double sigma,
          const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::MatrixXd& x,
          Eigen::MatrixXd& y) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = sigma * nd(rng);
  }
  y.noalias() = b * (a * x).cwiseMax(0.0);
}

}  // namespace

RatioEstimate theorem1_ratio(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma,
                             long samples, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw DomainError("theorem1_ratio: sigma must be > 0");
  if (samples < 10'000) throw DomainError("theorem1_ratio: need at least 1e4 samples");
  if (b.cols() != a.rows()) throw ShapeError("theorem1_ratio: B must have as many columns as A has rows");
  const Eigen::Index n = a.cols();
  if (n < 1 || b.rows() < 1) throw ShapeError("theorem1_ratio: empty matrices");

  // Pass 1: means.
  Eigen::VectorXd mean_x = Eigen::VectorXd::Zero(n), mean_y = Eigen::VectorXd::Zero(b.rows());
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (long done = 0; done < samples; done += kChunk) {
      const long cnt = std::min(kChunk, samples - done);
      Eigen::MatrixXd x(n, cnt), y;
      draw(rng, nd, sigma, a, b, x, y);
      mean_x += x.rowwise().sum();
      mean_y += y.rowwise().sum();
    }
    mean_x /= static_cast<double>(samples);
    mean_y /= static_cast<double>(samples);
  }
  // Pass 2: per-sample squared deviations u (Y) and v (X).
  double su = 0, sv = 0, suu = 0, svv = 0, suv = 0;
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (long done = 0; done < samples; done += kChunk) {
      const long cnt = std::min(kChunk, samples - done);
      Eigen::MatrixXd x(n, cnt), y;
      draw(rng, nd, sigma, a, b, x, y);
      const Eigen::ArrayXd u = (y.colwise() - mean_y).colwise().squaredNorm().transpose().array();
      const Eigen::ArrayXd v = (x.colwise() - mean_x).colwise().squaredNorm().transpose().array();
      su += u.sum();
      sv += v.sum();
      suu += u.square().sum();
      svv += v.square().sum();
      suv += (u * v).sum();
    }
  }
  const double ns = static_cast<double>(samples);
  RatioEstimate est;
  est.alpha = su / sv;  // the (n - 1) normalizations cancel
  if (su == 0.0) return est;
  // Var(u - alpha v) with mean(u - alpha v) == 0 by construction.
  const double r = est.alpha;
  const double var_lin = (suu - 2 * r * suv + r * r * svv) / (ns - 1.0);
  const double mean_v = sv / ns;
  est.std_error = std::sqrt(std::max(var_lin, 0.0) / ns) / mean_v;
  return est;
}

double VarianceProbe::max_relative_gap() const {
  double gap = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    for (std::size_t j = i + 1; j < estimates.size(); ++j) {
      const double ref = std::max(std::abs(estimates[i].alpha), std::abs(estimates[j].alpha));
      if (ref > 0) gap = std::max(gap, std::abs(estimates[i].alpha - estimates[j].alpha) / ref);
    }
  }
  return gap;
}

bool VarianceProbe::sigma_invariant(double rel_tol, double k) const {
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    for (std::size_t j = i + 1; j < estimates.size(); ++j) {
      const double d = std::abs(estimates[i].alpha - estimates[j].alpha);
      const double ref = std::max(std::abs(estimates[i].alpha), std::abs(estimates[j].alpha));
      const double se = std::hypot(estimates[i].std_error, estimates[j].std_error);
      if (d > std::max(rel_tol * ref, k * se)) return false;
    }
  }
  return true;
}

VarianceProbe random_probe(Eigen::Index n, Eigen::Index m, Eigen::Index s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  VarianceProbe p;
  p.a.resize(m, n);
  p.b.resize(s, m);
  for (Eigen::Index i = 0; i < p.a.size(); ++i) p.a.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = nd(rng);
  p.sigmas = {0.5, 1.0, 2.0};
  return p;
}

void run_probe(VarianceProbe& probe, std::uint64_t seed) {
  probe.estimates.clear();
  for (std::size_t i = 0; i < probe.sigmas.size(); ++i) {
    probe.estimates.push_back(
        theorem1_ratio(probe.a, probe.b, probe.sigmas[i], probe.samples, seed + i));
  }
}

}  // namespace istanet
