// Shared helpers and independent oracles for the unit and acceptance tests.
#pragma once

#include "istanet/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing {

using istanet::Shape;
using istanet::Tape;
using istanet::Tensor;
using istanet::Var;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Uniform in [lo, hi] but never within `gap` of zero (for kinked ops).
inline Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, double gap = 1e-3,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> mag(gap, hi);
  std::bernoulli_distribution neg(0.5);
  Tensor t(shape);
  for (double& v : t.values()) v = neg(rng) ? -mag(rng) : mag(rng);
  return t;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

// Elementwise relative error; pairs where both magnitudes fall below `floor`
// count as agreeing zeros and contribute |a - n| / floor.
inline double relative_error(double a, double n, double floor = 1e-7) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Largest elementwise relative error between the tape gradient of the
// scalar built by `build` and central finite differences with step h.
inline double gradient_error(const Builder& build, const std::vector<Tensor>& inputs,
                             double h = 1e-6) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    tape.backward(build(tape, vars));
    for (const Var& v : vars) analytic.push_back(v.grad().size() ? v.grad() : Tensor(v.shape()));
  }
  auto eval = [&](const std::vector<Tensor>& in) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const Tensor& t : in) vars.push_back(tape.constant(t));
    return build(tape, vars).value().item();
  };
  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (std::size_t i = 0; i < inputs[p].size(); ++i) {
      const double x0 = inputs[p][i];
      probe[p][i] = x0 + h;
      const double up = eval(probe);
      probe[p][i] = x0 - h;
      const double down = eval(probe);
      probe[p][i] = x0;
      worst = std::max(worst, relative_error(analytic[p][i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Direct spatial-loop 3x3 zero-padded cross-correlation.
inline Tensor naive_conv(const Tensor& in, const Tensor& w) {
  const std::size_t ci = in.shape()[0], h = in.shape()[1], wd = in.shape()[2];
  const std::size_t co = w.shape()[0];
  Tensor out({co, h, wd});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < wd; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < ci; ++c) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const long sy = static_cast<long>(y) + ky - 1, sx = static_cast<long>(x) + kx - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
              acc += w[((o * ci + c) * 3 + ky) * 3 + kx] * in[(c * h + sy) * wd + sx];
            }
          }
        }
        out[(o * h + y) * wd + x] = acc;
      }
    }
  }
  return out;
}

inline Tensor naive_relu(Tensor t) {
  for (double& v : t.values()) v = v > 0 ? v : 0.0;
  return t;
}

inline Tensor naive_soft(Tensor t, double theta) {
  for (double& v : t.values()) {
    const double m = std::abs(v) - theta;
    v = m > 0 ? (v > 0 ? m : -m) : 0.0;
  }
  return t;
}

inline Tensor naive_add(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline std::vector<double> naive_matvec(const Eigen::MatrixXd& m, const std::vector<double>& v) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()), 0.0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r] += m(r, c) * v[static_cast<std::size_t>(c)];
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? d : INFINITY;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("istanet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
