#include "istanet/network.hpp"

#include "istanet/errors.hpp"
#include "istanet/image.hpp"

#include <array>
#include <cmath>
#include <random>

namespace istanet {

std::string to_string(Variant v) {
  return v == Variant::IstaNet ? "istanet" : "istanet+";
}

std::string to_string(Tying t) {
  switch (t) {
    case Tying::Unshared: return "unshared";
    case Tying::ShareTransform: return "share-transform";
    case Tying::ShareRhoTransform: return "share-rho-transform";
    case Tying::ShareThetaTransform: return "share-theta-transform";
    case Tying::ShareAll: return "share-all";
  }
  return "?";
}

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::Identity: return "identity";
    case InitScheme::Xavier: return "xavier";
    case InitScheme::He: return "he";
    case InitScheme::DctFrame: return "dct";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "istanet" || s == "ista-net") return Variant::IstaNet;
  if (s == "istanet+" || s == "ista-net+" || s == "istanet-plus" || s == "ista-net-plus") {
    return Variant::IstaNetPlus;
  }
  throw ConfigError("unknown variant '" + s + "' (expected istanet or istanet+)");
}

Tying parse_tying(const std::string& s) {
  for (Tying t : {Tying::Unshared, Tying::ShareTransform, Tying::ShareRhoTransform,
                  Tying::ShareThetaTransform, Tying::ShareAll}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown tying mode '" + s + "'");
}

InitScheme parse_init_scheme(const std::string& s) {
  for (InitScheme i : {InitScheme::Identity, InitScheme::Xavier, InitScheme::He, InitScheme::DctFrame}) {
    if (to_string(i) == s) return i;
  }
  throw ConfigError("unknown init scheme '" + s + "'");
}

// ---------------------------------------------------------------------------

std::vector<Shape> Model::slot_shapes(Variant v, int filters) {
  const auto f = static_cast<std::size_t>(filters);
  const Shape scalar{1};
  if (v == Variant::IstaNet) {
    return {scalar, scalar, {f, 1, 3, 3}, {f, f, 3, 3}, {f, f, 3, 3}, {1, f, 3, 3}};
  }
  return {scalar,       scalar,       {f, 1, 3, 3}, {f, f, 3, 3},
          {f, f, 3, 3}, {f, f, 3, 3}, {f, f, 3, 3}, {1, f, 3, 3}};
}

bool Model::slot_shared(Tying tying, std::size_t slot) {
  switch (tying) {
    case Tying::Unshared: return false;
    case Tying::ShareTransform: return slot > kTheta;
    case Tying::ShareRhoTransform: return slot != kTheta;
    case Tying::ShareThetaTransform: return slot != kRho;
    case Tying::ShareAll: return true;
  }
  return false;
}

std::size_t Model::slots_per_phase() const {
  return cfg_.variant == Variant::IstaNet ? 6 : 8;
}

Model::Model(ModelConfig cfg, QInit q_init, std::vector<Tensor> parameters)
    : cfg_(cfg), q_init_(std::move(q_init)), params_(std::move(parameters)) {
  if (cfg_.phases < 0) throw ConfigError("model needs a non-negative phase count");
  if (cfg_.filters < 1) throw ConfigError("model needs at least one filter");
  if (q_init_.q.size() == 0) throw ConfigError("model needs a Q_init matrix");
  grid_side(q_init_.q.rows());

  const auto shapes = slot_shapes(cfg_.variant, cfg_.filters);
  const std::size_t slots = shapes.size();
  layout_.resize(static_cast<std::size_t>(cfg_.phases) * slots);
  std::size_t next = 0;
  for (int k = 0; k < cfg_.phases; ++k) {
    for (std::size_t s = 0; s < slots; ++s) {
      const std::size_t at = static_cast<std::size_t>(k) * slots + s;
      if (k > 0 && slot_shared(cfg_.tying, s)) {
        layout_[at] = layout_[s];
        continue;
      }
      if (next >= params_.size()) throw ConfigError("model: too few parameter arrays");
      if (params_[next].shape() != shapes[s]) {
        throw ShapeError("model: parameter " + std::to_string(next) + " has shape " +
                         shape_string(params_[next].shape()) + ", expected " +
                         shape_string(shapes[s]));
      }
      layout_[at] = next++;
    }
  }
  if (next != params_.size()) throw ConfigError("model: too many parameter arrays");
}

namespace {

// Channel layout of the DCT-frame init: channel 0 carries DC, then each AC
// filter takes a (+, -) channel pair while room remains. Leftover channels
// start at zero.
struct DctFrame {
  std::vector<std::array<double, 9>> filter;  // per channel, signed
  std::vector<long> partner;                  // opposite-sign twin or -1
};

DctFrame dct_frame(std::size_t channels) {
  std::array<std::array<double, 3>, 3> c{};
  for (int k = 0; k < 3; ++k) {
    for (int n = 0; n < 3; ++n) {
      c[k][n] = std::sqrt((k == 0 ? 1.0 : 2.0) / 3.0) * std::cos(M_PI * (2 * n + 1) * k / 6.0);
    }
  }
  const std::pair<int, int> order[] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 2},
                                       {2, 0}, {1, 2}, {2, 1}, {2, 2}};
  DctFrame out;
  out.filter.assign(channels, {});
  out.partner.assign(channels, -1);
  std::size_t ch = 0;
  for (const auto& [a, b] : order) {
    std::array<double, 9> f{};
    for (int m = 0; m < 3; ++m)
      for (int n = 0; n < 3; ++n) f[static_cast<std::size_t>(m * 3 + n)] = c[a][m] * c[b][n];
    if (a == 0 && b == 0) {
      if (ch < channels) out.filter[ch++] = f;
      continue;
    }
    if (ch + 2 > channels) break;
    out.filter[ch] = f;
    for (double& v : f) v = -v;
    out.filter[ch + 1] = f;
    out.partner[ch] = static_cast<long>(ch + 1);
    out.partner[ch + 1] = static_cast<long>(ch);
    ch += 2;
  }
  return out;
}

void place_dct_frame(Tensor& t, std::size_t slot, std::size_t slots, bool plus,
                     const DctFrame& frame) {
  const std::size_t c_out = t.shape()[0], c_in = t.shape()[1];
  auto tap = [&](std::size_t o, std::size_t i, std::size_t k) -> double& {
    return t[(o * c_in + i) * 9 + k];
  };
  const std::size_t first = 2;
  const std::size_t last = slots - 1;
  if (slot == first) {
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t k = 0; k < 9; ++k) tap(o, 0, k) += frame.filter[o][k];
  } else if (slot == last && !plus) {
    // Adjoint of the analysis (flipped filters), averaged over the nine
    // windows covering an interior pixel.
    for (std::size_t i = 0; i < c_in; ++i)
      for (std::size_t k = 0; k < 9; ++k) tap(0, i, k) += frame.filter[i][8 - k] / 9.0;
  } else if (slot == last - 1 && plus) {
    // H2~: rebuild each signed response from its ReLU pair.
    for (std::size_t o = 0; o < c_out; ++o) {
      if (o != 0 && frame.partner[o] < 0) continue;  // unused channel
      tap(o, o, 4) += 1.0;
      if (frame.partner[o] >= 0) tap(o, static_cast<std::size_t>(frame.partner[o]), 4) -= 1.0;
    }
  } else if (slot != last) {
    for (std::size_t o = 0; o < c_out; ++o) tap(o, o, 4) += 1.0;
  }
}

}  // namespace

Model Model::initialize(const ModelConfig& cfg, QInit q_init, std::uint64_t seed,
                        InitScheme scheme, double init_noise) {
  const auto shapes = slot_shapes(cfg.variant, cfg.filters);
  const DctFrame frame = dct_frame(static_cast<std::size_t>(std::max(cfg.filters, 1)));
  const bool plus = cfg.variant == Variant::IstaNetPlus;
  const std::size_t slots = shapes.size();
  const auto f = static_cast<std::size_t>(cfg.filters);
  const double half = std::max(1.0, std::floor(static_cast<double>(f) / 2.0));
  // Alternating signs; the last channel is dropped from the pairing when
  // N_f is odd so the positive and negative parts stay balanced.
  auto sign = [f](std::size_t c) {
    if (f % 2 == 1 && c + 1 == f && f > 1) return 0.0;
    return c % 2 == 0 ? 1.0 : -1.0;
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> params;
  for (int k = 0; k < cfg.phases; ++k) {
    for (std::size_t s = 0; s < slots; ++s) {
      if (k > 0 && slot_shared(cfg.tying, s)) continue;
      Tensor t(shapes[s]);
      if (s == kRho) {
        t[0] = 1.0;
      } else if (s == kTheta) {
        t[0] = 0.01;
      } else {
        const std::size_t c_out = t.shape()[0];
        const std::size_t c_in = t.shape()[1];
        double stddev = 0.0;
        switch (scheme) {
          case InitScheme::He: stddev = std::sqrt(2.0 / (9.0 * c_in)); break;
          case InitScheme::Xavier: stddev = std::sqrt(2.0 / (9.0 * (c_in + c_out))); break;
          case InitScheme::Identity:
          case InitScheme::DctFrame:
            stddev = init_noise * std::sqrt(2.0 / (9.0 * (c_in + c_out)));
            break;
        }
        for (double& v : t.values()) v = stddev * normal(rng);
        if (scheme == InitScheme::Identity) {
          // Center tap (1,1) of filter [o, i] sits at ((o * c_in + i) * 9 + 4).
          auto center = [&](std::size_t o, std::size_t i) -> double& {
            return t[(o * c_in + i) * 9 + 4];
          };
          const std::size_t first = 2;            // A or D
          const std::size_t last = slots - 1;     // B~ or G
          const std::size_t last_inverse = plus ? slots - 2 : slots - 1;  // B~ or H2~
          if (s == first) {
            for (std::size_t o = 0; o < c_out; ++o) center(o, 0) += sign(o);
          } else if (s == last_inverse && !plus) {
            for (std::size_t i = 0; i < c_in; ++i) center(0, i) += sign(i) / half;
          } else if (s == last_inverse && plus) {
            for (std::size_t o = 0; o < c_out; ++o) {
              for (std::size_t i = 0; i < c_in; ++i) center(o, i) += sign(o) * sign(i) / half;
            }
          } else if (s != last) {
            for (std::size_t o = 0; o < c_out; ++o) center(o, o) += 1.0;
          }
        }
        if (scheme == InitScheme::DctFrame) place_dct_frame(t, s, slots, plus, frame);
      }
      params.push_back(std::move(t));
    }
  }
  return Model(cfg, std::move(q_init), std::move(params));
}

std::size_t Model::param_index(int phase, std::size_t slot) const {
  if (phase < 0 || phase >= cfg_.phases || slot >= slots_per_phase()) {
    throw ContractError("param_index out of range");
  }
  return layout_[static_cast<std::size_t>(phase) * slots_per_phase() + slot];
}

std::vector<std::size_t> Model::theta_indices() const {
  std::vector<std::size_t> out;
  for (int k = 0; k < cfg_.phases; ++k) {
    const std::size_t idx = param_index(k, kTheta);
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

std::size_t Model::trainable_scalars() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

PhaseParams Model::phase(int k) const {
  if (cfg_.variant != Variant::IstaNet) throw ContractError("phase() on an ISTA-Net+ model");
  auto p = [&](std::size_t s) { return params_[param_index(k, s)]; };
  return {p(0), p(1), p(2), p(3), p(4), p(5)};
}

PhasePlusParams Model::plus_phase(int k) const {
  if (cfg_.variant != Variant::IstaNetPlus) throw ContractError("plus_phase() on an ISTA-Net model");
  auto p = [&](std::size_t s) { return params_[param_index(k, s)]; };
  return {p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7)};
}

// ---------------------------------------------------------------------------

BoundModel::BoundModel(Tape& tape, const Model& model, bool trainable) : model_(&model) {
  vars_.reserve(model.parameters().size());
  for (const Tensor& t : model.parameters()) {
    vars_.push_back(trainable ? tape.leaf(t) : tape.constant(t));
  }
}

IstaPhase<Var> BoundModel::phase(int k) const {
  if (model_->variant() != Variant::IstaNet) throw ContractError("phase() on an ISTA-Net+ model");
  auto v = [&](std::size_t s) { return vars_[model_->param_index(k, s)]; };
  return {v(0), v(1), v(2), v(3), v(4), v(5)};
}

IstaPlusPhase<Var> BoundModel::plus_phase(int k) const {
  if (model_->variant() != Variant::IstaNetPlus) {
    throw ContractError("plus_phase() on an ISTA-Net model");
  }
  auto v = [&](std::size_t s) { return vars_[model_->param_index(k, s)]; };
  return {v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7)};
}

// ---------------------------------------------------------------------------

namespace {

Var to_grid(Var v) {
  const auto side = static_cast<std::size_t>(grid_side(static_cast<Eigen::Index>(v.size())));
  return reshape(v, {1, side, side});
}

Var to_vector(Var g) { return reshape(g, {g.size()}); }

}  // namespace

Var r_module(Var x_prev, Var y, const MeasurementMatrix& phi, Var rho) {
  const Var residual = sub(matvec(phi.phi, x_prev), y);
  return sub(x_prev, scale(matvec_transposed(phi.phi, residual), rho));
}

Var conv_relu_conv(Var grid, Var first, Var second) {
  return conv2d_same(relu(conv2d_same(grid, first)), second);
}

Var x_module(Var r, const IstaPhase<Var>& p) {
  const Var features = conv_relu_conv(to_grid(r), p.A, p.B);
  const Var shrunk = soft_threshold(features, p.theta);
  return to_vector(conv_relu_conv(shrunk, p.A_tilde, p.B_tilde));
}

Var x_module_plus(Var r, const IstaPlusPhase<Var>& p) {
  const Var grid = to_grid(r);
  const Var features = conv_relu_conv(conv2d_same(grid, p.D), p.H1, p.H2);
  const Var shrunk = soft_threshold(features, p.theta);
  const Var detail = conv2d_same(conv_relu_conv(shrunk, p.H1_tilde, p.H2_tilde), p.G);
  return to_vector(add(grid, detail));
}

namespace {

void check_inputs(const BoundModel& bm, Var y, const MeasurementMatrix& phi) {
  const Model& m = bm.model();
  if (phi.rows() != m.measurement_size() || phi.cols() != m.signal_size()) {
    throw ConfigError("model expects a " + std::to_string(m.measurement_size()) + "x" +
                      std::to_string(m.signal_size()) + " sampling matrix, got " +
                      std::to_string(phi.rows()) + "x" + std::to_string(phi.cols()));
  }
  if (static_cast<Eigen::Index>(y.size()) != phi.rows()) {
    throw ShapeError("measurement has length " + std::to_string(y.size()) + ", expected " +
                     std::to_string(phi.rows()));
  }
}

}  // namespace

ForwardResult forward(const BoundModel& bm, Var y, const MeasurementMatrix& phi,
                      std::optional<Var> x_true) {
  const Model& m = bm.model();
  if (m.variant() != Variant::IstaNet) throw ContractError("forward() needs an ISTA-Net model");
  check_inputs(bm, y, phi);
  ForwardResult out;
  out.x = matvec(m.q_init().q, y);
  std::optional<Var> true_grid;
  if (x_true) true_grid = to_grid(*x_true);
  for (int k = 0; k < m.phases(); ++k) {
    const IstaPhase<Var> p = bm.phase(k);
    out.x = x_module(r_module(out.x, y, phi, p.rho), p);
    if (true_grid) {
      const Var rt = conv_relu_conv(conv_relu_conv(*true_grid, p.A, p.B), p.A_tilde, p.B_tilde);
      out.symmetry.push_back({rt, *true_grid});
    }
  }
  return out;
}

ForwardResult forward_plus(const BoundModel& bm, Var y, const MeasurementMatrix& phi,
                           std::optional<Var> x_true) {
  const Model& m = bm.model();
  if (m.variant() != Variant::IstaNetPlus) {
    throw ContractError("forward_plus() needs an ISTA-Net+ model");
  }
  check_inputs(bm, y, phi);
  ForwardResult out;
  out.x = matvec(m.q_init().q, y);
  std::optional<Var> true_grid;
  if (x_true) true_grid = to_grid(*x_true);
  for (int k = 0; k < m.phases(); ++k) {
    const IstaPlusPhase<Var> p = bm.plus_phase(k);
    out.x = x_module_plus(r_module(out.x, y, phi, p.rho), p);
    if (true_grid) {
      const Var u = conv2d_same(*true_grid, p.D);
      const Var rt = conv_relu_conv(conv_relu_conv(u, p.H1, p.H2), p.H1_tilde, p.H2_tilde);
      out.symmetry.push_back({rt, u});
    }
  }
  return out;
}

ForwardResult run_model(const BoundModel& bm, Var y, const MeasurementMatrix& phi,
                        std::optional<Var> x_true) {
  return bm.model().variant() == Variant::IstaNet ? forward(bm, y, phi, x_true)
                                                  : forward_plus(bm, y, phi, x_true);
}

Eigen::VectorXd reconstruct_block(const Model& model, const MeasurementMatrix& phi,
                                  const Eigen::VectorXd& y) {
  Tape tape(false);
  const BoundModel bm(tape, model, false);
  const ForwardResult res = run_model(bm, tape.constant(Tensor::from_vector(y)), phi);
  return res.x.value().vec();
}

}  // namespace istanet
