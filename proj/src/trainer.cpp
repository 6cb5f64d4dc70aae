#include "istanet/trainer.hpp"

#include "istanet/errors.hpp"
#include "istanet/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace istanet {

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, std::span<const std::size_t> nonnegative) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: gradient " + std::to_string(i) + " has shape " +
                       shape_string(grads[i].shape()) + ", parameter has " +
                       shape_string(params[i].shape()));
    }
    if (!grads[i].vec().allFinite()) {
      throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                         " at step " + std::to_string(state.step + 1));
    }
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.shape(), 0.0);
      state.v.emplace_back(p.shape(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i].vec().array();
    auto m = state.m[i].vec().array();
    auto v = state.v[i].vec().array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    params[i].vec().array() -= lr * (m / c1) / ((v / c2).sqrt() + state.eps);
  }
  for (std::size_t idx : nonnegative) {
    for (double& e : params.at(idx).values()) e = std::max(e, 0.0);
  }
}

namespace {

struct SamplePass {
  double discrepancy = 0.0;
  double constraint = 0.0;
  std::vector<Tensor> grads;
};

SamplePass run_sample(const Model& model, const MeasurementMatrix& phi, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y, double gamma, double norm, bool with_grads) {
  Tape tape(with_grads);
  const BoundModel bm(tape, model, with_grads);
  const Var xv = tape.constant(Tensor::from_vector(x));
  const Var yv = tape.constant(Tensor::from_vector(y));
  const ForwardResult res = run_model(bm, yv, phi, xv);

  const Var disc = squared_distance(res.x, xv);
  Var cons = tape.constant(Tensor::scalar(0.0));
  for (const SymmetryTerm& term : res.symmetry) {
    cons = add(cons, squared_distance(term.roundtrip, term.target));
  }
  SamplePass out;
  out.discrepancy = disc.value()[0];
  out.constraint = cons.value()[0];
  if (with_grads) {
    const Var total = scale(add(disc, scale(cons, gamma)), norm);
    tape.backward(total);
    out.grads.reserve(bm.vars().size());
    for (const Var& v : bm.vars()) {
      out.grads.push_back(v.grad().size() ? v.grad() : Tensor(v.shape(), 0.0));
    }
  }
  return out;
}

void check_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                 std::span<const Eigen::Index> batch) {
  if (batch.empty()) throw ContractError("loss: empty batch");
  if (x.cols() != y.cols()) throw ShapeError("loss: X and Y have different block counts");
  for (Eigen::Index c : batch) {
    if (c < 0 || c >= x.cols()) throw ContractError("loss: block index out of range");
  }
}

LossAndGradients evaluate_batch(const Model& model, const MeasurementMatrix& phi,
                                const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                std::span<const Eigen::Index> batch, double gamma, int threads,
                                bool with_grads) {
  check_batch(x, y, batch);
  if (!(gamma >= 0.0)) throw DomainError("loss: gamma must be >= 0");
  const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(x.rows()));
  std::vector<SamplePass> passes(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    passes[i] = run_sample(model, phi, x.col(batch[i]), y.col(batch[i]), gamma, norm, with_grads);
  });

  LossAndGradients out;
  double disc = 0.0, cons = 0.0;
  for (const SamplePass& p : passes) {
    disc += p.discrepancy;
    cons += p.constraint;
  }
  out.loss.discrepancy = disc * norm;
  out.loss.constraint = cons * norm;
  out.loss.total = out.loss.discrepancy + gamma * out.loss.constraint;
  if (with_grads) {
    out.grads = std::move(passes.front().grads);
    for (std::size_t i = 1; i < passes.size(); ++i) {
      for (std::size_t j = 0; j < out.grads.size(); ++j) {
        out.grads[j].vec() += passes[i].grads[j].vec();
      }
    }
  }
  return out;
}

}  // namespace

LossValue loss(const Model& model, const MeasurementMatrix& phi, const Eigen::MatrixXd& x,
               const Eigen::MatrixXd& y, std::span<const Eigen::Index> batch, double gamma) {
  return evaluate_batch(model, phi, x, y, batch, gamma, 1, false).loss;
}

LossAndGradients loss_and_gradients(const Model& model, const MeasurementMatrix& phi,
                                    const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    std::span<const Eigen::Index> batch, double gamma,
                                    int threads) {
  return evaluate_batch(model, phi, x, y, batch, gamma, threads, true);
}

void split_blocks(Eigen::Index count, double holdout_fraction, std::uint64_t seed,
                  std::vector<Eigen::Index>& train, std::vector<Eigen::Index>& holdout) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in [0, 1)");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t held = 0;
  if (count >= 2) {
    held = static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(count)));
    held = std::min(held, static_cast<std::size_t>(count - 1));
  }
  holdout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  train.assign(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
}

double pooled_block_psnr(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& reconstructed) {
  if (reference.rows() != reconstructed.rows() || reference.cols() != reconstructed.cols()) {
    throw ShapeError("pooled_block_psnr: shape mismatch");
  }
  if (reference.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const double mse =
      (reconstructed.cwiseMax(0.0).cwiseMin(1.0) - reference).squaredNorm() /
      static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Eigen::MatrixXd reconstruct_blocks(const Model& model, const MeasurementMatrix& phi,
                                   const Eigen::MatrixXd& y, std::span<const Eigen::Index> cols,
                                   int threads) {
  Eigen::MatrixXd out(model.signal_size(), static_cast<Eigen::Index>(cols.size()));
  parallel_for(cols.size(), threads, [&](std::size_t i) {
    out.col(static_cast<Eigen::Index>(i)) = reconstruct_block(model, phi, y.col(cols[i]));
  });
  return out;
}

double symmetry_residual(const Model& model, const MeasurementMatrix& phi,
                         const Eigen::MatrixXd& x, std::span<const Eigen::Index> cols) {
  if (cols.empty() || model.phases() == 0) return 0.0;
  double acc = 0.0;
  std::size_t terms = 0;
  for (Eigen::Index c : cols) {
    Tape tape(false);
    const BoundModel bm(tape, model, false);
    const Eigen::VectorXd xc = x.col(c);
    const Var xv = tape.constant(Tensor::from_vector(xc));
    const Var yv = tape.constant(Tensor::from_vector(phi.phi * xc));
    const ForwardResult res = run_model(bm, yv, phi, xv);
    for (const SymmetryTerm& t : res.symmetry) {
      const double denom = t.target.value().vec().squaredNorm();
      const double num = (t.roundtrip.value().vec() - t.target.value().vec()).squaredNorm();
      acc += denom > 0.0 ? num / denom : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      ++terms;
    }
  }
  return acc / static_cast<double>(terms);
}

namespace {

void check_data(const DataSet& data, const MeasurementMatrix& phi) {
  if (data.x.rows() != phi.cols() || data.y.rows() != phi.rows() ||
      data.x.cols() != data.y.cols()) {
    throw ConfigError("dataset (N=" + std::to_string(data.x.rows()) +
                      ", M=" + std::to_string(data.y.rows()) +
                      ") does not match the sampling matrix (" + std::to_string(phi.rows()) +
                      "x" + std::to_string(phi.cols()) + ")");
  }
  if (data.block_count() == 0) throw ConfigError("dataset is empty");
  // Spot-check that Y was produced by this phi.
  const Eigen::Index step = std::max<Eigen::Index>(1, data.block_count() / 8);
  for (Eigen::Index c = 0; c < data.block_count(); c += step) {
    const Eigen::VectorXd diff = phi.phi * data.x.col(c) - data.y.col(c);
    if (diff.norm() > 1e-9 * std::max(1.0, data.y.col(c).norm())) {
      throw ConfigError("dataset measurements were not produced by this sampling matrix");
    }
  }
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const Eigen::Index> cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DataSet& data, const MeasurementMatrix& phi,
                  const EpochCallback& on_epoch) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(cfg.gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (cfg.model.phases < 1) throw ConfigError("training needs at least one phase");
  check_data(data, phi);

  std::vector<Eigen::Index> train_idx, holdout_idx;
  split_blocks(data.block_count(), cfg.holdout_fraction, cfg.seed + 2, train_idx, holdout_idx);
  const Eigen::MatrixXd x_train = gather(data.x, train_idx);
  const Eigen::MatrixXd y_train = gather(data.y, train_idx);

  TrainResult result{
      Model::initialize(cfg.model, compute_qinit(x_train, y_train), cfg.seed, cfg.init,
                        cfg.init_noise),
      {}, train_idx, holdout_idx};
  Model& model = result.model;
  const std::vector<std::size_t> thetas = model.theta_indices();
  const Eigen::MatrixXd x_hold = gather(data.x, holdout_idx);

  AdamState adam;
  std::mt19937_64 shuffle_rng(cfg.seed + 1);
  std::vector<Eigen::Index> order(train_idx.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics em;
    em.epoch = epoch;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const Eigen::Index> batch(order.data() + b, e - b);
      LossAndGradients lg =
          loss_and_gradients(model, phi, x_train, y_train, batch, cfg.gamma, cfg.threads);
      adam_step(model.parameters(), lg.grads, adam, cfg.learning_rate, thetas);
      const double w = static_cast<double>(e - b);
      em.total_loss += lg.loss.total * w;
      em.discrepancy += lg.loss.discrepancy * w;
      em.constraint += lg.loss.constraint * w;
    }
    const double n = static_cast<double>(order.size());
    em.total_loss /= n;
    em.discrepancy /= n;
    em.constraint /= n;
    em.holdout_psnr_db = holdout_idx.empty()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : pooled_block_psnr(x_hold, reconstruct_blocks(model, phi, data.y,
                                                                            holdout_idx,
                                                                            cfg.threads));
    em.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(em);
    if (on_epoch) on_epoch(em);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        epoch % cfg.checkpoint_every == 0) {
      save_model(cfg.checkpoint_path, model);
    }
  }
  if (!cfg.checkpoint_path.empty()) save_model(cfg.checkpoint_path, model);
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log, bool with_wall_time) {
  std::ostringstream os;
  os << "epoch,total_loss,discrepancy,constraint,holdout_psnr_db";
  if (with_wall_time) os << ",wall_seconds";
  os << '\n' << std::setprecision(17);
  for (const EpochMetrics& m : log) {
    os << m.epoch << ',' << m.total_loss << ',' << m.discrepancy << ',' << m.constraint << ','
       << m.holdout_psnr_db;
    if (with_wall_time) os << ',' << std::setprecision(6) << m.wall_seconds << std::setprecision(17);
    os << '\n';
  }
  return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << metrics_csv(log);
}

}  // namespace istanet
