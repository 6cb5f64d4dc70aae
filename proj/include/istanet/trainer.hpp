#pragma once

#include "istanet/network.hpp"
#include "istanet/sampling.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace istanet {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 200;
  int batch_size = 64;
  double gamma = 0.01;
  std::uint64_t seed = 0;
  ModelConfig model;
  InitScheme init = InitScheme::DctFrame;
  double init_noise = 0.1;
  double holdout_fraction = 0.05;
  int threads = 1;
  // Write `checkpoint_path` every this many epochs (0: only at the end).
  int checkpoint_every = 0;
  std::string checkpoint_path;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m, v;
};

// One bias-corrected Adam update in place. Parameters listed in `nonnegative`
// are clamped to [0, inf) afterwards. NaN/Inf gradients raise NumericError.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, std::span<const std::size_t> nonnegative = {});

struct LossValue {
  double total = 0.0;
  double discrepancy = 0.0;
  double constraint = 0.0;
};

struct LossAndGradients {
  LossValue loss;
  std::vector<Tensor> grads;  // aligned with model.parameters()
};

// Composite loss over the columns `batch` of (X, Y):
//   discrepancy = sum_i ||x_i^(N_p) - x_i||^2 / (N_b N)
//   constraint  = sum_i sum_k ||roundtrip_k(x_i) - target_k||^2 / (N_b N)
//   total       = discrepancy + gamma * constraint
LossValue loss(const Model& model, const MeasurementMatrix& phi, const Eigen::MatrixXd& x,
               const Eigen::MatrixXd& y, std::span<const Eigen::Index> batch, double gamma);

// Same plus gradients w.r.t. every physical parameter. Per-block work may be
// spread over `threads`; the reduction runs in block order so the result
// does not depend on the thread count.
LossAndGradients loss_and_gradients(const Model& model, const MeasurementMatrix& phi,
                                    const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                    std::span<const Eigen::Index> batch, double gamma,
                                    int threads = 1);

struct EpochMetrics {
  int epoch = 0;
  double total_loss = 0.0;
  double discrepancy = 0.0;
  double constraint = 0.0;
  double holdout_psnr_db = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> log;
  std::vector<Eigen::Index> train_blocks;
  std::vector<Eigen::Index> holdout_blocks;
};

// Seeded split of block indices: the first ceil(fraction * N_b) of a random
// permutation are held out (none when N_b < 2).
void split_blocks(Eigen::Index count, double holdout_fraction, std::uint64_t seed,
                  std::vector<Eigen::Index>& train, std::vector<Eigen::Index>& holdout);

// PSNR of reconstructions (columns, clipped to [0, 1]) against references on
// a unit peak, pooled over every pixel of the selected blocks.
double pooled_block_psnr(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& reconstructed);

// Reconstruct selected columns of Y with the model.
Eigen::MatrixXd reconstruct_blocks(const Model& model, const MeasurementMatrix& phi,
                                   const Eigen::MatrixXd& y, std::span<const Eigen::Index> cols,
                                   int threads = 1);

// Mean over blocks and phases of ||roundtrip - target||^2 / ||target||^2.
double symmetry_residual(const Model& model, const MeasurementMatrix& phi,
                         const Eigen::MatrixXd& x, std::span<const Eigen::Index> cols);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Q_init is fitted on the training split only. Epoch 0 means no update.
TrainResult train(const TrainConfig& cfg, const DataSet& data, const MeasurementMatrix& phi,
                  const EpochCallback& on_epoch = {});

// Columns: epoch,total_loss,discrepancy,constraint,holdout_psnr_db,wall_seconds
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log);
std::string metrics_csv(const std::vector<EpochMetrics>& log, bool with_wall_time = true);

}  // namespace istanet
