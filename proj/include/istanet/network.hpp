#pragma once

#include "istanet/sampling.hpp"
#include "istanet/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace istanet {

enum class Variant : std::uint8_t { IstaNet = 0, IstaNetPlus = 1 };

// Which parameter kinds are physically shared by every phase.
enum class Tying : std::uint8_t {
  Unshared = 0,
  ShareTransform = 1,       // transforms shared, rho/theta per phase
  ShareRhoTransform = 2,    // rho and transforms shared
  ShareThetaTransform = 3,  // theta and transforms shared
  ShareAll = 4,             // rho, theta and transforms shared
};

// How convolution filters are drawn at initialization. rho starts at 1 and
// theta at 0.01 under every scheme.
enum class InitScheme : std::uint8_t {
  // Signed center taps make the backward transform an exact left inverse of
  // the forward one (and the residual branch zero for ISTA-Net+), plus
  // Xavier-scaled Gaussian noise times `init_noise`.
  Identity = 0,
  Xavier = 1,  // N(0, 2 / (9 C_in + 9 C_out))
  He = 2,      // N(0, 2 / (9 C_in))
  // The first conv holds the 3x3 DCT basis (DC, then +/- pairs of AC
  // filters by increasing frequency), inner convs are identities and the
  // backward transform is the overlap-averaged synthesis. A phase starts
  // out as one ISTA step in a local DCT frame. Same noise as Identity.
  DctFrame = 3,
};

std::string to_string(Variant v);
std::string to_string(Tying t);
std::string to_string(InitScheme s);
Variant parse_variant(const std::string& s);  // "istanet" | "istanet+"
Tying parse_tying(const std::string& s);
InitScheme parse_init_scheme(const std::string& s);

// Per-phase learnables of ISTA-Net: F = B * ReLU(A * x), F~ = B~ * ReLU(A~ * z).
template <class T>
struct IstaPhase {
  T rho, theta;
  T A;        // [N_f, 1, 3, 3]
  T B;        // [N_f, N_f, 3, 3]
  T A_tilde;  // [N_f, N_f, 3, 3]
  T B_tilde;  // [1, N_f, 3, 3]
};

// Per-phase learnables of ISTA-Net+: H = H2 * ReLU(H1 * .), same for H~.
template <class T>
struct IstaPlusPhase {
  T rho, theta;
  T D;         // [N_f, 1, 3, 3]
  T H1, H2;    // [N_f, N_f, 3, 3]
  T H1_tilde, H2_tilde;
  T G;         // [1, N_f, 3, 3]
};

using PhaseParams = IstaPhase<Tensor>;
using PhasePlusParams = IstaPlusPhase<Tensor>;

struct ModelConfig {
  Variant variant = Variant::IstaNet;
  int phases = 9;
  int filters = 32;
  Tying tying = Tying::Unshared;
};

class Model {
 public:
  // Slot order within a phase; matches the member order of the phase structs.
  static constexpr std::size_t kRho = 0;
  static constexpr std::size_t kTheta = 1;

  Model(ModelConfig cfg, QInit q_init, std::vector<Tensor> parameters);

  static Model initialize(const ModelConfig& cfg, QInit q_init, std::uint64_t seed,
                          InitScheme scheme = InitScheme::Identity, double init_noise = 0.1);

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return cfg_.variant; }
  int phases() const { return cfg_.phases; }
  int filters() const { return cfg_.filters; }
  Tying tying() const { return cfg_.tying; }

  const QInit& q_init() const { return q_init_; }
  Eigen::Index signal_size() const { return q_init_.q.rows(); }        // N
  Eigen::Index measurement_size() const { return q_init_.q.cols(); }   // M

  // Physical (deduplicated) parameter arrays in checkpoint order.
  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }

  std::size_t slots_per_phase() const;
  // Physical index backing slot `slot` of phase `phase`.
  std::size_t param_index(int phase, std::size_t slot) const;
  // Physical indices of threshold parameters (kept >= 0 while training).
  std::vector<std::size_t> theta_indices() const;

  std::size_t trainable_scalars() const;

  PhaseParams phase(int k) const;
  PhasePlusParams plus_phase(int k) const;

  static std::vector<Shape> slot_shapes(Variant v, int filters);
  // True when `slot` is shared across phases under `tying`.
  static bool slot_shared(Tying tying, std::size_t slot);

 private:
  ModelConfig cfg_;
  QInit q_init_;
  std::vector<Tensor> params_;
  std::vector<std::size_t> layout_;  // phase * slots + slot -> physical index
};

// Physical parameters of a model recorded on one tape.
class BoundModel {
 public:
  // trainable == false records the parameters as constants.
  BoundModel(Tape& tape, const Model& model, bool trainable = true);

  const Model& model() const { return *model_; }
  const std::vector<Var>& vars() const { return vars_; }
  IstaPhase<Var> phase(int k) const;
  IstaPlusPhase<Var> plus_phase(int k) const;

 private:
  const Model* model_;
  std::vector<Var> vars_;
};

// r = x_prev - rho * phi^T (phi x_prev - y)
Var r_module(Var x_prev, Var y, const MeasurementMatrix& phi, Var rho);

// second * ReLU(first * grid)
Var conv_relu_conv(Var grid, Var first, Var second);

// x = F~(soft(F(r), theta)); r is a length-N vector, N a perfect square.
Var x_module(Var r, const IstaPhase<Var>& p);
// x = r + G(H~(soft(H(D(r)), theta)))
Var x_module_plus(Var r, const IstaPlusPhase<Var>& p);

// One symmetry-constraint term: ||roundtrip - target||^2 is penalized.
// ISTA-Net: roundtrip = F~(F(x)), target = x (image domain).
// ISTA-Net+: roundtrip = H~(H(D(x))), target = D(x) (feature domain).
struct SymmetryTerm {
  Var roundtrip;
  Var target;
};

struct ForwardResult {
  Var x;                              // x^(N_p), length N
  std::vector<SymmetryTerm> symmetry;  // one per phase when x_true was given
};

// x^(0) = Q_init y, then N_p phases. When x_true is bound, also records the
// per-phase symmetry terms on that block.
ForwardResult forward(const BoundModel& bm, Var y, const MeasurementMatrix& phi,
                      std::optional<Var> x_true = std::nullopt);
ForwardResult forward_plus(const BoundModel& bm, Var y, const MeasurementMatrix& phi,
                           std::optional<Var> x_true = std::nullopt);
// Dispatches on the model variant.
ForwardResult run_model(const BoundModel& bm, Var y, const MeasurementMatrix& phi,
                        std::optional<Var> x_true = std::nullopt);

// Inference convenience: reconstruct one block from its measurement.
Eigen::VectorXd reconstruct_block(const Model& model, const MeasurementMatrix& phi,
                                  const Eigen::VectorXd& y);

// Checkpoint: "ISTN" | version u32 | variant u8 | N_p u32 | N_f u32 | M u32 |
// N u32 | tying u8 | Q_init (N x M row-major) | physical parameters in
// per-phase declaration order, tied repeats omitted.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace istanet
