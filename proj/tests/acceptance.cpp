// Acceptance gate: one PASS/FAIL line per criterion.
//   acceptance --fast                          criteria 1-5 and 9-11
//   acceptance --desk --corpus DIR --work DIR  criteria 6, 7, 8 and 12
// Exit status is nonzero when any hard criterion fails.
#include "support.hpp"

#include "istanet/evaluator.hpp"
#include "istanet/image.hpp"
#include "istanet/ista.hpp"
#include "istanet/network.hpp"
#include "istanet/sampling.hpp"
#include "istanet/theorem.hpp"
#include "istanet/trainer.hpp"

#include <chrono>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

using namespace istanet;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << title << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void flag(int id, const std::string& title, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FLAG") << "  criterion " << id << "  " << title << " (soft): " << detail
            << std::endl;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string db(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f dB", v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  std::string tag() const { return " [" + sci(seconds()) + " s]"; }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---------------------------------------------------------------- fast

void gradient_integrity() {
  const Stopwatch sw;
  constexpr Eigen::Index n = 81, m = 20, blocks = 3;
  const MeasurementMatrix phi = gen_measurement_matrix(m, n, 31);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> pix(0.0, 1.0);
  Eigen::MatrixXd x(n, blocks);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = pix(rng);
  const Eigen::MatrixXd y = phi.phi * x;
  std::vector<Eigen::Index> batch(blocks);
  std::iota(batch.begin(), batch.end(), 0);
  const double gamma = 0.01, h = 1e-6;

  std::string detail;
  bool ok = true;
  for (Variant v : {Variant::IstaNet, Variant::IstaNetPlus}) {
    Model model = Model::initialize({v, 2, 4, Tying::Unshared}, {testing::random_matrix(n, m, rng) * 0.1},
                                    rng(), InitScheme::He);
    std::uniform_real_distribution<double> rho(0.6, 1.2), theta(0.02, 0.08);
    for (int k = 0; k < 2; ++k) {
      model.parameters()[model.param_index(k, Model::kRho)][0] = rho(rng);
      model.parameters()[model.param_index(k, Model::kTheta)][0] = theta(rng);
    }
    const LossAndGradients lg = loss_and_gradients(model, phi, x, y, batch, gamma);
    double worst = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < model.parameters().size(); ++p) {
      for (std::size_t i = 0; i < model.parameters()[p].size(); ++i, ++count) {
        double& w = model.parameters()[p][i];
        const double w0 = w;
        w = w0 + h;
        const double up = loss(model, phi, x, y, batch, gamma).total;
        w = w0 - h;
        const double down = loss(model, phi, x, y, batch, gamma).total;
        w = w0;
        worst = std::max(worst, testing::relative_error(lg.grads[p][i], (up - down) / (2 * h)));
      }
    }
    ok = ok && worst < 1e-4;
    detail += to_string(v) + " max rel err " + sci(worst) + " over " + std::to_string(count) + " params; ";
  }
  report(1, "gradient integrity", ok, detail + "limit 1e-4" + sw.tag());
}

void orthogonality() {
  const Stopwatch sw;
  double worst = 0.0;
  for (double r : {0.01, 0.04, 0.10, 0.25, 0.30, 0.40, 0.50}) {
    const Eigen::Index m = measurements_for_ratio(r, kBlockPixels);
    const MeasurementMatrix mm = gen_measurement_matrix(m, kBlockPixels, 7);
    const Eigen::MatrixXd gram = mm.phi * mm.phi.transpose() - Eigen::MatrixXd::Identity(m, m);
    worst = std::max(worst, gram.cwiseAbs().maxCoeff());
  }
  report(2, "sampling orthogonality", worst < 1e-10, "max |phi phi^T - I| " + sci(worst) + " over 7 ratios, limit 1e-10" + sw.tag());
}

void qinit_optimality() {
  const Stopwatch sw;
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd x = testing::random_matrix(kBlockPixels, 500, rng);
  const Eigen::MatrixXd y = testing::random_matrix(272, 500, rng);
  const QInit q = compute_qinit(x, y);
  const double stationarity =
      ((q.q * y - x) * y.transpose()).cwiseAbs().maxCoeff() / (x * y.transpose()).cwiseAbs().maxCoeff();

  const MeasurementMatrix square = gen_measurement_matrix(kBlockPixels, kBlockPixels, 42);
  const Eigen::MatrixXd xs = testing::random_matrix(kBlockPixels, 1200, rng);
  const double gap = (compute_qinit(xs, square.phi * xs).q - square.phi.transpose()).cwiseAbs().maxCoeff();
  report(3, "Q_init optimality", stationarity < 1e-8 && gap < 1e-8,
         "stationarity " + sci(stationarity) + ", square |Q - phi^T| " + sci(gap) + ", limit 1e-8" + sw.tag());
}

void ista_correctness() {
  const Stopwatch sw;
  std::mt19937_64 rng(6);
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(64);
  std::uniform_int_distribution<int> pick(0, 63);
  std::normal_distribution<double> nd;
  for (int placed = 0; placed < 5;) {
    const int j = pick(rng);
    if (coeffs(j) != 0.0) continue;
    coeffs(j) = (nd(rng) > 0 ? 1.0 : -1.0) * (1.0 + std::abs(nd(rng)));
    ++placed;
  }
  const Eigen::VectorXd xs = Dct2Transform(8).inverse(coeffs);
  const MeasurementMatrix mm = gen_measurement_matrix(32, 64, 12);
  IstaConfig cfg;
  cfg.lambda = 6e-3;
  cfg.rho = 1.0;
  cfg.max_iters = 500;
  cfg.tol = 0.0;
  const IstaResult res = ista_solve(mm.phi * xs, mm, cfg);
  const double rel = (res.x - xs).norm() / xs.norm();
  double rise = -INFINITY;
  for (std::size_t k = 1; k < res.objective.size(); ++k) rise = std::max(rise, res.objective[k] - res.objective[k - 1]);
  report(4, "classical ISTA", rel < 1e-2 && rise <= 1e-10 && res.iterations == 500,
         "relative error " + sci(rel) + " (limit 1e-2, lambda 6e-3), largest objective step " + sci(rise) +
             " (limit 1e-10)" + sw.tag());
}

void prox_optimality() {
  const Stopwatch sw;
  std::mt19937_64 rng(4);
  const Dct2Transform dct(10);
  const double lam = 0.2;
  double worst = 0.0;
  int checked = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd r = testing::random_matrix(100, 1, rng) * 0.5;
    const Eigen::VectorXd wr = dct.forward(r);
    const Eigen::VectorXd c = dct.forward(prox_orthogonal(r, lam, dct));
    for (Eigen::Index j = 0; j < 100; ++j, ++checked) {
      // 0 in c - Wr + lam * subdifferential of |c|
      const double viol = std::abs(c(j)) > 1e-12 ? std::abs(wr(j) - c(j) - lam * (c(j) > 0 ? 1 : -1))
                                                 : std::max(0.0, std::abs(wr(j)) - lam);
      worst = std::max(worst, viol);
    }
  }
  report(5, "prox optimality", worst < 1e-10 && checked == 1000,
         std::to_string(checked) + " coefficients, worst violation " + sci(worst) + ", limit 1e-10" + sw.tag());
}

void variance_identity() {
  const Stopwatch sw;
  bool ok = true;
  double worst_gap = 0.0;
  for (int p = 0; p < 5; ++p) {
    VarianceProbe probe = random_probe(8, 6, 5, 500 + static_cast<std::uint64_t>(p));
    probe.samples = 1'000'000;
    run_probe(probe, 900 + 10 * static_cast<std::uint64_t>(p));
    ok = ok && probe.sigmas == std::vector<double>{0.5, 1.0, 2.0} && probe.sigma_invariant(0.02, 4.0);
    worst_gap = std::max(worst_gap, probe.max_relative_gap());
  }
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const RatioEstimate e = theorem1_ratio(one, one, 1.0, 1'000'000, 77);
  const double exact = 0.5 - 1.0 / (2.0 * M_PI);
  const double z = std::abs(e.alpha - exact) / e.std_error;
  report(9, "ReLU variance ratio", ok && z < 3.0,
         "5 probes sigma-invariant, largest gap " + sci(worst_gap * 100) + "%; scalar alpha " + sci(e.alpha) +
             " vs " + sci(exact) + " (" + sci(z) + " SE, limit 3)" + sw.tag());
}

void parameter_accounting() {
  const QInit q{Eigen::MatrixXd::Zero(kBlockPixels, 1)};
  const std::size_t shared = Model::initialize({Variant::IstaNetPlus, 9, 32, Tying::ShareAll}, q, 0).trainable_scalars();
  const std::size_t unshared = Model::initialize({Variant::IstaNetPlus, 9, 32, Tying::Unshared}, q, 0).trainable_scalars();
  report(10, "parameter accounting", shared == 37442 && unshared == 336978,
         "share-all " + std::to_string(shared) + " (want 37442), unshared " + std::to_string(unshared) +
             " (want 336978)");
}

void serialization() {
  const Stopwatch sw;
  testing::TempDir dir("accept_ckpt");
  const MeasurementMatrix mm = gen_measurement_matrix(272, kBlockPixels, 5);
  std::mt19937_64 rng(8);
  const Eigen::VectorXd y = testing::random_matrix(272, 1, rng) * 0.3;
  bool ok = true;
  for (Variant v : {Variant::IstaNet, Variant::IstaNetPlus}) {
    const Model m = Model::initialize({v, 3, 8, Tying::Unshared}, {mm.phi.transpose()}, 9, InitScheme::He);
    save_model(dir.file("a.istn"), m);
    const Model back = load_model(dir.file("a.istn"));
    save_model(dir.file("b.istn"), back);
    const Eigen::VectorXd out = reconstruct_block(m, mm, y), out_back = reconstruct_block(back, mm, y);
    ok = ok && slurp(dir.file("a.istn")) == slurp(dir.file("b.istn")) &&
         std::memcmp(out.data(), out_back.data(), sizeof(double) * static_cast<std::size_t>(out.size())) == 0;
  }
  report(11, "serialization round trip", ok, "save -> load -> forward bit-identical for both variants" + sw.tag());
}

// ---------------------------------------------------------------- desk

struct DeskRun {
  TrainResult result;
  std::string checkpoint;
  std::string metrics;
};

DeskRun desk_train(const TrainConfig& cfg, const DataSet& ds, const MeasurementMatrix& mm,
                   const std::string& name, const std::filesystem::path& work) {
  const Stopwatch sw;
  std::cerr << "training " << name << '\n';
  DeskRun run{train(cfg, ds, mm, [&](const EpochMetrics& m) {
                std::cerr << "  " << name << " epoch " << m.epoch << " loss " << m.total_loss << " holdout "
                          << m.holdout_psnr_db << " dB (" << m.wall_seconds << " s)\n";
              }),
              (work / (name + ".istn")).string(), (work / (name + ".csv")).string()};
  save_model(run.checkpoint, run.result.model);
  write_metrics_csv(run.metrics, run.result.log);
  std::cerr << "  " << name << " done in " << sw.seconds() << " s\n";
  return run;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

int desk(const std::string& corpus, const std::filesystem::path& work) {
  std::filesystem::create_directories(work);
  const auto files = list_images(corpus);
  if (files.size() < 10) {
    std::cerr << "need at least 10 images in " << corpus << ", found " << files.size() << '\n';
    return 2;
  }
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_pnm(f));

  // 2,000 training blocks plus 100 held out.
  constexpr std::size_t kTrain = 2000, kHeld = 100;
  const MeasurementMatrix mm = gen_measurement_matrix(measurements_for_ratio(0.25, kBlockPixels), kBlockPixels, 1);
  const DataSet ds =
      make_dataset(mm, [&] {
        const auto blocks = random_blocks(images, kTrain + kHeld, kBlockSize, 2);
        Eigen::MatrixXd x(kBlockPixels, static_cast<Eigen::Index>(blocks.size()));
        for (std::size_t j = 0; j < blocks.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = blocks[j] / 255.0;
        return x;
      }(), false);

  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.epochs = 60;
  cfg.batch_size = 64;
  cfg.gamma = 0.01;
  cfg.seed = 3;
  cfg.model = {Variant::IstaNet, 5, 16, Tying::Unshared};
  cfg.holdout_fraction = 0.0476;  // ceil(0.0476 * 2100) = 100

  const DeskRun plain = desk_train(cfg, ds, mm, "istanet", work);
  const auto& held = plain.result.holdout_blocks;
  if (plain.result.train_blocks.size() != kTrain || held.size() != kHeld) {
    std::cerr << "unexpected split " << plain.result.train_blocks.size() << "/" << held.size() << '\n';
    return 2;
  }
  const Eigen::MatrixXd x_held = columns(ds.x, held), y_held = columns(ds.y, held);

  const double net_db = pooled_block_psnr(x_held, reconstruct_blocks(plain.result.model, mm, ds.y, held));
  const double qinit_db = pooled_block_psnr(x_held, plain.result.model.q_init().q * y_held);
  IstaConfig ista;
  ista.lambda = 0.01;
  ista.max_iters = 200;
  ista.tol = 0.0;
  Eigen::MatrixXd x_ista(x_held.rows(), x_held.cols());
  for (Eigen::Index j = 0; j < y_held.cols(); ++j) x_ista.col(j) = ista_solve(y_held.col(j), mm, ista).x;
  const double ista_db = pooled_block_psnr(x_held, x_ista);
  report(6, "desk-scale training lift", net_db >= qinit_db + 1.5 && net_db >= ista_db + 0.5,
         "ISTA-Net " + db(net_db) + ", Q_init " + db(qinit_db) + " (need +1.5), ISTA " + db(ista_db) +
             " (need +0.5)");

  const double residual = symmetry_residual(plain.result.model, mm, ds.x, held);
  report(8, "symmetry constraint", residual < 0.05, "mean held-out round-trip residual " + sci(residual) + ", limit 0.05");

  TrainConfig plus_cfg = cfg;
  plus_cfg.model.variant = Variant::IstaNetPlus;
  const DeskRun plus = desk_train(plus_cfg, ds, mm, "istanet_plus", work);
  const double plus_db = pooled_block_psnr(x_held, reconstruct_blocks(plus.result.model, mm, ds.y, held));
  report(7, "ISTA-Net+ vs ISTA-Net", plus_db >= net_db - 0.3,
         "ISTA-Net+ " + db(plus_db) + " vs ISTA-Net " + db(net_db) + " (allowed -0.3 dB)");
  const double plus30 = plus.result.log.at(29).total_loss, plain30 = plain.result.log.at(29).total_loss;
  flag(7, "epoch-30 training loss", plus30 <= plain30,
       "ISTA-Net+ " + sci(plus30) + " vs ISTA-Net " + sci(plain30));

  const DeskRun again = desk_train(cfg, ds, mm, "istanet_repeat", work);
  const bool same_ckpt = slurp(plain.checkpoint) == slurp(again.checkpoint);
  const bool same_csv = metrics_csv(plain.result.log, false) == metrics_csv(again.result.log, false);
  report(12, "determinism", same_ckpt && same_csv,
         std::string("checkpoint ") + (same_ckpt ? "identical" : "differs") + ", metrics CSV " +
             (same_csv ? "identical" : "differs") + " (wall-clock column excluded)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  bool fast = false, desk_mode = false;
  std::string corpus = "tests/data/corpus", work = "desk_run";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--fast") fast = true;
    else if (a == "--desk") desk_mode = true;
    else if (a == "--corpus" && i + 1 < argc) corpus = argv[++i];
    else if (a == "--work" && i + 1 < argc) work = argv[++i];
    else {
      std::cerr << "usage: acceptance [--fast] [--desk [--corpus DIR] [--work DIR]]\n";
      return 2;
    }
  }
  if (!fast && !desk_mode) fast = true;
  if (fast) {
    gradient_integrity();
    orthogonality();
    qinit_optimality();
    ista_correctness();
    prox_optimality();
    variance_identity();
    parameter_accounting();
    serialization();
  }
  if (desk_mode) {
    const int code = desk(corpus, work);
    if (code != 0) return code;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
