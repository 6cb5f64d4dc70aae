#include "cli.hpp"

#include "istanet/errors.hpp"
#include "istanet/evaluator.hpp"
#include "istanet/ista.hpp"
#include "istanet/network.hpp"
#include "istanet/sampling.hpp"
#include "istanet/theorem.hpp"
#include "istanet/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace istanet::cli {

namespace {

std::uint64_t env_seed() {
  if (const char* s = std::getenv("ISTANET_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("ISTANET_SEED is not an unsigned integer: ") + s);
    }
  }
  return 0;
}

int env_threads() {
  if (const char* s = std::getenv("ISTANET_THREADS")) {
    try {
      const int t = std::stoi(s);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("ISTANET_THREADS must be a positive integer: ") + s);
  }
  return 1;
}

const CLI::Validator kRatio(
    [](std::string& s) -> std::string {
      double r = 0;
      try {
        r = std::stod(s);
      } catch (const std::exception&) {
        return "not a number: " + s;
      }
      if (!(r > 0.0 && r <= 1.0)) return "CS ratio must lie in (0, 1], got " + s;
      return {};
    },
    "RATIO in (0,1]");

std::string fmt_db(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& cols) {
  Eigen::MatrixXd m(cols.empty() ? 0 : cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = cols[i];
  return m;
}

void check_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw ConfigError("output directory does not exist: " + parent.string());
  }
}

struct Options {
  // shared
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
  std::string phi;
  // gen-phi
  double ratio = 0.25;
  long n = kBlockPixels;
  // prepare
  std::string images;
  long blocks = 2000;
  bool no_qinit = false;
  // train
  std::string data;
  std::string variant = "istanet";
  int phases = 9;
  int filters = 32;
  std::string tying = "unshared";
  int epochs = 200;
  int batch = 64;
  double lr = 1e-4;
  double gamma = 0.01;
  std::string init = "dct";
  double init_noise = 0.1;
  double holdout = 0.05;
  std::string metrics;
  int checkpoint_every = 0;
  // reconstruct / baseline-ista
  std::string model;
  std::string image;
  std::string reference;
  double lambda = 0.01;
  int iters = 200;
  // eval
  std::string methods = "istanet,istanet+";
  std::vector<double> ratios{0.25};
  std::string corpus;
  std::string dir;
  // check-theorem1
  long samples = 1'000'000;
  int probes = 5;
};

void gen_phi(const Options& o, std::ostream& out) {
  check_output(o.out);
  const Eigen::Index m = measurements_for_ratio(o.ratio, o.n);
  const MeasurementMatrix mm = gen_measurement_matrix(m, o.n, o.seed);
  save_measurement_matrix(o.out, mm);
  out << "wrote " << o.out << ": M=" << m << " N=" << o.n << " seed=" << o.seed << '\n';
}

void prepare(const Options& o, std::ostream& out) {
  check_output(o.out);
  const auto files = list_images(o.images);
  if (files.empty()) throw InputError("no .pgm/.ppm images in " + o.images);
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_pnm(f));
  const MeasurementMatrix mm = load_measurement_matrix(o.phi);
  if (mm.cols() != kBlockPixels) {
    throw ConfigError(o.phi + " has N=" + std::to_string(mm.cols()) + ", blocks need " +
                      std::to_string(kBlockPixels));
  }
  Eigen::MatrixXd x =
      stack(random_blocks(images, static_cast<std::size_t>(o.blocks), kBlockSize, o.seed)) / 255.0;
  // The least-squares initializer is only determined with at least M blocks.
  const bool with_q = !o.no_qinit && x.cols() >= mm.rows();
  const DataSet ds = make_dataset(mm, std::move(x), with_q);
  save_dataset(o.out, ds);
  out << "wrote " << o.out << ": " << ds.block_count() << " blocks from " << files.size()
      << " images, M=" << mm.rows() << (with_q ? ", Q_init embedded" : ", no Q_init") << '\n';
}

void train_cmd(const Options& o, std::ostream& out) {
  check_output(o.out);
  if (!o.metrics.empty()) check_output(o.metrics);
  const DataSet ds = load_dataset(o.data);
  const MeasurementMatrix mm = load_measurement_matrix(o.phi);
  if (ds.y.rows() != mm.rows() || ds.x.rows() != mm.cols()) {
    throw ConfigError(o.data + " was prepared for M=" + std::to_string(ds.y.rows()) + ", but " +
                      o.phi + " has M=" + std::to_string(mm.rows()) +
                      " (use the sampling matrix the dataset was prepared with)");
  }
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.gamma = o.gamma;
  cfg.seed = o.seed;
  cfg.model = {parse_variant(o.variant), o.phases, o.filters, parse_tying(o.tying)};
  cfg.init = parse_init_scheme(o.init);
  cfg.init_noise = o.init_noise;
  cfg.holdout_fraction = o.holdout;
  cfg.threads = o.threads;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.checkpoint_path = o.out;
  const TrainResult res = train(cfg, ds, mm, [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << " loss " << std::setprecision(6) << m.total_loss
        << " constraint " << m.constraint << " holdout " << fmt_db(m.holdout_psnr_db) << " dB ("
        << std::fixed << std::setprecision(1) << m.wall_seconds << "s)" << std::defaultfloat
        << '\n'
        << std::flush;
  });
  if (!o.metrics.empty()) write_metrics_csv(o.metrics, res.log);
  out << "wrote " << o.out << ": " << to_string(res.model.variant()) << ", "
      << res.model.trainable_scalars() << " trainable scalars, " << res.train_blocks.size()
      << " training / " << res.holdout_blocks.size() << " held-out blocks\n";
}

void report_psnr(const Options& o, const Image& recon, std::ostream& out) {
  if (o.reference.empty()) return;
  out << "PSNR " << fmt_db(psnr(read_pnm(o.reference), recon)) << " dB\n";
}

void reconstruct_cmd(const Options& o, std::ostream& out) {
  check_output(o.out);
  const Model model = load_model(o.model);
  const MeasurementMatrix mm = load_measurement_matrix(o.phi);
  const Image recon = reconstruct_image(read_pnm(o.image), mm, model, o.threads);
  write_pgm(o.out, recon);
  out << "wrote " << o.out << '\n';
  report_psnr(o, recon, out);
}

void baseline_ista(const Options& o, std::ostream& out) {
  check_output(o.out);
  const MeasurementMatrix mm = load_measurement_matrix(o.phi);
  IstaConfig cfg;
  cfg.lambda = o.lambda;
  cfg.max_iters = o.iters;
  const Image recon = reconstruct_image(read_pnm(o.image), mm, ista_reconstructor(mm, cfg), o.threads);
  write_pgm(o.out, recon);
  out << "wrote " << o.out << '\n';
  report_psnr(o, recon, out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void eval_cmd(const Options& o, std::ostream& out) {
  if (!o.out.empty()) check_output(o.out);
  const SweepTable table = sweep(o.ratios, split_list(o.methods), o.corpus, o.dir, o.threads);
  const std::string csv = sweep_csv(table);
  if (o.out.empty()) {
    out << csv;
  } else {
    std::ofstream f(o.out);
    if (!f) throw InputError("cannot write " + o.out);
    f << csv;
    out << "wrote " << o.out << '\n';
  }
}

void check_theorem1(const Options& o, std::ostream& out) {
  out << "probe  n m s  sigma  alpha      stderr\n";
  const double analytic = 0.5 - 0.5 / M_PI;
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  const RatioEstimate scalar = theorem1_ratio(one, one, 1.0, o.samples, o.seed);
  out << "ident  1 1 1  1.0    " << std::fixed << std::setprecision(6) << scalar.alpha << "  "
      << scalar.std_error << "  analytic " << analytic << " ("
      << std::setprecision(2) << std::abs(scalar.alpha - analytic) / scalar.std_error
      << " SE)\n";
  bool all = true;
  for (int p = 0; p < o.probes; ++p) {
    VarianceProbe probe = random_probe(4, 3, 2, o.seed + 1000 + static_cast<std::uint64_t>(p));
    probe.samples = o.samples;
    run_probe(probe, o.seed + 100 * static_cast<std::uint64_t>(p + 1));
    for (std::size_t i = 0; i < probe.sigmas.size(); ++i) {
      out << std::setw(5) << p << "  4 3 2  " << std::setprecision(1) << probe.sigmas[i]
          << "    " << std::setprecision(6) << probe.estimates[i].alpha << "  "
          << probe.estimates[i].std_error << '\n';
    }
    const bool ok = probe.sigma_invariant();
    all = all && ok;
    out << "       max relative gap " << std::setprecision(4) << probe.max_relative_gap() * 100
        << "%  " << (ok ? "invariant" : "NOT invariant") << '\n';
  }
  out << (all ? "sigma-invariance holds for every probe\n" : "sigma-invariance violated\n");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"ISTA-Net compressive sensing toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  try {
    o.seed = env_seed();
    o.threads = env_threads();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  auto seed_opt = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "random seed (default: $ISTANET_SEED or 0)")->capture_default_str();
  };
  auto threads_opt = [&](CLI::App* c) {
    c->add_option("--threads", o.threads, "worker threads (default: $ISTANET_THREADS or 1)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };

  auto* gp = app.add_subcommand("gen-phi", "generate a row-orthonormal Gaussian sampling matrix");
  gp->add_option("--ratio", o.ratio, "CS ratio M/N")->check(kRatio)->capture_default_str();
  gp->add_option("--n", o.n, "signal length N")->check(CLI::PositiveNumber)->capture_default_str();
  seed_opt(gp);
  gp->add_option("--out", o.out, "output .ucsp file")->required();

  auto* pr = app.add_subcommand("prepare", "crop random training blocks and measure them");
  pr->add_option("--images", o.images, "folder of PGM/PPM images")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--phi", o.phi, "sampling matrix file")->required()->check(CLI::ExistingFile);
  pr->add_option("--blocks", o.blocks, "number of 33x33 blocks")->check(CLI::PositiveNumber)->capture_default_str();
  pr->add_flag("--no-qinit", o.no_qinit, "do not embed the least-squares initializer");
  seed_opt(pr);
  pr->add_option("--out", o.out, "output .ucsd file")->required();

  auto* tr = app.add_subcommand("train", "train ISTA-Net / ISTA-Net+ on a prepared dataset");
  tr->add_option("--data", o.data, "dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--phi", o.phi, "sampling matrix file")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", o.out, "checkpoint file")->required();
  tr->add_option("--variant", o.variant, "istanet | istanet+")->capture_default_str();
  tr->add_option("--phases", o.phases, "number of phases")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--filters", o.filters, "feature channels")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--tying", o.tying,
                 "unshared | share-transform | share-rho-transform | share-theta-transform | share-all")
      ->capture_default_str();
  tr->add_option("--epochs", o.epochs, "training epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--batch", o.batch, "mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  tr->add_option("--gamma", o.gamma, "symmetry constraint weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--init", o.init, "filter init: dct | identity | xavier | he")->capture_default_str();
  tr->add_option("--init-noise", o.init_noise, "noise scale for dct and identity init")->check(CLI::NonNegativeNumber)->capture_default_str();
  tr->add_option("--holdout", o.holdout, "held-out fraction of blocks")->check(CLI::Range(0.0, 0.99))->capture_default_str();
  tr->add_option("--metrics", o.metrics, "per-epoch metrics CSV");
  tr->add_option("--checkpoint-every", o.checkpoint_every, "also checkpoint every K epochs")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  seed_opt(tr);
  threads_opt(tr);

  auto* rc = app.add_subcommand("reconstruct", "reconstruct an image with a trained model");
  rc->add_option("--model", o.model, "checkpoint file")->required()->check(CLI::ExistingFile);
  rc->add_option("--phi", o.phi, "sampling matrix file")->required()->check(CLI::ExistingFile);
  rc->add_option("--image", o.image, "input PGM")->required()->check(CLI::ExistingFile);
  rc->add_option("--out", o.out, "output PGM")->required();
  rc->add_option("--reference", o.reference, "print PSNR against this PGM")->check(CLI::ExistingFile);
  threads_opt(rc);

  auto* ev = app.add_subcommand("eval", "PSNR table over CS ratios and methods");
  ev->add_option("--methods", o.methods, "comma list of istanet, istanet+, ista, qinit")->capture_default_str();
  ev->add_option("--ratios", o.ratios, "CS ratios")->delimiter(',')->check(kRatio);
  ev->add_option("--corpus", o.corpus, "folder of test images")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--dir", o.dir, "folder holding phi_r<P>.ucsp and <method>_r<P>.istn")
      ->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", o.out, "CSV output (default: stdout)");
  threads_opt(ev);

  auto* bi = app.add_subcommand("baseline-ista", "classical ISTA with a DCT sparsifier");
  bi->add_option("--phi", o.phi, "sampling matrix file")->required()->check(CLI::ExistingFile);
  bi->add_option("--image", o.image, "input PGM")->required()->check(CLI::ExistingFile);
  bi->add_option("--out", o.out, "output PGM")->required();
  bi->add_option("--lambda", o.lambda, "l1 weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  bi->add_option("--iters", o.iters, "iterations")->check(CLI::PositiveNumber)->capture_default_str();
  bi->add_option("--reference", o.reference, "print PSNR against this PGM")->check(CLI::ExistingFile);
  threads_opt(bi);

  auto* th = app.add_subcommand("check-theorem1", "Monte Carlo check of the ReLU variance ratio");
  th->add_option("--samples", o.samples, "samples per estimate")->check(CLI::Range(10'000L, 1'000'000'000L))->capture_default_str();
  th->add_option("--probes", o.probes, "random (A, B) probes")->check(CLI::NonNegativeNumber)->capture_default_str();
  seed_opt(th);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream cli_out, cli_err;
    const int code = app.exit(e, cli_out, cli_err);
    out << cli_out.str();
    err << cli_err.str();
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gp) gen_phi(o, out);
    else if (*pr) prepare(o, out);
    else if (*tr) train_cmd(o, out);
    else if (*rc) reconstruct_cmd(o, out);
    else if (*ev) eval_cmd(o, out);
    else if (*bi) baseline_ista(o, out);
    else if (*th) check_theorem1(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace istanet::cli
