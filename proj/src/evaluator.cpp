#include "istanet/evaluator.hpp"

#include "istanet/errors.hpp"
#include "istanet/parallel.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

namespace istanet {

double psnr(const Image& reference, const Image& test) {
  if (reference.rows() != test.rows() || reference.cols() != test.cols()) {
    throw ShapeError("psnr: " + std::to_string(reference.rows()) + "x" +
                     std::to_string(reference.cols()) + " vs " + std::to_string(test.rows()) +
                     "x" + std::to_string(test.cols()));
  }
  if (reference.size() == 0) throw ShapeError("psnr: empty images");
  const double mse = (reference - test).squaredNorm() / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

BlockReconstructor model_reconstructor(const Model& model, const MeasurementMatrix& phi) {
  if (model.measurement_size() != phi.rows() || model.signal_size() != phi.cols()) {
    throw ConfigError("model expects " + std::to_string(model.measurement_size()) + "x" +
                      std::to_string(model.signal_size()) + " sampling, phi is " +
                      std::to_string(phi.rows()) + "x" + std::to_string(phi.cols()) +
                      " (CS ratio mismatch)");
  }
  return [&model, &phi](const Eigen::VectorXd& y) { return reconstruct_block(model, phi, y); };
}

BlockReconstructor ista_reconstructor(const MeasurementMatrix& phi, const IstaConfig& cfg) {
  return [&phi, cfg](const Eigen::VectorXd& y) { return ista_solve(y, phi, cfg).x; };
}

BlockReconstructor qinit_reconstructor(const QInit& q) {
  return [&q](const Eigen::VectorXd& y) { return init_reconstruction(q, y); };
}

Image reconstruct_image(const Image& image, const MeasurementMatrix& phi,
                        const BlockReconstructor& rec, int threads) {
  if (phi.cols() != kBlockPixels) {
    throw ConfigError("phi has " + std::to_string(phi.cols()) + " columns, expected " +
                      std::to_string(kBlockPixels));
  }
  const auto rows = tile_origins(image.rows(), kBlockSize, kBlockSize);
  const auto cols = tile_origins(image.cols(), kBlockSize, kBlockSize);
  const std::size_t tiles = rows.size() * cols.size();
  std::vector<Eigen::VectorXd> out(tiles);
  parallel_for(tiles, threads, [&](std::size_t t) {
    const Eigen::Index r = rows[t / cols.size()], c = cols[t % cols.size()];
    const Eigen::VectorXd x = vectorize(image.block(r, c, kBlockSize, kBlockSize)) / 255.0;
    out[t] = rec(phi.phi * x);
    if (out[t].size() != kBlockPixels) throw ShapeError("reconstructor returned a wrong size");
  });

  Image sum = Image::Zero(image.rows(), image.cols());
  Image count = Image::Zero(image.rows(), image.cols());
  for (std::size_t t = 0; t < tiles; ++t) {
    const Eigen::Index r = rows[t / cols.size()], c = cols[t % cols.size()];
    sum.block(r, c, kBlockSize, kBlockSize) += unvectorize(out[t], kBlockSize) * 255.0;
    count.block(r, c, kBlockSize, kBlockSize).array() += 1.0;
  }
  return (sum.array() / count.array()).cwiseMax(0.0).cwiseMin(255.0).matrix();
}

Image reconstruct_image(const Image& image, const MeasurementMatrix& phi, const Model& model,
                        int threads) {
  return reconstruct_image(image, phi, model_reconstructor(model, phi), threads);
}

EvalReport evaluate(const std::string& method, double ratio, const std::vector<Image>& images,
                    const std::vector<std::string>& names, const MeasurementMatrix& phi,
                    const BlockReconstructor& rec, int threads) {
  if (names.size() != images.size()) throw ContractError("evaluate: one name per image");
  EvalReport report{method, ratio, {}, 0.0};
  double acc = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Image recon = reconstruct_image(images[i], phi, rec, threads);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.images.push_back({names[i], psnr(images[i], recon), secs});
    acc += report.images.back().psnr_db;
  }
  report.mean_psnr_db = images.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : acc / static_cast<double>(images.size());
  return report;
}

std::string ratio_label(double ratio) {
  std::ostringstream os;
  os << std::setprecision(6) << ratio * 100.0;
  return os.str();
}

std::string phi_filename(double ratio) { return "phi_r" + ratio_label(ratio) + ".ucsp"; }

std::string checkpoint_filename(const std::string& method, double ratio) {
  return method + "_r" + ratio_label(ratio) + ".istn";
}

SweepTable sweep(const std::vector<double>& ratios, const std::vector<std::string>& methods,
                 const std::string& corpus_dir, const std::string& dir, int threads) {
  namespace fs = std::filesystem;
  for (const std::string& m : methods) {
    if (m != "istanet" && m != "istanet+" && m != "ista" && m != "qinit") {
      throw ConfigError("unknown method '" + m + "' (istanet, istanet+, ista, qinit)");
    }
  }
  SweepTable table{methods, ratios, {}};
  std::vector<Image> images;
  std::vector<std::string> names;
  for (const std::string& p : list_images(corpus_dir)) {
    images.push_back(read_pnm(p));
    names.push_back(fs::path(p).filename().string());
  }
  if (images.empty()) return table;

  for (const std::string& method : methods) {
    for (double ratio : ratios) {
      SweepCell cell{method, ratio, std::nullopt, {}};
      const fs::path phi_path = fs::path(dir) / phi_filename(ratio);
      const std::string ckpt_method = method == "qinit" ? "istanet" : method;
      const fs::path ckpt_path = fs::path(dir) / checkpoint_filename(ckpt_method, ratio);
      if (!fs::exists(phi_path)) {
        cell.missing = phi_path.string();
      } else if (method != "ista" && !fs::exists(ckpt_path)) {
        cell.missing = ckpt_path.string();
      } else {
        const MeasurementMatrix phi = load_measurement_matrix(phi_path.string());
        if (method == "ista") {
          cell.report = evaluate(method, ratio, images, names, phi, ista_reconstructor(phi), threads);
        } else {
          const Model model = load_model(ckpt_path.string());
          if (method != "qinit" && to_string(model.variant()) != method) {
            throw InputError(ckpt_path.string() + " holds a " + to_string(model.variant()) +
                             " model");
          }
          const BlockReconstructor rec = method == "qinit"
                                             ? qinit_reconstructor(model.q_init())
                                             : model_reconstructor(model, phi);
          if (model.measurement_size() != phi.rows()) {
            throw ConfigError(ckpt_path.string() + " does not match " + phi_path.string());
          }
          cell.report = evaluate(method, ratio, images, names, phi, rec, threads);
        }
      }
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

std::string sweep_csv(const SweepTable& table) {
  std::ostringstream os;
  os << "method";
  for (double r : table.ratios) os << ',' << ratio_label(r) << '%';
  os << '\n';
  if (table.cells.empty()) return os.str();
  os << std::fixed << std::setprecision(2);
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    os << table.methods[m];
    for (std::size_t r = 0; r < table.ratios.size(); ++r) {
      const SweepCell& c = table.at(m, r);
      os << ',';
      if (c.report) {
        os << c.report->mean_psnr_db;
      } else {
        os << "NA";
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace istanet
