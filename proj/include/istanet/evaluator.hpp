#pragma once

#include "istanet/image.hpp"
#include "istanet/ista.hpp"
#include "istanet/network.hpp"
#include "istanet/sampling.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace istanet {

// 10 log10(255^2 / MSE); +inf when the images are identical.
double psnr(const Image& reference, const Image& test);

// Maps the measurement of one block (values scaled to [0, 1]) to its
// reconstruction.
using BlockReconstructor = std::function<Eigen::VectorXd(const Eigen::VectorXd& y)>;

BlockReconstructor model_reconstructor(const Model& model, const MeasurementMatrix& phi);
BlockReconstructor ista_reconstructor(const MeasurementMatrix& phi, const IstaConfig& cfg = {});
BlockReconstructor qinit_reconstructor(const QInit& q);

// Tiles the image into 33x33 blocks (the last row/column of tiles clamped
// to the edge, overlaps averaged), reconstructs each block independently
// from its own measurement and clips to [0, 255].
Image reconstruct_image(const Image& image, const MeasurementMatrix& phi,
                        const BlockReconstructor& rec, int threads = 1);
// ConfigError if the model does not match phi.
Image reconstruct_image(const Image& image, const MeasurementMatrix& phi, const Model& model,
                        int threads = 1);

struct ImageScore {
  std::string name;
  double psnr_db = 0.0;
  double seconds = 0.0;
};

struct EvalReport {
  std::string method;
  double ratio = 0.0;
  std::vector<ImageScore> images;
  double mean_psnr_db = 0.0;
};

// Scores every image of a corpus. `names` label the rows of the report.
EvalReport evaluate(const std::string& method, double ratio, const std::vector<Image>& images,
                    const std::vector<std::string>& names, const MeasurementMatrix& phi,
                    const BlockReconstructor& rec, int threads = 1);

// Percent label used in file names and table headers: 0.25 -> "25".
std::string ratio_label(double ratio);

// Files looked up inside the sweep directory.
std::string phi_filename(double ratio);                               // phi_r25.ucsp
std::string checkpoint_filename(const std::string& method, double ratio);  // istanet_r25.istn

struct SweepCell {
  std::string method;
  double ratio = 0.0;
  std::optional<EvalReport> report;  // empty when inputs are missing
  std::string missing;               // what was not found
};

struct SweepTable {
  std::vector<std::string> methods;
  std::vector<double> ratios;
  std::vector<SweepCell> cells;  // methods-major

  const SweepCell& at(std::size_t method, std::size_t ratio) const {
    return cells.at(method * ratios.size() + ratio);
  }
};

// Methods: "istanet", "istanet+" (checkpoints from `dir`), "ista" (classical
// DCT baseline), "qinit" (linear initializer of the istanet checkpoint).
// Missing files leave the cell absent. An empty corpus yields no cells.
SweepTable sweep(const std::vector<double>& ratios, const std::vector<std::string>& methods,
                 const std::string& corpus_dir, const std::string& dir, int threads = 1);

// One row per method, one column per ratio; absent cells print as "NA".
std::string sweep_csv(const SweepTable& table);

}  // namespace istanet
