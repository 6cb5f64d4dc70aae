#pragma once

#include "istanet/image.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace istanet {

inline constexpr Eigen::Index kBlockSize = 33;
inline constexpr Eigen::Index kBlockPixels = kBlockSize * kBlockSize;  // 1089

// Row-orthonormal M x N sampling operator: phi * phi^T == I_M.
struct MeasurementMatrix {
  Eigen::MatrixXd phi;
  std::uint64_t seed = 0;

  Eigen::Index rows() const { return phi.rows(); }  // M
  Eigen::Index cols() const { return phi.cols(); }  // N
  double ratio() const { return static_cast<double>(rows()) / static_cast<double>(cols()); }
};

// Gaussian rows orthonormalized by Householder QR. Deterministic in seed.
MeasurementMatrix gen_measurement_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed);

// round(ratio * n); ratio must lie in (0, 1].
Eigen::Index measurements_for_ratio(double ratio, Eigen::Index n);

// "UCSP" | M u32 | N u32 | seed u64 | phi row-major f64
void save_measurement_matrix(const std::string& path, const MeasurementMatrix& mm);
MeasurementMatrix load_measurement_matrix(const std::string& path);

Eigen::VectorXd measure(const MeasurementMatrix& mm, const Eigen::VectorXd& x);
// Column-wise measure of a block matrix.
Eigen::MatrixXd measure_all(const MeasurementMatrix& mm, const Eigen::MatrixXd& x);

// Top-left offsets of tiles along one axis: multiples of `stride` that fit,
// plus a final tile clamped to the border when the extent leaves a remainder.
std::vector<Eigen::Index> tile_origins(Eigen::Index extent, Eigen::Index block, Eigen::Index stride);

// Deterministic tiling of an image into block x block patches (row-major
// vectorization), ordered by tile row then tile column.
std::vector<Eigen::VectorXd> extract_blocks(const Image& image, Eigen::Index block = kBlockSize,
                                            Eigen::Index stride = kBlockSize);

// `count` uniformly random crops across `images`; images smaller than the
// block are never chosen.
std::vector<Eigen::VectorXd> random_blocks(const std::vector<Image>& images, std::size_t count,
                                           Eigen::Index block, std::uint64_t seed);

// Least-squares linear initializer (N x M): argmin_Q ||Q Y - X||_F.
struct QInit {
  Eigen::MatrixXd q;
};

// X Y^T (Y Y^T)^{-1} via an SPD solve; falls back to a ridge of
// 1e-10 * trace(Y Y^T) / M when the plain system is ill-conditioned.
QInit compute_qinit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

Eigen::VectorXd init_reconstruction(const QInit& q, const Eigen::VectorXd& y);

// Training pairs. Columns of x are vectorized blocks scaled to [0, value_max].
struct DataSet {
  Eigen::MatrixXd x;  // N x N_b
  Eigen::MatrixXd y;  // M x N_b
  double value_max = 1.0;
  std::optional<QInit> q_init;

  Eigen::Index block_count() const { return x.cols(); }
};

DataSet make_dataset(const MeasurementMatrix& mm, Eigen::MatrixXd x, bool with_qinit = true);

// "UCSD" | version u32 | N u32 | M u32 | N_b u32 | X | Y | has_qinit u8 | [Q]
// X and Y are written one block (column) after another; Q row-major N x M.
void save_dataset(const std::string& path, const DataSet& ds);
DataSet load_dataset(const std::string& path);

}  // namespace istanet
