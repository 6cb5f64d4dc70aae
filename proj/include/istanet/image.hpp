#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace istanet {

// Grayscale image, rows x cols, luminance on the 0..255 scale.
using Image = Eigen::MatrixXd;

// Reads binary PGM (P5) and PPM (P6); color is reduced to BT.601 luma.
Image read_pnm(const std::string& path);
// Writes 8-bit P5; values are rounded and clipped to [0, 255].
void write_pgm(const std::string& path, const Image& image);

// Sorted list of *.pgm / *.ppm files directly inside `dir`.
std::vector<std::string> list_images(const std::string& dir);

// Side of a square grid with `length` pixels; ShapeError if not a square.
Eigen::Index grid_side(Eigen::Index length);

// Row-major vectorization of a square grid and its inverse.
Eigen::VectorXd vectorize(const Eigen::MatrixXd& grid);
Eigen::MatrixXd unvectorize(const Eigen::VectorXd& v, Eigen::Index side);

}  // namespace istanet
