#include "istanet/image.hpp"

#include "istanet/binary_io.hpp"
#include "istanet/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace istanet {

namespace {

// Parses one whitespace-delimited header token, skipping '#' comments.
long next_header_int(const std::vector<char>& buf, std::size_t& pos, const std::string& path) {
  while (pos < buf.size()) {
    const char c = buf[pos];
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  long v = 0;
  std::size_t digits = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    v = v * 10 + (buf[pos] - '0');
    ++pos;
    ++digits;
  }
  if (digits == 0) throw InputError(path + ": malformed PNM header");
  return v;
}

}  // namespace

Image read_pnm(const std::string& path) {
  const std::vector<char> buf = io::read_file(path);
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    throw InputError(path + ": not a binary PGM (P5) or PPM (P6) file");
  }
  const bool color = buf[1] == '6';
  std::size_t pos = 2;
  const long width = next_header_int(buf, pos, path);
  const long height = next_header_int(buf, pos, path);
  const long maxval = next_header_int(buf, pos, path);
  if (width <= 0 || height <= 0) throw InputError(path + ": empty image");
  if (maxval <= 0 || maxval > 255) throw InputError(path + ": only 8-bit PNM is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(width * height) * channels;
  if (buf.size() < pos + need) throw InputError(path + ": truncated pixel data");

  const double to255 = 255.0 / static_cast<double>(maxval);
  Image img(height, width);
  const auto* px = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  for (long r = 0; r < height; ++r) {
    for (long c = 0; c < width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * width + c) * channels;
      double v = px[i];
      if (color) v = 0.299 * px[i] + 0.587 * px[i + 1] + 0.114 * px[i + 2];
      img(r, c) = v * to255;
    }
  }
  return img;
}

void write_pgm(const std::string& path, const Image& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.cols()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      row[static_cast<std::size_t>(c)] =
          static_cast<unsigned char>(std::clamp(std::lround(image(r, c)), 0L, 255L));
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw InputError("failed writing " + path);
}

std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InputError(dir + ": not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".pgm" || ext == ".ppm") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::Index grid_side(Eigen::Index length) {
  const auto side =
      static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(length))));
  if (length < 1 || side * side != length) {
    throw ShapeError("signal length " + std::to_string(length) + " is not a perfect square");
  }
  return side;
}

Eigen::VectorXd vectorize(const Eigen::MatrixXd& grid) {
  Eigen::VectorXd v(grid.size());
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    v.segment(r * grid.cols(), grid.cols()) = grid.row(r).transpose();
  }
  return v;
}

Eigen::MatrixXd unvectorize(const Eigen::VectorXd& v, Eigen::Index side) {
  if (v.size() != side * side) throw ShapeError("unvectorize: length is not side^2");
  Eigen::MatrixXd g(side, side);
  for (Eigen::Index r = 0; r < side; ++r) g.row(r) = v.segment(r * side, side).transpose();
  return g;
}

}  // namespace istanet
