#include "istanet/sampling.hpp"

#include "istanet/binary_io.hpp"
#include "istanet/errors.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace istanet {

namespace {

constexpr char kPhiMagic[5] = "UCSP";
constexpr char kDataMagic[5] = "UCSD";
constexpr std::uint32_t kDataVersion = 1;
constexpr double kMaxCondition = 1e12;

// Condition number of a symmetric positive semi-definite matrix.
double spd_condition(const Eigen::MatrixXd& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

MeasurementMatrix gen_measurement_matrix(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw DomainError("measurement matrix needs M >= 1 and N >= 1");
  if (m > n) {
    throw DomainError("measurement matrix needs M <= N (got M=" + std::to_string(m) +
                      ", N=" + std::to_string(n) + ")");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Columns of g are the Gaussian rows of phi.
  Eigen::MatrixXd g(n, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) g(c, r) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
  // Fix the sign ambiguity of QR so rows keep the orientation of the draws.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return {q.transpose(), seed};
}

Eigen::Index measurements_for_ratio(double ratio, Eigen::Index n) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw DomainError("CS ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  const auto m = static_cast<Eigen::Index>(std::llround(ratio * static_cast<double>(n)));
  return std::max<Eigen::Index>(1, m);
}

void save_measurement_matrix(const std::string& path, const MeasurementMatrix& mm) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  io::write_magic(f, kPhiMagic);
  io::write_u32(f, static_cast<std::uint32_t>(mm.rows()));
  io::write_u32(f, static_cast<std::uint32_t>(mm.cols()));
  io::write_u64(f, mm.seed);
  io::write_matrix(f, mm.phi);
  if (!f) throw InputError("failed writing " + path);
}

MeasurementMatrix load_measurement_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  io::expect_magic(f, kPhiMagic, path);
  const auto m = static_cast<Eigen::Index>(io::read_u32(f));
  const auto n = static_cast<Eigen::Index>(io::read_u32(f));
  MeasurementMatrix mm;
  mm.seed = io::read_u64(f);
  if (m < 1 || n < 1 || m > n) throw InputError(path + ": invalid matrix dimensions");
  mm.phi = io::read_matrix(f, m, n);
  return mm;
}

Eigen::VectorXd measure(const MeasurementMatrix& mm, const Eigen::VectorXd& x) {
  if (x.size() != mm.cols()) {
    throw ShapeError("measure: signal has length " + std::to_string(x.size()) + ", phi expects " +
                     std::to_string(mm.cols()));
  }
  return mm.phi * x;
}

Eigen::MatrixXd measure_all(const MeasurementMatrix& mm, const Eigen::MatrixXd& x) {
  if (x.rows() != mm.cols()) {
    throw ShapeError("measure: blocks have length " + std::to_string(x.rows()) +
                     ", phi expects " + std::to_string(mm.cols()));
  }
  return mm.phi * x;
}

std::vector<Eigen::Index> tile_origins(Eigen::Index extent, Eigen::Index block,
                                       Eigen::Index stride) {
  if (block < 1 || stride < 1) throw DomainError("block size and stride must be positive");
  if (extent < block) {
    throw InputError("image extent " + std::to_string(extent) + " is smaller than block size " +
                     std::to_string(block));
  }
  std::vector<Eigen::Index> out;
  Eigen::Index pos = 0;
  for (; pos + block <= extent; pos += stride) out.push_back(pos);
  if (out.back() + block < extent) out.push_back(extent - block);
  return out;
}

std::vector<Eigen::VectorXd> extract_blocks(const Image& image, Eigen::Index block,
                                            Eigen::Index stride) {
  const auto rows = tile_origins(image.rows(), block, stride);
  const auto cols = tile_origins(image.cols(), block, stride);
  std::vector<Eigen::VectorXd> out;
  out.reserve(rows.size() * cols.size());
  for (Eigen::Index r : rows) {
    for (Eigen::Index c : cols) out.push_back(vectorize(image.block(r, c, block, block)));
  }
  return out;
}

std::vector<Eigen::VectorXd> random_blocks(const std::vector<Image>& images, std::size_t count,
                                           Eigen::Index block, std::uint64_t seed) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows() >= block && images[i].cols() >= block) usable.push_back(i);
  }
  if (usable.empty()) throw InputError("no image is large enough for a " +
                                       std::to_string(block) + "x" + std::to_string(block) +
                                       " block");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const Image& img =
        images[usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)]];
    const auto r = std::uniform_int_distribution<Eigen::Index>(0, img.rows() - block)(rng);
    const auto c = std::uniform_int_distribution<Eigen::Index>(0, img.cols() - block)(rng);
    out.push_back(vectorize(img.block(r, c, block, block)));
  }
  return out;
}

QInit compute_qinit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) {
    throw ShapeError("compute_qinit: X has " + std::to_string(x.cols()) + " blocks, Y has " +
                     std::to_string(y.cols()));
  }
  const Eigen::Index m = y.rows();
  if (y.cols() < m) {
    throw ContractError("compute_qinit: need at least M=" + std::to_string(m) +
                        " blocks, got " + std::to_string(y.cols()));
  }
  Eigen::MatrixXd gram = y * y.transpose();
  const Eigen::MatrixXd yx = y * x.transpose();  // M x N

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || spd_condition(gram) > kMaxCondition) {
    const double ridge = 1e-10 * gram.trace() / static_cast<double>(m);
    gram.diagonal().array() += ridge;
    const double cond = spd_condition(gram);
    if (cond > kMaxCondition) {
      throw NumericError("compute_qinit: Y Y^T is ill-conditioned (condition " +
                         std::to_string(cond) + " after ridge)");
    }
    llt.compute(gram);
    if (llt.info() != Eigen::Success) throw NumericError("compute_qinit: SPD solve failed");
  }
  return {llt.solve(yx).transpose()};
}

Eigen::VectorXd init_reconstruction(const QInit& q, const Eigen::VectorXd& y) {
  if (y.size() != q.q.cols()) {
    throw ShapeError("init_reconstruction: measurement has length " + std::to_string(y.size()) +
                     ", Q_init expects " + std::to_string(q.q.cols()));
  }
  return q.q * y;
}

DataSet make_dataset(const MeasurementMatrix& mm, Eigen::MatrixXd x, bool with_qinit) {
  DataSet ds;
  ds.y = measure_all(mm, x);
  ds.x = std::move(x);
  if (with_qinit) ds.q_init = compute_qinit(ds.x, ds.y);
  return ds;
}

void save_dataset(const std::string& path, const DataSet& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  io::write_magic(f, kDataMagic);
  io::write_u32(f, kDataVersion);
  io::write_u32(f, static_cast<std::uint32_t>(ds.x.rows()));
  io::write_u32(f, static_cast<std::uint32_t>(ds.y.rows()));
  io::write_u32(f, static_cast<std::uint32_t>(ds.x.cols()));
  io::write_columns(f, ds.x);
  io::write_columns(f, ds.y);
  io::write_u8(f, ds.q_init ? 1 : 0);
  if (ds.q_init) io::write_matrix(f, ds.q_init->q);
  if (!f) throw InputError("failed writing " + path);
}

DataSet load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  io::expect_magic(f, kDataMagic, path);
  const std::uint32_t version = io::read_u32(f);
  if (version != kDataVersion) {
    throw InputError(path + ": unsupported dataset version " + std::to_string(version));
  }
  const auto n = static_cast<Eigen::Index>(io::read_u32(f));
  const auto m = static_cast<Eigen::Index>(io::read_u32(f));
  const auto nb = static_cast<Eigen::Index>(io::read_u32(f));
  DataSet ds;
  ds.x = io::read_columns(f, n, nb);
  ds.y = io::read_columns(f, m, nb);
  if (io::read_u8(f)) ds.q_init = QInit{io::read_matrix(f, n, m)};
  return ds;
}

}  // namespace istanet
