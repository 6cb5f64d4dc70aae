#include "istanet/binary_io.hpp"
#include "istanet/errors.hpp"
#include "istanet/network.hpp"

#include <fstream>

namespace istanet {

namespace {

constexpr char kModelMagic[5] = "ISTN";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void save_model(const std::string& path, const Model& model) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  io::write_magic(f, kModelMagic);
  io::write_u32(f, kModelVersion);
  io::write_u8(f, static_cast<std::uint8_t>(model.variant()));
  io::write_u32(f, static_cast<std::uint32_t>(model.phases()));
  io::write_u32(f, static_cast<std::uint32_t>(model.filters()));
  io::write_u32(f, static_cast<std::uint32_t>(model.measurement_size()));
  io::write_u32(f, static_cast<std::uint32_t>(model.signal_size()));
  io::write_u8(f, static_cast<std::uint8_t>(model.tying()));
  io::write_matrix(f, model.q_init().q);
  for (const Tensor& t : model.parameters()) io::write_f64s(f, t.values());
  if (!f) throw InputError("failed writing " + path);
}

Model load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  io::expect_magic(f, kModelMagic, path);
  const std::uint32_t version = io::read_u32(f);
  if (version != kModelVersion) {
    throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig cfg;
  const std::uint8_t variant = io::read_u8(f);
  if (variant > 1) throw InputError(path + ": unknown variant byte");
  cfg.variant = static_cast<Variant>(variant);
  cfg.phases = static_cast<int>(io::read_u32(f));
  cfg.filters = static_cast<int>(io::read_u32(f));
  const auto m = static_cast<Eigen::Index>(io::read_u32(f));
  const auto n = static_cast<Eigen::Index>(io::read_u32(f));
  const std::uint8_t tying = io::read_u8(f);
  if (tying > static_cast<std::uint8_t>(Tying::ShareAll)) {
    throw InputError(path + ": unknown tying byte");
  }
  cfg.tying = static_cast<Tying>(tying);
  if (cfg.filters < 1 || m < 1 || n < 1) throw InputError(path + ": invalid dimensions");

  QInit q{io::read_matrix(f, n, m)};
  const auto shapes = Model::slot_shapes(cfg.variant, cfg.filters);
  std::vector<Tensor> params;
  for (int k = 0; k < cfg.phases; ++k) {
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      if (k > 0 && Model::slot_shared(cfg.tying, s)) continue;
      Tensor t(shapes[s]);
      io::read_f64s(f, t.values());
      params.push_back(std::move(t));
    }
  }
  return Model(cfg, std::move(q), std::move(params));
}

}  // namespace istanet
