#include "support.hpp"

#include "istanet/errors.hpp"
#include "istanet/evaluator.hpp"
#include "istanet/image.hpp"

#include <doctest.h>

#include <fstream>

using namespace istanet;

namespace {

Image random_image(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> px(0, 255);
  Image img(rows, cols);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = px(rng);
  return img;
}

// Overlap-averaged back-projection computed pixel by pixel.
Image backprojection_oracle(const Image& img, const Eigen::MatrixXd& phi) {
  std::vector<Eigen::Index> rs, cs;
  for (Eigen::Index o = 0; o + 33 <= img.rows(); o += 33) rs.push_back(o);
  if (img.rows() % 33) rs.push_back(img.rows() - 33);
  for (Eigen::Index o = 0; o + 33 <= img.cols(); o += 33) cs.push_back(o);
  if (img.cols() % 33) cs.push_back(img.cols() - 33);
  const Eigen::MatrixXd gram = phi.transpose() * phi;
  Image sum = Image::Zero(img.rows(), img.cols()), cnt = Image::Zero(img.rows(), img.cols());
  for (Eigen::Index r : rs) {
    for (Eigen::Index c : cs) {
      Eigen::VectorXd x(1089);
      for (int i = 0; i < 33; ++i)
        for (int j = 0; j < 33; ++j) x(i * 33 + j) = img(r + i, c + j) / 255.0;
      const Eigen::VectorXd out = gram * x;
      for (int i = 0; i < 33; ++i) {
        for (int j = 0; j < 33; ++j) {
          sum(r + i, c + j) += out(i * 33 + j) * 255.0;
          cnt(r + i, c + j) += 1.0;
        }
      }
    }
  }
  Image res(img.rows(), img.cols());
  for (Eigen::Index i = 0; i < res.size(); ++i) {
    res.data()[i] = std::clamp(sum.data()[i] / cnt.data()[i], 0.0, 255.0);
  }
  return res;
}

BlockReconstructor backprojection(const MeasurementMatrix& phi) {
  return [&phi](const Eigen::VectorXd& y) -> Eigen::VectorXd { return phi.phi.transpose() * y; };
}

}  // namespace

TEST_SUITE("evaluator") {

TEST_CASE("PSNR reference values") {
  const Image a = Image::Constant(8, 8, 128.0);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(Image::Zero(4, 4), Image::Constant(4, 4, 255.0)) == doctest::Approx(0.0));
  CHECK(psnr(a, Image::Constant(8, 8, 130.0)) == doctest::Approx(42.1102).epsilon(1e-5));
  std::mt19937_64 rng(1);
  const Image x = random_image(20, 30, rng), y = random_image(20, 30, rng);
  CHECK(psnr(x, y) == psnr(y, x));
  CHECK_THROWS_AS(psnr(Image::Zero(3, 3), Image::Zero(3, 4)), ShapeError);
  CHECK_THROWS_AS(psnr(Image(0, 0), Image(0, 0)), ShapeError);
}

TEST_CASE("image reconstruction tiles match a pixel-level oracle") {
  std::mt19937_64 rng(2);
  const MeasurementMatrix phi = gen_measurement_matrix(300, 1089, 3);
  for (auto [r, c] : {std::pair{33, 33}, std::pair{66, 66}, std::pair{100, 100}, std::pair{40, 71}}) {
    const Image img = random_image(r, c, rng);
    const Image got = reconstruct_image(img, phi, backprojection(phi));
    CAPTURE(r);
    CAPTURE(c);
    CHECK((got - backprojection_oracle(img, phi.phi)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("full-rate identity sampling is lossless") {
  std::mt19937_64 rng(3);
  const Image img = random_image(70, 50, rng);
  const MeasurementMatrix id{Eigen::MatrixXd::Identity(1089, 1089), 0};
  const Image got = reconstruct_image(img, id, qinit_reconstructor(QInit{Eigen::MatrixXd::Identity(1089, 1089)}));
  CHECK((got - img).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("thread count does not change the reconstruction") {
  std::mt19937_64 rng(4);
  const Image img = random_image(99, 80, rng);
  const MeasurementMatrix phi = gen_measurement_matrix(100, 1089, 5);
  IstaConfig cfg;
  cfg.max_iters = 5;
  CHECK(reconstruct_image(img, phi, ista_reconstructor(phi, cfg), 1) ==
        reconstruct_image(img, phi, ista_reconstructor(phi, cfg), 3));
}

TEST_CASE("sampling and model mismatches") {
  const MeasurementMatrix phi = gen_measurement_matrix(272, 1089, 1);
  const Model m = Model::initialize({Variant::IstaNet, 1, 2, Tying::Unshared}, {Eigen::MatrixXd::Zero(1089, 109)}, 0);
  CHECK_THROWS_AS(reconstruct_image(Image::Zero(33, 33), phi, m), ConfigError);
  CHECK_THROWS_AS(model_reconstructor(m, phi), ConfigError);
  const MeasurementMatrix small = gen_measurement_matrix(10, 81, 1);
  CHECK_THROWS_AS(reconstruct_image(Image::Zero(33, 33), small, backprojection(small)), ConfigError);
  CHECK_THROWS_AS(reconstruct_image(Image::Zero(20, 40), phi, backprojection(phi)), InputError);
}

TEST_CASE("evaluate reports per-image scores and their mean") {
  std::mt19937_64 rng(5);
  const MeasurementMatrix phi = gen_measurement_matrix(272, 1089, 2);
  std::vector<Image> imgs{random_image(33, 66, rng), random_image(50, 50, rng), random_image(40, 40, rng)};
  const EvalReport rep = evaluate("bp", 0.25, imgs, {"a", "b", "c"}, phi, backprojection(phi));
  REQUIRE(rep.images.size() == 3);
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rep.images[i].psnr_db == psnr(imgs[i], reconstruct_image(imgs[i], phi, backprojection(phi))));
    sum += rep.images[i].psnr_db;
  }
  CHECK(rep.mean_psnr_db == doctest::Approx(sum / 3));
  CHECK(rep.images[1].name == "b");
  CHECK(std::isnan(evaluate("bp", 0.25, {}, {}, phi, backprojection(phi)).mean_psnr_db));
  CHECK_THROWS_AS(evaluate("bp", 0.25, imgs, {"a"}, phi, backprojection(phi)), ContractError);
}

TEST_CASE("file naming") {
  CHECK(ratio_label(0.25) == "25");
  CHECK(ratio_label(0.1) == "10");
  CHECK(ratio_label(0.04) == "4");
  CHECK(phi_filename(0.25) == "phi_r25.ucsp");
  CHECK(checkpoint_filename("istanet+", 0.5) == "istanet+_r50.istn");
}

TEST_CASE("sweep table shapes and missing inputs") {
  testing::TempDir corpus("corpus"), dir("sweep"), empty("empty");
  std::mt19937_64 rng(6);
  write_pgm(corpus.file("a.pgm"), random_image(33, 40, rng));
  write_pgm(corpus.file("b.pgm"), random_image(45, 33, rng));
  std::ofstream(corpus.file("notes.txt")) << "ignored";

  const SweepTable none = sweep({0.25}, {"ista"}, empty.path().string(), dir.path().string());
  CHECK(none.cells.empty());
  CHECK(sweep_csv(none) == "method,25%\n");

  const MeasurementMatrix phi = gen_measurement_matrix(272, 1089, 1);
  save_measurement_matrix(dir.file(phi_filename(0.25)), phi);
  Model m = Model::initialize({Variant::IstaNet, 1, 2, Tying::Unshared},
                              {phi.phi.transpose()}, 0, InitScheme::Identity, 0.0);
  save_model(dir.file(checkpoint_filename("istanet", 0.25)), m);

  const SweepTable t = sweep({0.25, 0.1}, {"istanet", "qinit", "istanet+"}, corpus.path().string(),
                             dir.path().string());
  REQUIRE(t.cells.size() == 6);
  CHECK(t.at(0, 0).report);
  CHECK(t.at(1, 0).report);
  CHECK_FALSE(t.at(2, 0).report);
  CHECK(t.at(2, 0).missing.find("istanet+_r25.istn") != std::string::npos);
  CHECK_FALSE(t.at(0, 1).report);
  CHECK(t.at(0, 1).missing.find("phi_r10.ucsp") != std::string::npos);
  REQUIRE(t.at(0, 0).report->images.size() == 2);
  CHECK(t.at(0, 0).report->images[0].name == "a.pgm");

  const std::string csv = sweep_csv(t);
  CHECK(csv.rfind("method,25%,10%\nistanet,", 0) == 0);
  CHECK(csv.find("istanet+,NA,NA\n") != std::string::npos);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 4);

  // A plain checkpoint filed under the plus name is rejected.
  save_model(dir.file(checkpoint_filename("istanet+", 0.25)), m);
  CHECK_THROWS_AS(sweep({0.25}, {"istanet+"}, corpus.path().string(), dir.path().string()), InputError);
  CHECK_THROWS_AS(sweep({0.25}, {"bogus"}, corpus.path().string(), dir.path().string()), ConfigError);
}

TEST_CASE("PNM reading and writing") {
  testing::TempDir dir("pnm");
  std::mt19937_64 rng(7);
  const Image img = random_image(13, 17, rng);
  write_pgm(dir.file("x.pgm"), img);
  const Image back = read_pnm(dir.file("x.pgm"));
  CHECK(back == img);

  {
    std::ofstream f(dir.file("c.ppm"), std::ios::binary);
    f << "P6\n# comment\n2 1\n255\n";
    const unsigned char px[] = {255, 0, 0, 10, 20, 30};
    f.write(reinterpret_cast<const char*>(px), 6);
  }
  const Image c = read_pnm(dir.file("c.ppm"));
  REQUIRE(c.rows() == 1);
  REQUIRE(c.cols() == 2);
  CHECK(c(0, 0) == doctest::Approx(0.299 * 255));
  CHECK(c(0, 1) == doctest::Approx(0.299 * 10 + 0.587 * 20 + 0.114 * 30));

  std::ofstream(dir.file("t.pgm"), std::ios::binary) << "P5\n4 4\n255\nab";
  CHECK_THROWS_AS(read_pnm(dir.file("t.pgm")), InputError);
  std::ofstream(dir.file("a.pgm"), std::ios::binary) << "P2\n1 1\n255\n0";
  CHECK_THROWS_AS(read_pnm(dir.file("a.pgm")), InputError);
  CHECK_THROWS_AS(list_images(dir.file("nope")), InputError);
}

}  // TEST_SUITE
