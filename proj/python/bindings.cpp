#include "istanet/errors.hpp"
#include "istanet/evaluator.hpp"
#include "istanet/image.hpp"
#include "istanet/ista.hpp"
#include "istanet/network.hpp"
#include "istanet/sampling.hpp"
#include "istanet/theorem.hpp"
#include "istanet/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace istanet;

namespace {

std::vector<Eigen::Index> to_indices(const std::vector<long>& v) { return {v.begin(), v.end()}; }

}  // namespace

PYBIND11_MODULE(_istanet, m) {
  m.doc() = "ISTA-Net compressive sensing core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.attr("BLOCK_SIZE") = kBlockSize;

  // sampling
  py::class_<MeasurementMatrix>(m, "MeasurementMatrix")
      .def_readonly("phi", &MeasurementMatrix::phi)
      .def_readonly("seed", &MeasurementMatrix::seed)
      .def_property_readonly("rows", &MeasurementMatrix::rows)
      .def_property_readonly("cols", &MeasurementMatrix::cols)
      .def_property_readonly("ratio", &MeasurementMatrix::ratio)
      .def("measure", [](const MeasurementMatrix& mm, const Eigen::MatrixXd& x) { return measure_all(mm, x); },
           "Column-wise y = phi x");
  m.def("gen_measurement_matrix", &gen_measurement_matrix, py::arg("m"), py::arg("n"), py::arg("seed"));
  m.def("measurements_for_ratio", &measurements_for_ratio, py::arg("ratio"), py::arg("n") = kBlockPixels);
  m.def("save_measurement_matrix", &save_measurement_matrix);
  m.def("load_measurement_matrix", &load_measurement_matrix);
  m.def("compute_qinit", [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) { return compute_qinit(x, y).q; },
        py::arg("x"), py::arg("y"), "Least-squares N x M map from measurements to blocks");

  // classical ISTA
  m.def("soft_threshold", [](const Eigen::VectorXd& x, double theta) { return soft_threshold(x, theta); },
        py::arg("x"), py::arg("theta"));
  m.def("dct_matrix", &dct_matrix);
  m.def("dct2", &dct2_orthonormal);
  m.def("idct2", &idct2_orthonormal);
  m.def("prox_dct", [](const Eigen::VectorXd& r, double lambda, Eigen::Index side) {
    return prox_orthogonal(r, lambda, Dct2Transform(side));
  }, py::arg("r"), py::arg("lam"), py::arg("side"));
  m.def("ista_solve", [](const Eigen::VectorXd& y, const MeasurementMatrix& mm, double lambda, double rho,
                         int max_iters, double tol) {
    const IstaResult res = ista_solve(y, mm, {lambda, rho, max_iters, tol});
    return py::make_tuple(res.x, res.objective);
  }, py::arg("y"), py::arg("phi"), py::arg("lam") = 0.01, py::arg("rho") = 1.0, py::arg("max_iters") = 200,
        py::arg("tol") = 1e-8, "Returns (x, objective trace)");

  // network
  py::enum_<Variant>(m, "Variant").value("IstaNet", Variant::IstaNet).value("IstaNetPlus", Variant::IstaNetPlus);
  py::class_<Model>(m, "Model")
      .def_property_readonly("variant", [](const Model& md) { return to_string(md.variant()); })
      .def_property_readonly("phases", &Model::phases)
      .def_property_readonly("filters", &Model::filters)
      .def_property_readonly("trainable_scalars", &Model::trainable_scalars)
      .def_property_readonly("q_init", [](const Model& md) { return md.q_init().q; })
      .def("reconstruct", [](const Model& md, const MeasurementMatrix& mm, const Eigen::MatrixXd& y, int threads) {
        std::vector<Eigen::Index> cols(static_cast<std::size_t>(y.cols()));
        for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = static_cast<Eigen::Index>(j);
        return reconstruct_blocks(md, mm, y, cols, threads);
      }, py::arg("phi"), py::arg("y"), py::arg("threads") = 1, "Reconstruct every column of y");
  m.def("init_model", [](const std::string& variant, int phases, int filters, const std::string& tying,
                         const Eigen::MatrixXd& q, std::uint64_t seed, const std::string& init, double noise) {
    return Model::initialize({parse_variant(variant), phases, filters, parse_tying(tying)}, {q}, seed,
                             parse_init_scheme(init), noise);
  }, py::arg("variant"), py::arg("phases"), py::arg("filters"), py::arg("tying") = "unshared", py::arg("q"),
        py::arg("seed") = 0, py::arg("init") = "dct", py::arg("noise") = 0.1);
  m.def("save_model", &save_model);
  m.def("load_model", &load_model);

  // trainer
  m.def("train", [](const Eigen::MatrixXd& x, const MeasurementMatrix& mm, const std::string& variant, int phases,
                    int filters, int epochs, int batch, double lr, double gamma, std::uint64_t seed,
                    double holdout, int threads) {
    TrainConfig cfg;
    cfg.model = {parse_variant(variant), phases, filters, Tying::Unshared};
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.gamma = gamma;
    cfg.seed = seed;
    cfg.holdout_fraction = holdout;
    cfg.threads = threads;
    TrainResult res = [&] {
      py::gil_scoped_release nogil;
      return train(cfg, make_dataset(mm, x, false), mm);
    }();
    py::list log;
    for (const EpochMetrics& e : res.log) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["total_loss"] = e.total_loss;
      d["discrepancy"] = e.discrepancy;
      d["constraint"] = e.constraint;
      d["holdout_psnr_db"] = e.holdout_psnr_db;
      log.append(d);
    }
    return py::make_tuple(std::move(res.model), log, res.holdout_blocks);
  }, py::arg("x"), py::arg("phi"), py::arg("variant") = "istanet", py::arg("phases") = 5, py::arg("filters") = 16,
        py::arg("epochs") = 1, py::arg("batch") = 64, py::arg("lr") = 1e-4, py::arg("gamma") = 0.01,
        py::arg("seed") = 0, py::arg("holdout") = 0.05, py::arg("threads") = 1,
        "Blocks are columns of x scaled to [0, 1]. Returns (model, per-epoch log, held-out columns)");
  m.def("pooled_block_psnr", &pooled_block_psnr, py::arg("reference"), py::arg("reconstructed"));
  m.def("symmetry_residual", [](const Model& md, const MeasurementMatrix& mm, const Eigen::MatrixXd& x,
                                const std::vector<long>& cols) {
    return symmetry_residual(md, mm, x, to_indices(cols));
  });

  // images and evaluation
  m.def("read_pnm", &read_pnm);
  m.def("write_pgm", &write_pgm);
  m.def("psnr", &psnr, py::arg("reference"), py::arg("test"));
  m.def("reconstruct_image",
        py::overload_cast<const Image&, const MeasurementMatrix&, const Model&, int>(&reconstruct_image),
        py::arg("image"), py::arg("phi"), py::arg("model"), py::arg("threads") = 1);

  // ReLU variance ratio
  m.def("relu_variance_ratio", [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma, long samples,
                                  std::uint64_t seed) {
    const RatioEstimate e = theorem1_ratio(a, b, sigma, samples, seed);
    return py::make_tuple(e.alpha, e.std_error);
  }, py::arg("a"), py::arg("b"), py::arg("sigma"), py::arg("samples"), py::arg("seed") = 0,
        "Monte Carlo tr Cov(B relu(A X)) / tr Cov(X); returns (alpha, standard error)");
}
