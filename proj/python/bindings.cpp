#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "twolayer/activations.hpp"
#include "twolayer/dataset.hpp"
#include "twolayer/diagnostics.hpp"
#include "twolayer/errors.hpp"
#include "twolayer/harness.hpp"
#include "twolayer/model.hpp"
#include "twolayer/optimizer.hpp"
#include "twolayer/reports.hpp"

namespace py = pybind11;
using namespace twolayer;

namespace {

NetworkParams params(const Eigen::MatrixXd& W, const Eigen::VectorXd& theta) {
  return NetworkParams{W, theta};
}

Eigen::MatrixXd trajectory_matrix(const TrajectoryRecord& t) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(t.rows.size()), 8);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    M.row(static_cast<Eigen::Index>(i)) << static_cast<double>(r.k), r.f, r.grad_norm_F,
        r.sigma_min_W, r.sigma_min_D, r.resid_norm, static_cast<double>(r.inner_steps),
        r.inner_final_f;
  }
  return M;
}

}  // namespace

PYBIND11_MODULE(_twolayer, m) {
  m.doc() = "Native core of twolayer_opt";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<NameError>(m, "UnknownNameError", base.ptr());
  py::register_exception<NumericsError>(m, "NumericsError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<ActivationFunction>(m, "Activation")
      .def_property_readonly("name", &ActivationFunction::name)
      .def("eval", &ActivationFunction::eval)
      .def("deriv", &ActivationFunction::deriv)
      .def("deriv2", &ActivationFunction::deriv2)
      .def_property_readonly("value_bound", &ActivationFunction::value_bound)
      .def_property_readonly("deriv_lipschitz", &ActivationFunction::deriv_lipschitz)
      .def_property_readonly("grad_H_bound", &ActivationFunction::grad_H_bound)
      .def_property_readonly("claimed_c1", &ActivationFunction::claimed_c1);

  m.def("activation_names", &builtin_activation_names);
  m.def("activation", &builtin_activation, py::return_value_policy::reference,
        py::arg("name"));
  m.def("vector_apply", &vector_apply, py::arg("activation"), py::arg("z"));
  m.def(
      "c1_probe_json",
      [](const ActivationFunction& a, const std::vector<std::pair<double, double>>& iv,
         std::size_t grid, double tol) { return to_json_string(c1_probe(a, iv, grid, tol)); },
      py::arg("activation"), py::arg("intervals"), py::arg("grid_points"), py::arg("tol"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const Eigen::MatrixXd& U, const Eigen::VectorXd& v) {
             return Dataset(U, v);
           }),
           py::arg("inputs"), py::arg("labels"))
      .def_property_readonly("inputs", &Dataset::inputs)
      .def_property_readonly("labels", &Dataset::labels)
      .def_property_readonly("size", &Dataset::size)
      .def_property_readonly("dim", &Dataset::dim)
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def(
      "generate_inputs",
      [](Eigen::Index d, Eigen::Index N, const std::string& dist, std::uint64_t seed) {
        return generate_inputs(d, N, parse_distribution(dist), seed);
      },
      py::arg("d"), py::arg("N"), py::arg("distribution") = "uniform_cube", py::arg("seed") = 0);
  m.def(
      "label_with_teacher",
      [](const Eigen::MatrixXd& U, const Eigen::MatrixXd& W, const Eigen::VectorXd& theta,
         const std::string& act, double noise, std::uint64_t noise_seed) {
        return label_with_teacher(U, Teacher{params(W, theta), act}, noise, noise_seed);
      },
      py::arg("inputs"), py::arg("W"), py::arg("theta"), py::arg("activation"),
      py::arg("noise_std") = 0.0, py::arg("noise_seed") = 0);
  m.def("save_dataset", &save, py::arg("dataset"), py::arg("path"));
  m.def("load_dataset", &load, py::arg("path"));

  m.def(
      "forward",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Eigen::VectorXd& u) { return forward(params(W, theta), a, u); },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("u"));
  m.def(
      "loss",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Dataset& ds) { return loss(params(W, theta), a, ds); },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("dataset"));
  m.def(
      "grad_W",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Dataset& ds) { return grad_W(params(W, theta), a, ds); },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("dataset"));
  m.def(
      "grad_theta",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Dataset& ds) { return grad_theta(params(W, theta), a, ds); },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("dataset"));
  m.def(
      "stationarity_system",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Dataset& ds) {
        auto sys = stationarity_system(params(W, theta), a, ds);
        return py::make_tuple(sys.D, sys.s);
      },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("dataset"));

  m.def(
      "svd_rank_json",
      [](const Eigen::MatrixXd& M, double tol) { return to_json_string(svd_rank(M, tol)); },
      py::arg("M"), py::arg("rank_tol") = kDefaultRankTol);
  m.def(
      "collection_rank_json",
      [](const ActivationFunction& a, std::optional<Eigen::MatrixXd> W, const Eigen::MatrixXd& U,
         double tol) { return to_json_string(collection_rank(a, W, U, tol)); },
      py::arg("activation"), py::arg("W"), py::arg("inputs"),
      py::arg("rank_tol") = kDefaultRankTol);
  m.def(
      "lipschitz_estimates_json",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Dataset& ds) { return to_json_string(lipschitz_estimates(params(W, theta), a, ds)); },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("dataset"));
  m.def(
      "certify_json",
      [](const Eigen::MatrixXd& W, const Eigen::VectorXd& theta, const ActivationFunction& a,
         const Dataset& ds, double tol) {
        return to_json_string(certify(params(W, theta), a, ds, tol));
      },
      py::arg("W"), py::arg("theta"), py::arg("activation"), py::arg("dataset"),
      py::arg("rank_tol") = kDefaultRankTol);

  m.def("prox_ball", &prox_ball, py::arg("x"), py::arg("y"), py::arg("radius"));

  m.def(
      "run_json",
      [](const ActivationFunction& a, const Dataset& ds, const std::string& config_json) {
        const auto cfg = run_config_from_json(config_json);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run(a, ds, cfg);
        }
        return py::make_tuple(r.params.W, r.params.theta, trajectory_matrix(r.trajectory),
                              to_json_string(r.info));
      },
      py::arg("activation"), py::arg("dataset"), py::arg("config_json") = "{}");
  m.def("trajectory_columns", &trajectory_columns);

  m.def("suite_names", &suite_names);
  m.def(
      "run_suite_json",
      [](const std::string& suite, const std::string& spec_json, unsigned threads) {
        const auto spec = spec_from_json(spec_json);
        py::gil_scoped_release release;
        return to_json_string(run_suite(suite, spec, threads));
      },
      py::arg("suite"), py::arg("spec_json") = "{}", py::arg("threads") = 1);
}
