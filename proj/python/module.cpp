#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plap/dirls.hpp"
#include "plap/error.hpp"
#include "plap/graph.hpp"
#include "plap/io.hpp"
#include "plap/newton.hpp"
#include "plap/nfunction.hpp"
#include "plap/regression.hpp"

namespace py = pybind11;
using namespace plap;

namespace {

Integrand make_integrand(double p, std::optional<std::pair<double, double>> delta) {
  if (delta) return Integrand::regularized(p, delta->first, delta->second);
  return Integrand::power(p);
}

py::dict record_dict(const ConvergenceRecord& rec) {
  std::vector<Index> iter;
  std::vector<double> j, jstar, gap;
  for (const auto& e : rec.entries) {
    iter.push_back(e.iter);
    j.push_back(e.primal_energy);
    jstar.push_back(e.dual_energy);
    gap.push_back(e.gap);
  }
  py::dict d;
  d["iter"] = iter;
  d["J"] = j;
  d["Jstar"] = jstar;
  d["gap"] = gap;
  return d;
}

DirlsConfig dirls_config(std::optional<double> gap_tol, Index max_iters, const std::string& inner) {
  DirlsConfig cfg;
  cfg.gap_tol = gap_tol;
  cfg.max_outer = max_iters;
  cfg.inner.method = inner_method_from_string(inner);
  return cfg;
}

py::dict dirls_dict(const DirlsResult& r) {
  py::dict d;
  d["u_g"] = r.u_g;
  d["sigma"] = r.sigma;
  d["status"] = std::string(to_string(r.status));
  d["converged"] = r.converged();
  d["iterations"] = static_cast<Index>(r.record.entries.size());
  d["gap"] = r.state.gap;
  d["gap_tol"] = r.gap_tol;
  d["record"] = record_dict(r.record);
  return d;
}

RegressionInstance instance(const Eigen::MatrixXd& a, const Vector& b, double p) {
  return {SparseMatrix::from_dense(a), b, p};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual IRLS for p-Laplace problems and lp regression";

  py::register_exception<Error>(m, "PlapError", PyExc_RuntimeError);

  py::class_<Integrand>(m, "Integrand")
      .def(py::init(&make_integrand), py::arg("p"), py::arg("delta") = std::nullopt)
      .def_property_readonly("p", &Integrand::p)
      .def_property_readonly("regularized", &Integrand::is_regularized)
      .def("phi", &Integrand::phi)
      .def("phi_prime", &Integrand::phi_prime)
      .def("conj", &Integrand::conj)
      .def("conj_prime", &Integrand::conj_prime);

  m.def(
      "random_instance",
      [](Index rows, Index cols, std::uint64_t seed) {
        const auto inst = random_instance(rows, cols, seed);
        return py::make_tuple(Eigen::MatrixXd(inst.a.to_dense()), inst.b);
      },
      py::arg("m"), py::arg("n"), py::arg("seed"), "Dense A, b with entries uniform on (0, 1).");

  m.def("lp_norm", &lp_norm, py::arg("r"), py::arg("p"));

  m.def(
      "solve_regression",
      [](const Eigen::MatrixXd& a, const Vector& b, double p, std::pair<double, double> delta,
         std::optional<double> gap_tol, Index max_iters, const std::string& inner) {
        const auto inst = instance(a, b, p);
        const ProblemSpec spec = build_lifted(inst, delta.first, delta.second);
        DirlsResult r;
        {
          py::gil_scoped_release release;
          r = dirls_solve(spec, dirls_config(gap_tol, max_iters, inner));
        }
        py::dict d = dirls_dict(r);
        const Vector u = regression_coefficients(inst, r.u_g);
        d["u"] = u;
        d["residual"] = lp_residual(inst, u);
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("p"), py::arg("delta") = std::make_pair(1e-9, 1e9),
      py::arg("gap_tol") = std::nullopt, py::arg("max_iters") = 200, py::arg("inner") = "auto",
      "min ||A u - b||_p by dual IRLS on the lifted problem.");

  m.def(
      "newton_regression",
      [](const Eigen::MatrixXd& a, const Vector& b, double p, double eps, Index max_iters) {
        const auto inst = instance(a, b, p);
        const ProblemSpec spec = build_lifted(inst, Integrand::power(p));
        NewtonConfig cfg;
        cfg.eps = eps;
        cfg.max_outer = max_iters;
        NewtonResult r;
        {
          py::gil_scoped_release release;
          r = newton_solve(spec, cfg);
        }
        const Vector u = regression_coefficients(inst, r.u_g);
        py::dict d;
        d["u"] = u;
        d["status"] = std::string(to_string(r.status));
        d["converged"] = r.converged();
        d["iterations"] = r.iterations;
        d["residual"] = lp_residual(inst, u);
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("p"), py::arg("eps") = 1e-8, py::arg("max_iters") = 500);

  m.def(
      "solve_problem",
      [](const std::string& path, std::optional<double> gap_tol, Index max_iters, const std::string& inner) {
        const ProblemSpec spec = load_problem(path);
        check_well_posed(spec);
        DirlsResult r;
        {
          py::gil_scoped_release release;
          r = dirls_solve(spec, dirls_config(gap_tol, max_iters, inner));
        }
        return dirls_dict(r);
      },
      py::arg("path"), py::arg("gap_tol") = std::nullopt, py::arg("max_iters") = 200, py::arg("inner") = "auto",
      "Solve a problem stored in the JSON container format.");

  m.def(
      "knn_graph",
      [](const Eigen::MatrixXd& features, Index k) {
        const WeightedGraph g = knn_graph(features, k);
        Eigen::Matrix<Index, Eigen::Dynamic, 2, Eigen::RowMajor> edges(g.num_edges(), 2);
        for (Index e = 0; e < g.num_edges(); ++e) {
          edges(e, 0) = g.edges[static_cast<std::size_t>(e)][0];
          edges(e, 1) = g.edges[static_cast<std::size_t>(e)][1];
        }
        return py::make_tuple(edges, g.weights);
      },
      py::arg("features"), py::arg("k"));

  m.def("pca_reduce", &pca_reduce, py::arg("features"), py::arg("components"));

  m.def(
      "classify",
      [](const Eigen::MatrixXd& features, const std::vector<int>& labels, int n_classes, double p, Index k,
         std::pair<double, double> delta, Index max_iters, int threads) {
        SslTask task{features, labels, n_classes};
        task.validate();
        const WeightedGraph g = knn_graph(features, k);
        ClassifyConfig cfg;
        cfg.dirls.max_outer = max_iters;
        cfg.threads = threads;
        ClassifyResult r;
        {
          py::gil_scoped_release release;
          r = one_vs_rest_classify(g, task, Integrand::regularized(p, delta.first, delta.second), cfg);
        }
        py::dict d;
        d["predictions"] = r.predictions;
        d["laplacian_predictions"] = r.predictions_at(0);
        std::vector<std::string> status;
        for (const auto& c : r.per_class) status.emplace_back(to_string(c.status));
        d["status"] = status;
        return d;
      },
      py::arg("features"), py::arg("labels"), py::arg("n_classes"), py::arg("p") = 10.0, py::arg("k") = 10,
      py::arg("delta") = std::make_pair(1e-3, 1e3), py::arg("max_iters") = 200, py::arg("threads") = 1,
      "One-vs-rest graph classification; -1 marks unlabeled vertices.");
}
