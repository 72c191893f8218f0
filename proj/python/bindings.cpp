#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pseudospec/degeneracy.hpp"
#include "pseudospec/errors.hpp"
#include "pseudospec/oracle.hpp"
#include "pseudospec/sweep.hpp"

namespace py = pybind11;
using namespace pseudospec;

namespace {

py::object index_object(const std::optional<LevelIndex>& idx) {
  if (!idx) return py::none();
  return py::make_tuple(idx->value, idx->quality);
}

py::dict spectrum(Arrangement kind, int n_sites, double j_tilde, double gamma_tilde, double mixed_split) {
  const auto model = fixed_scale_config(kind, n_sites, {j_tilde, gamma_tilde}, mixed_split);
  const auto eig = biorthogonal_eig(build_hamiltonian(model));
  py::dict indices;
  for (const auto& m : pseudo_metric_catalog(model)) {
    const auto ix = index_levels(eig, m);
    py::list values;
    for (const auto& v : ix.indices) values.append(index_object(v));
    indices[py::str(std::string(to_string(m.label)))] = values;
  }
  py::dict out;
  out["eigenvalues"] = Vector(eig.eigenvalues);
  out["indices"] = indices;
  out["biorth_residual"] = eig.biorth_residual;
  return out;
}

py::list sweep(Arrangement kind, int n_sites, const std::vector<double>& j_grid,
               const std::vector<double>& gammas, double mixed_split, int threads) {
  const auto blocks = run_sweep({j_grid, gammas, kind, n_sites, mixed_split}, {}, threads);
  py::list out;
  for (const auto& b : blocks) {
    const Eigen::Index nb = static_cast<Eigen::Index>(b.bands.size());
    const Eigen::Index np = static_cast<Eigen::Index>(j_grid.size());
    Matrix eps(np, nb);
    std::vector<Eigen::MatrixXi> idx(b.metrics.size(), Eigen::MatrixXi::Zero(np, nb));
    for (Eigen::Index a = 0; a < nb; ++a) {
      for (Eigen::Index k = 0; k < np; ++k) {
        const auto& s = b.bands[a].samples[k];
        eps(k, a) = s.eps_tilde;
        for (std::size_t m = 0; m < b.metrics.size(); ++m) {
          if (s.indices[m]) idx[m](k, a) = s.indices[m]->value;
        }
      }
    }
    py::dict block, by_label;
    for (std::size_t m = 0; m < b.metrics.size(); ++m) by_label[py::str(std::string(to_string(b.metrics[m])))] = idx[m];
    block["gamma_tilde"] = b.gamma_tilde;
    block["j_tilde"] = j_grid;
    block["eps_tilde"] = eps;
    block["indices"] = by_label;
    out.append(block);
  }
  return out;
}

std::vector<CrossingEvent> crossings(Arrangement kind, int n_sites, const std::vector<double>& j_grid,
                                     double gamma, double mixed_split, int threads) {
  const auto family = chain_family(kind, n_sites, mixed_split);
  return scan_crossings(family, sweep_family(family, j_grid, gamma, {}, threads));
}

std::vector<ManifoldTrace> trace_manifolds(Arrangement kind, int n_sites, const std::vector<double>& j_grid,
                                           double gamma, double mixed_split, double step, int max_points) {
  const auto family = chain_family(kind, n_sites, mixed_split);
  TraceOptions opt;
  opt.step = step;
  opt.max_points = max_points;
  std::vector<ManifoldTrace> out;
  for (const auto& e : scan_crossings(family, sweep_family(family, j_grid, gamma))) {
    if (e.classification == Classification::Diabolical && check_zero_condition(e.index_products)) {
      out.push_back(trace_dp_manifold(family, e, opt));
    }
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Biorthogonal spectra, topological indices and degeneracies of pseudo-Hermitian Ising chains.";

  // Messages start with the error name, e.g. "DefectiveMatrix: ...".
  py::register_exception<Error>(m, "PseudospecError", PyExc_RuntimeError);

  py::enum_<Arrangement>(m, "Arrangement")
      .value("LONGITUDINAL", Arrangement::Longitudinal)
      .value("TRANSVERSAL", Arrangement::Transversal)
      .value("MIXED", Arrangement::Mixed);
  py::enum_<MetricLabel>(m, "MetricLabel").value("P", MetricLabel::P).value("U", MetricLabel::U).value("PU", MetricLabel::PU);
  py::enum_<Classification>(m, "Classification")
      .value("UNCLASSIFIED", Classification::Unclassified)
      .value("EP2", Classification::EP2)
      .value("DIABOLICAL", Classification::Diabolical)
      .value("AVOIDED", Classification::Avoided);
  py::enum_<Termination>(m, "Termination")
      .value("EP_BOUNDARY", Termination::EPBoundary)
      .value("DOMAIN_BOUNDARY", Termination::DomainBoundary)
      .value("STEP_LIMIT", Termination::StepLimit)
      .value("CORRECTOR_DIVERGENCE", Termination::CorrectorDivergence);

  py::class_<ParamPoint>(m, "ParamPoint")
      .def(py::init<>())
      .def(py::init([](double j, double g) { return ParamPoint{j, g}; }), py::arg("j_tilde"), py::arg("gamma_tilde"))
      .def_readwrite("j_tilde", &ParamPoint::j_tilde)
      .def_readwrite("gamma_tilde", &ParamPoint::gamma_tilde)
      .def("__repr__", [](const ParamPoint& p) {
        return "ParamPoint(" + format_real(p.j_tilde) + ", " + format_real(p.gamma_tilde) + ")";
      });

  py::class_<CrossingEvent>(m, "CrossingEvent")
      .def_readonly("location", &CrossingEvent::location)
      .def_readonly("band_pair", &CrossingEvent::band_pair)
      .def_readonly("classification", &CrossingEvent::classification)
      .def_readonly("index_products", &CrossingEvent::index_products)
      .def_readonly("gap_residual", &CrossingEvent::gap_residual)
      .def_readonly("energy", &CrossingEvent::energy)
      .def_property_readonly("protected", [](const CrossingEvent& e) {
        return e.classification == Classification::Diabolical && check_zero_condition(e.index_products);
      });

  py::class_<ManifoldTrace>(m, "ManifoldTrace")
      .def_property_readonly("points",
                             [](const ManifoldTrace& t) {
                               Eigen::MatrixX2d pts(t.points.size(), 2);
                               for (std::size_t i = 0; i < t.points.size(); ++i) {
                                 pts(i, 0) = t.points[i].j_tilde;
                                 pts(i, 1) = t.points[i].gamma_tilde;
                               }
                               return pts;
                             })
      .def_readonly("gaps", &ManifoldTrace::gaps)
      .def_property_readonly("begin", [](const ManifoldTrace& t) { return t.begin.termination; })
      .def_property_readonly("end", [](const ManifoldTrace& t) { return t.end.termination; })
      .def_property_readonly("end_ep", [](const ManifoldTrace& t) -> py::object {
        if (!t.end.ep) return py::none();
        return py::cast(t.end.ep->location);
      });

  py::class_<OracleCheck>(m, "OracleCheck")
      .def_readonly("max_energy_error", &OracleCheck::max_energy_error)
      .def_readonly("index_mismatches", &OracleCheck::index_mismatches)
      .def_readonly("cluster_mismatches", &OracleCheck::cluster_mismatches)
      .def("passed", &OracleCheck::passed, py::arg("tol") = 1e-10);

  m.def(
      "hamiltonian",
      [](Arrangement kind, int n, double j, double g, double split) {
        return Matrix(build_hamiltonian(fixed_scale_config(kind, n, {j, g}, split)).matrix());
      },
      py::arg("arrangement"), py::arg("n_sites"), py::arg("j_tilde"), py::arg("gamma_tilde"),
      py::arg("mixed_split") = 0.5, "Dense H at J = J~, Delta = sqrt(1 - J~^2), gain amplitude gamma~.");
  m.def("spectrum", &spectrum, py::arg("arrangement"), py::arg("n_sites"), py::arg("j_tilde"),
        py::arg("gamma_tilde"), py::arg("mixed_split") = 0.5,
        "Eigenvalues and per-metric (index, quality) pairs, None where undefined.");
  m.def("sweep", &sweep, py::arg("arrangement"), py::arg("n_sites"), py::arg("j_tilde"), py::arg("gamma_tilde"),
        py::arg("mixed_split") = 0.5, py::arg("threads") = 1,
        "Tracked bands: one dict per gamma~ with eps_tilde[point, band] and indices (0 = undefined).");
  m.def("crossings", &crossings, py::arg("arrangement"), py::arg("n_sites"), py::arg("j_tilde"),
        py::arg("gamma_tilde"), py::arg("mixed_split") = 0.5, py::arg("threads") = 1);
  m.def("trace_manifolds", &trace_manifolds, py::arg("arrangement"), py::arg("n_sites"), py::arg("j_tilde"),
        py::arg("gamma_tilde") = 0.0, py::arg("mixed_split") = 0.5, py::arg("step") = 1e-2,
        py::arg("max_points") = 500, "Continuation of every protected crossing found on the grid.");
  m.def(
      "oracle_check", [](double delta, double coupling, int n) { return check_against_dense(delta, coupling, n); },
      py::arg("delta"), py::arg("coupling"), py::arg("n_sites"));
  m.def("free_fermion_spectrum",
        [](double delta, double coupling, int n) {
          return many_body_spectrum(single_particle_modes(delta, coupling, n));
        },
        py::arg("delta"), py::arg("coupling"), py::arg("n_sites"));
}
