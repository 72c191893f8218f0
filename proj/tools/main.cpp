// pseudospec: spectra, sweeps, crossings and protected-degeneracy manifolds of
// pseudo-Hermitian transverse-field Ising chains.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "config.hpp"
#include "pseudospec/degeneracy.hpp"
#include "pseudospec/errors.hpp"
#include "pseudospec/oracle.hpp"
#include "pseudospec/sweep.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace pseudospec;
using pseudospec::cli::ConfigError;
using pseudospec::cli::RunConfig;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kConfig = 2, kNumerical = 3 };

struct Overrides {
  std::string config_path;
  std::string out;
  int threads = 0;
  long seed = -1;
};

struct Run {
  RunConfig cfg;
  fs::path out;
};

Run prepare(const Overrides& ov, const std::string& command) {
  Run run{cli::load_config(ov.config_path), {}};
  if (ov.threads < 0) throw ConfigError("--threads must be positive");
  if (ov.threads > 0) run.cfg.threads = ov.threads;
  if (ov.seed >= 0) run.cfg.seed = static_cast<unsigned long>(ov.seed);
  if (!ov.out.empty()) {
    run.cfg.output_directory = ov.out;
  } else if (const char* env = std::getenv("PSEUDOSPEC_OUT"); env && *env) {
    run.cfg.output_directory = env;
  }
  run.out = run.cfg.output_directory;
  std::error_code ec;
  fs::create_directories(run.out, ec);
  if (ec || !fs::is_directory(run.out)) {
    throw ConfigError("output directory '" + run.out.string() + "' is not writable");
  }
  ordered_json resolved = cli::to_json(run.cfg);
  resolved["command"] = command;
  std::ofstream log(run.out / "resolved_config.json");
  if (!log) throw ConfigError("cannot write to output directory '" + run.out.string() + "'");
  log << resolved.dump(2) << "\n";
  return run;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return out;
}

void require_chain(const RunConfig& cfg, const std::string& command) {
  if (cfg.free_form()) throw ConfigError("field 'model.terms': only supported by the spectrum command (" + command + ")");
}

ordered_json complex_json(Complex z) { return {{"re", z.real()}, {"im", z.imag()}}; }

int cmd_spectrum(const Run& run) {
  const auto& cfg = run.cfg;
  const auto& tol = cfg.tolerances.spectral;
  std::optional<DenseOperator> h;
  std::vector<MetricDescriptor> metrics;
  double scale = 1.0;
  ordered_json params;
  if (cfg.free_form()) {
    OperatorExpr expr;
    for (const auto& t : cfg.model.terms) expr.add(PauliString::parse(t.pauli, t.coeff));
    const int n = expr.n_sites();
    h.emplace(to_dense(expr, n));
    for (auto label : cfg.model.metrics) metrics.push_back({label, metric_operator(label, n)});
    params["n_sites"] = n;
  } else {
    const ModelConfig model = cfg.model_config();
    h.emplace(build_hamiltonian(model));
    const Normalization norm = normalize(model);
    scale = norm.scale;
    auto catalog = pseudo_metric_catalog(model);
    if (cfg.model.metrics.empty()) {
      metrics = std::move(catalog);
    } else {
      for (auto label : cfg.model.metrics) metrics.push_back({label, metric_operator(label, cfg.model.n_sites)});
    }
    params = {{"arrangement", std::string(to_string(cfg.model.arrangement))},
              {"n_sites", cfg.model.n_sites},
              {"delta", model.delta},
              {"coupling", model.coupling},
              {"j_tilde", norm.j_tilde},
              {"gamma_tilde", norm.gamma_tilde}};
  }
  SpectralTolerances scaled = tol;
  scaled.scale = scale;
  const auto eig = biorthogonal_eig(*h, scaled);
  std::vector<MetricIndexing> indexing;
  for (const auto& m : metrics) indexing.push_back(index_levels(eig, m, scaled));

  ordered_json levels = ordered_json::array();
  for (int n = 0; n < eig.size(); ++n) {
    const Complex eps = eig.eigenvalues[n];
    ordered_json level{{"level", n}, {"eps_tilde", complex_json(eps / scale)}, {"real", is_real_level(eps, scaled)}};
    ordered_json idx = ordered_json::object();
    for (const auto& ix : indexing) {
      const auto& v = ix.indices[n];
      idx[std::string(to_string(ix.label))] =
          v ? ordered_json{{"value", v->value}, {"quality", v->quality}} : ordered_json(nullptr);
    }
    level["indices"] = idx;
    levels.push_back(level);
  }
  ordered_json labels = ordered_json::array();
  for (const auto& m : metrics) labels.push_back(std::string(to_string(m.label)));
  ordered_json doc{{"parameters", params},
                   {"scale", scale},
                   {"metrics", labels},
                   {"biorth_residual", eig.biorth_residual},
                   {"levels", levels}};
  auto out = open_output(run.out / "spectrum.json");
  out << doc.dump(2) << "\n";
  std::cerr << "spectrum: " << eig.size() << " levels -> " << (run.out / "spectrum.json").string() << "\n";
  return kOk;
}

SweepPlan sweep_plan(const RunConfig& cfg) {
  return {cfg.sweep.j_tilde, cfg.sweep.gamma_tilde, cfg.model.arrangement, cfg.model.n_sites, cfg.model.mixed_split};
}

int cmd_sweep(const Run& run) {
  require_chain(run.cfg, "sweep");
  const auto blocks = run_sweep(sweep_plan(run.cfg), run.cfg.tolerances.spectral, run.cfg.threads);
  export_sweep(blocks, (run.out / "sweep.csv").string(), run.cfg.tolerances.spectral);
  std::cerr << "sweep: " << blocks.size() << " blocks -> " << (run.out / "sweep.csv").string() << "\n";
  return kOk;
}

int cmd_crossings(const Run& run) {
  const auto& cfg = run.cfg;
  require_chain(cfg, "crossings");
  const auto family = chain_family(cfg.model.arrangement, cfg.model.n_sites, cfg.model.mixed_split);
  std::vector<CrossingEvent> events;
  for (double gamma : cfg.sweep.gamma_tilde) {
    const auto block = sweep_family(family, cfg.sweep.j_tilde, gamma, cfg.tolerances.spectral, cfg.threads);
    auto found = scan_crossings(family, block, cfg.tolerances);
    events.insert(events.end(), found.begin(), found.end());
  }
  auto out = open_output(run.out / "events.csv");
  write_events_csv(events, family.metric_labels(), out);
  std::cerr << "crossings: " << events.size() << " events -> " << (run.out / "events.csv").string() << "\n";
  return kOk;
}

int cmd_trace_manifold(const Run& run) {
  const auto& cfg = run.cfg;
  require_chain(cfg, "trace-manifold");
  const auto& tr = cfg.trace;
  const auto family = chain_family(cfg.model.arrangement, cfg.model.n_sites, cfg.model.mixed_split);
  const auto block = sweep_family(family, cfg.sweep.j_tilde, tr.gamma_tilde, cfg.tolerances.spectral, cfg.threads);
  std::vector<ManifoldTrace> traces;
  for (const auto& e : scan_crossings(family, block, cfg.tolerances)) {
    if (e.classification != Classification::Diabolical || !check_zero_condition(e.index_products)) continue;
    if (!tr.near_j_tilde.empty()) {
      bool near = false;
      for (double j : tr.near_j_tilde) near = near || std::abs(e.location.j_tilde - j) <= tr.near_tolerance;
      if (!near) continue;
    }
    traces.push_back(trace_dp_manifold(family, e, tr.options, cfg.tolerances));
    const auto& t = traces.back();
    std::cerr << "trace-manifold: seed J~=" << e.location.j_tilde << " -> " << t.points.size() << " points, ends "
              << to_string(t.begin.termination) << "/" << to_string(t.end.termination) << "\n";
  }
  auto out = open_output(run.out / "manifold.csv");
  write_manifold_csv(traces, out);
  if (traces.empty()) std::cerr << "trace-manifold: no protected seeds found\n";
  return kOk;
}

int cmd_oracle_check(const Run& run) {
  const auto& o = run.cfg.oracle;
  std::mt19937_64 rng(run.cfg.seed);
  std::uniform_real_distribution<double> delta(o.delta_min, o.delta_max);
  std::uniform_real_distribution<double> coupling(o.coupling_min, o.coupling_max);
  std::vector<int> sizes{o.n_sites};
  sizes.insert(sizes.end(), o.extra_n_sites.begin(), o.extra_n_sites.end());

  ordered_json samples = ordered_json::array();
  int failures = 0;
  for (int n : sizes) {
    for (int s = 0; s < o.samples; ++s) {
      const double d = delta(rng), j = coupling(rng);
      const auto c = check_against_dense(d, j, n, run.cfg.tolerances.spectral);
      const bool ok = c.passed(o.tolerance);
      failures += ok ? 0 : 1;
      samples.push_back({{"n_sites", n},
                         {"delta", d},
                         {"coupling", j},
                         {"max_energy_error", c.max_energy_error},
                         {"nondegenerate_levels", c.nondegenerate_levels},
                         {"index_mismatches", c.index_mismatches},
                         {"cluster_mismatches", c.cluster_mismatches},
                         {"passed", ok}});
    }
  }
  ordered_json doc{{"seed", run.cfg.seed},
                   {"tolerance", o.tolerance},
                   {"checks", samples.size()},
                   {"failures", failures},
                   {"passed", failures == 0},
                   {"samples", samples}};
  auto out = open_output(run.out / "oracle_report.json");
  out << doc.dump(2) << "\n";
  std::cerr << "oracle-check: " << samples.size() - failures << "/" << samples.size() << " passed\n";
  return failures == 0 ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Spectra and degeneracies of pseudo-Hermitian transverse-field Ising chains.\n"
      "Sweeps hold sqrt(J^2 + Delta^2) = 1: J = J~, Delta = sqrt(1 - J~^2), gain amplitude = gamma~."};
  app.require_subcommand(1);
  Overrides ov;
  using Handler = int (*)(const Run&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"spectrum", "eigenvalues and indices at one parameter point -> spectrum.json", cmd_spectrum},
      {"sweep", "tracked bands over the J~ grid for each gamma~ -> sweep.csv", cmd_sweep},
      {"crossings", "classified crossings for each gamma~ -> events.csv", cmd_crossings},
      {"trace-manifold", "protected degeneracy lines from the crossings at trace.gamma_tilde -> manifold.csv",
       cmd_trace_manifold},
      {"oracle-check", "free-fermion spectrum and U indices vs dense diagonalization -> oracle_report.json",
       cmd_oracle_check},
  };
  for (const auto& [name, help, handler] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", ov.config_path, "JSON run configuration")->required();
    sub->add_option("--out", ov.out, "output directory (overrides PSEUDOSPEC_OUT and output.directory)");
    sub->add_option("--threads", ov.threads, "worker threads for grid evaluation");
    sub->add_option("--seed", ov.seed, "seed for randomized checks");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  for (const auto& [name, help, handler] : commands) {
    if (!app.got_subcommand(name)) continue;
    try {
      return handler(prepare(ov, name));
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfig;
    } catch (const Error& e) {
      std::cerr << "numerical error: " << e.what() << "\n";
      return kNumerical;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kNumerical;
    }
  }
  return kConfig;
}
