#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pseudospec/errors.hpp"

namespace pseudospec::cli {

namespace {

using nlohmann::json;

// Object reader that records the field path and rejects unknown keys.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) fail(field(key), "unknown field");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(field(key), "must be finite");
    return x;
  }

  double positive(const std::string& key, double fallback) {
    const double x = number(key, fallback);
    if (!(x > 0)) fail(field(key), "must be positive");
    return x;
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number_integer()) fail(field(key), "expected an integer");
    return v.get<int>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    if (!has(key)) return out;
    const auto& v = node_.at(key);
    if (!v.is_array()) fail(field(key), "expected an array of numbers");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError("field '" + path + "': " + what);
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

MetricLabel parse_label(const std::string& s, const std::string& path) {
  if (s == "P") return MetricLabel::P;
  if (s == "U") return MetricLabel::U;
  if (s == "PU") return MetricLabel::PU;
  Section::fail(path, "unknown metric '" + s + "' (expected P, U or PU)");
}

void read_model(const json& node, ModelSection& m) {
  Section s(node, "model");
  try {
    m.arrangement = parse_arrangement(s.text("arrangement", "longitudinal"));
  } catch (const Error& e) {
    Section::fail("model.arrangement", e.detail());
  }
  m.n_sites = s.integer("n_sites", m.n_sites);
  m.mixed_split = s.number("mixed_split", m.mixed_split);
  m.j_tilde = s.number("j_tilde", m.j_tilde);
  m.gamma_tilde = s.number("gamma_tilde", m.gamma_tilde);
  if (s.has("delta")) m.delta = s.number("delta", 0.0);
  if (s.has("coupling")) m.coupling = s.number("coupling", 0.0);
  m.gamma_z = s.numbers("gamma_z");
  m.gamma_x = s.numbers("gamma_x");
  if (s.has("terms")) {
    const auto& arr = s.at("terms");
    if (!arr.is_array()) Section::fail("model.terms", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section t(arr[i], "model.terms[" + std::to_string(i) + "]");
      PauliTerm term;
      term.pauli = t.text("pauli", "");
      if (term.pauli.empty()) Section::fail(t.field("pauli"), "required");
      const auto c = t.numbers("coeff");
      if (c.size() != 2) Section::fail(t.field("coeff"), "expected [re, im]");
      term.coeff = Complex(c[0], c[1]);
      m.terms.push_back(term);
    }
  }
  if (s.has("metrics")) {
    const auto& arr = s.at("metrics");
    if (!arr.is_array()) Section::fail("model.metrics", "expected an array of labels");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "model.metrics[" + std::to_string(i) + "]";
      if (!arr[i].is_string()) Section::fail(path, "expected a string");
      m.metrics.push_back(parse_label(arr[i].get<std::string>(), path));
    }
  }
}

void read_sweep(const json& node, SweepSection& sw) {
  Section s(node, "sweep");
  if (s.has("j_tilde")) {
    const auto& v = s.at("j_tilde");
    if (v.is_object()) {
      Section g(v, "sweep.j_tilde");
      const double first = g.number("first", 0.0);
      const double last = g.number("last", 0.999);
      const int points = g.integer("points", 1000);
      if (points < 2) Section::fail("sweep.j_tilde.points", "must be at least 2");
      sw.j_tilde = linear_grid(first, last, points);
    } else {
      sw.j_tilde = s.numbers("j_tilde");
    }
  }
  if (s.has("gamma_tilde")) sw.gamma_tilde = s.numbers("gamma_tilde");
}

void read_tolerances(const json& node, DegeneracyTolerances& t) {
  Section s(node, "tolerances");
  t.spectral.real = s.positive("real", t.spectral.real);
  t.spectral.cluster = s.positive("cluster", t.spectral.cluster);
  t.spectral.quality = s.positive("quality", t.spectral.quality);
  t.spectral.defective = s.positive("defective", t.spectral.defective);
  t.gap = s.positive("gap", t.gap);
  t.quality = t.spectral.quality;
  t.ep_overlap = s.positive("ep_overlap", t.ep_overlap);
  if (t.ep_overlap >= 1.0) Section::fail("tolerances.ep_overlap", "must be below 1");
  t.avoided_gap_max = s.positive("avoided_gap_max", t.avoided_gap_max);
  t.side_offset = s.positive("side_offset", t.side_offset);
  t.fd_step = s.positive("fd_step", t.fd_step);
  t.fd_rel_tol = s.positive("fd_rel_tol", t.fd_rel_tol);
}

void read_trace(const json& node, TraceSection& tr) {
  Section s(node, "trace");
  tr.gamma_tilde = s.number("gamma_tilde", tr.gamma_tilde);
  tr.near_j_tilde = s.numbers("near_j_tilde");
  tr.near_tolerance = s.positive("near_tolerance", tr.near_tolerance);
  tr.options.step = s.positive("step", tr.options.step);
  tr.options.min_step = s.positive("min_step", tr.options.min_step);
  tr.options.max_points = s.integer("max_points", tr.options.max_points);
  if (tr.options.max_points < 1) Section::fail("trace.max_points", "must be positive");
  tr.options.trust_factor = s.positive("trust_factor", tr.options.trust_factor);
}

void read_oracle(const json& node, OracleSection& o) {
  Section s(node, "oracle");
  o.samples = s.integer("samples", o.samples);
  if (o.samples < 1) Section::fail("oracle.samples", "must be positive");
  o.n_sites = s.integer("n_sites", o.n_sites);
  if (o.n_sites < 2 || o.n_sites > 10) Section::fail("oracle.n_sites", "must be in [2, 10]");
  if (s.has("extra_n_sites")) {
    for (double n : s.numbers("extra_n_sites")) {
      if (n != std::floor(n) || n < 2 || n > 10) Section::fail("oracle.extra_n_sites", "entries must be integers in [2, 10]");
      o.extra_n_sites.push_back(static_cast<int>(n));
    }
  }
  o.delta_min = s.positive("delta_min", o.delta_min);
  o.delta_max = s.positive("delta_max", o.delta_max);
  o.coupling_min = s.positive("coupling_min", o.coupling_min);
  o.coupling_max = s.positive("coupling_max", o.coupling_max);
  if (o.delta_max < o.delta_min) Section::fail("oracle.delta_max", "must not be below delta_min");
  if (o.coupling_max < o.coupling_min) Section::fail("oracle.coupling_max", "must not be below coupling_min");
  o.tolerance = s.positive("tolerance", o.tolerance);
}

// Model-level validation so that bad models are reported as config errors.
void validate(const RunConfig& cfg) {
  const auto& m = cfg.model;
  if (cfg.free_form()) {
    for (std::size_t i = 0; i < m.terms.size(); ++i) {
      try {
        const auto p = PauliString::parse(m.terms[i].pauli, m.terms[i].coeff);
        if (static_cast<std::size_t>(p.n_sites()) != m.terms[0].pauli.size()) throw Error(ErrorKind::InvalidArgument, "length mismatch");
      } catch (const Error& e) {
        Section::fail("model.terms[" + std::to_string(i) + "].pauli", e.detail());
      }
    }
    return;
  }
  if (m.n_sites < 2 || m.n_sites > 10) Section::fail("model.n_sites", "must be in [2, 10]");
  if (!(m.mixed_split > 0 && m.mixed_split < 1)) Section::fail("model.mixed_split", "must be in (0, 1)");
  try {
    cfg.model_config().validate();
  } catch (const Error& e) {
    Section::fail("model", std::string(e.what()));
  }
  if (!cfg.raw_couplings() && !(m.j_tilde >= 0 && m.j_tilde < 1)) {
    Section::fail("model.j_tilde", "must be in [0, 1)");
  }
  if (!cfg.raw_couplings() && m.gamma_tilde < 0) Section::fail("model.gamma_tilde", "must be >= 0");
  try {
    SweepPlan{cfg.sweep.j_tilde, cfg.sweep.gamma_tilde, m.arrangement, m.n_sites, m.mixed_split}.validate();
  } catch (const Error& e) {
    Section::fail("sweep", std::string(e.what()));
  }
}

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  const auto& m = model;
  if (!raw_couplings()) return fixed_scale_config(m.arrangement, m.n_sites, {m.j_tilde, m.gamma_tilde}, m.mixed_split);
  ModelConfig cfg;
  cfg.delta = m.delta.value_or(0.0);
  cfg.coupling = m.coupling.value_or(0.0);
  if (m.gamma_z.empty() && m.gamma_x.empty()) {
    cfg.gain_loss = staggered_config(m.arrangement, m.n_sites, m.gamma_tilde * std::hypot(cfg.delta, cfg.coupling),
                                     m.mixed_split);
  } else {
    cfg.gain_loss.n_sites = m.n_sites;
    cfg.gain_loss.kind = m.arrangement;
    cfg.gain_loss.gamma_z = m.gamma_z.empty() ? std::vector<double>(m.n_sites, 0.0) : m.gamma_z;
    cfg.gain_loss.gamma_x = m.gamma_x.empty() ? std::vector<double>(m.n_sites, 0.0) : m.gamma_x;
  }
  return cfg;
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("syntax error at " + line_column(text, e.byte) + ": " + e.what());
  }
  RunConfig cfg;
  {
    Section s(root, "");
    if (s.has("model")) read_model(s.at("model"), cfg.model);
    if (s.has("sweep")) read_sweep(s.at("sweep"), cfg.sweep);
    if (s.has("tolerances")) read_tolerances(s.at("tolerances"), cfg.tolerances);
    if (s.has("trace")) read_trace(s.at("trace"), cfg.trace);
    if (s.has("oracle")) read_oracle(s.at("oracle"), cfg.oracle);
    if (s.has("output")) {
      Section o(s.at("output"), "output");
      cfg.output_directory = o.text("directory", cfg.output_directory);
    }
    if (s.has("seed")) {
      const int seed = s.integer("seed", 1);
      if (seed < 0) Section::fail("seed", "must be >= 0");
      cfg.seed = static_cast<unsigned long>(seed);
    }
    cfg.threads = s.integer("threads", cfg.threads);
    if (cfg.threads < 1) Section::fail("threads", "must be positive");
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  using oj = nlohmann::ordered_json;
  const auto& m = cfg.model;
  oj model;
  model["arrangement"] = std::string(to_string(m.arrangement));
  model["n_sites"] = m.n_sites;
  model["mixed_split"] = m.mixed_split;
  model["j_tilde"] = m.j_tilde;
  model["gamma_tilde"] = m.gamma_tilde;
  model["delta"] = m.delta ? oj(*m.delta) : oj(nullptr);
  model["coupling"] = m.coupling ? oj(*m.coupling) : oj(nullptr);
  model["gamma_z"] = m.gamma_z;
  model["gamma_x"] = m.gamma_x;
  oj terms = oj::array();
  for (const auto& t : m.terms) terms.push_back({{"pauli", t.pauli}, {"coeff", {t.coeff.real(), t.coeff.imag()}}});
  model["terms"] = terms;
  oj metrics = oj::array();
  for (auto l : m.metrics) metrics.push_back(std::string(to_string(l)));
  model["metrics"] = metrics;

  const auto& t = cfg.tolerances;
  oj tol{{"real", t.spectral.real},   {"cluster", t.spectral.cluster},       {"quality", t.spectral.quality},
         {"defective", t.spectral.defective}, {"gap", t.gap},                {"ep_overlap", t.ep_overlap},
         {"avoided_gap_max", t.avoided_gap_max}, {"side_offset", t.side_offset}, {"fd_step", t.fd_step},
         {"fd_rel_tol", t.fd_rel_tol}};
  const auto& tr = cfg.trace;
  oj trace{{"gamma_tilde", tr.gamma_tilde},       {"near_j_tilde", tr.near_j_tilde},
           {"near_tolerance", tr.near_tolerance}, {"step", tr.options.step},
           {"min_step", tr.options.min_step},     {"max_points", tr.options.max_points},
           {"trust_factor", tr.options.trust_factor}};
  const auto& o = cfg.oracle;
  oj oracle{{"samples", o.samples},           {"n_sites", o.n_sites},           {"delta_min", o.delta_min},
            {"delta_max", o.delta_max},       {"coupling_min", o.coupling_min}, {"coupling_max", o.coupling_max},
            {"extra_n_sites", o.extra_n_sites}, {"tolerance", o.tolerance}};
  oj out;
  out["model"] = model;
  out["sweep"] = {{"j_tilde", cfg.sweep.j_tilde}, {"gamma_tilde", cfg.sweep.gamma_tilde}};
  out["tolerances"] = tol;
  out["trace"] = trace;
  out["oracle"] = oracle;
  out["output"] = {{"directory", cfg.output_directory}};
  out["seed"] = cfg.seed;
  out["threads"] = cfg.threads;
  return out;
}

}  // namespace pseudospec::cli
