#include "pseudospec/model.hpp"

#include <cmath>
#include <string>

#include "pseudospec/errors.hpp"

namespace pseudospec {

namespace {

constexpr double kPtTol = 1e-12;

std::string single_site(int n_sites, int site, char letter) {
  std::string s(n_sites, 'I');
  s[site] = letter;
  return s;
}

bool all_zero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

}  // namespace

std::string_view to_string(Arrangement kind) {
  switch (kind) {
    case Arrangement::Longitudinal: return "longitudinal";
    case Arrangement::Transversal: return "transversal";
    case Arrangement::Mixed: return "mixed";
  }
  return "?";
}

std::string_view to_string(MetricLabel label) {
  switch (label) {
    case MetricLabel::P: return "P";
    case MetricLabel::U: return "U";
    case MetricLabel::PU: return "PU";
  }
  return "?";
}

Arrangement parse_arrangement(std::string_view text) {
  if (text == "longitudinal") return Arrangement::Longitudinal;
  if (text == "transversal") return Arrangement::Transversal;
  if (text == "mixed") return Arrangement::Mixed;
  throw Error(ErrorKind::InvalidArgument,
              "unknown arrangement '" + std::string(text) +
                  "' (expected longitudinal, transversal or mixed)");
}

void GainLossConfig::validate() const {
  if (n_sites < 1) throw Error(ErrorKind::InvalidArgument, "n_sites must be >= 1");
  if (static_cast<int>(gamma_z.size()) != n_sites ||
      static_cast<int>(gamma_x.size()) != n_sites) {
    throw Error(ErrorKind::InvalidArgument, "gain/loss vectors must have n_sites entries");
  }
  for (int j = 0; j < n_sites; ++j) {
    if (!std::isfinite(gamma_z[j]) || !std::isfinite(gamma_x[j])) {
      throw Error(ErrorKind::InvalidArgument, "gain/loss entries must be finite");
    }
    const int mirror = n_sites - 1 - j;
    if (std::abs(gamma_z[j] + gamma_z[mirror]) > kPtTol ||
        std::abs(gamma_x[j] + gamma_x[mirror]) > kPtTol) {
      throw Error(ErrorKind::PTViolation,
                  "gamma[" + std::to_string(j + 1) + "] != -gamma[" +
                      std::to_string(mirror + 1) + "]");
    }
  }
  const bool z_zero = all_zero(gamma_z);
  const bool x_zero = all_zero(gamma_x);
  switch (kind) {
    case Arrangement::Longitudinal:
      if (!x_zero) throw Error(ErrorKind::InvalidArgument, "longitudinal requires gamma_x == 0");
      break;
    case Arrangement::Transversal:
      if (!z_zero) throw Error(ErrorKind::InvalidArgument, "transversal requires gamma_z == 0");
      break;
    case Arrangement::Mixed:
      if (z_zero != x_zero) {
        throw Error(ErrorKind::InvalidArgument,
                    "mixed requires both gamma_z and gamma_x to be non-zero");
      }
      break;
  }
}

double GainLossConfig::amplitude() const {
  double a = 0.0;
  for (std::size_t j = 0; j < gamma_z.size(); ++j) {
    a = std::max(a, std::abs(gamma_z[j]) + std::abs(gamma_x[j]));
  }
  return a;
}

void ModelConfig::validate() const {
  gain_loss.validate();
  if (!std::isfinite(delta) || !std::isfinite(coupling) || delta < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "delta must be finite and >= 0, coupling finite");
  }
  if (delta * delta + coupling * coupling <= 0.0) {
    throw Error(ErrorKind::ZeroScale, "delta and coupling are both zero");
  }
}

GainLossConfig staggered_config(Arrangement kind, int n_sites, double gamma,
                                double mixed_split) {
  if (n_sites < 2 || n_sites % 2 != 0) {
    throw Error(ErrorKind::OddChain,
                "staggered gain/loss needs an even chain, got n_sites=" + std::to_string(n_sites));
  }
  if (!std::isfinite(gamma)) throw Error(ErrorKind::InvalidArgument, "gamma must be finite");
  GainLossConfig cfg;
  cfg.n_sites = n_sites;
  cfg.kind = kind;
  cfg.gamma_z.assign(n_sites, 0.0);
  cfg.gamma_x.assign(n_sites, 0.0);
  for (int j = 0; j < n_sites; ++j) {
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    switch (kind) {
      case Arrangement::Longitudinal: cfg.gamma_z[j] = sign * gamma; break;
      case Arrangement::Transversal: cfg.gamma_x[j] = sign * gamma; break;
      case Arrangement::Mixed:
        cfg.gamma_z[j] = sign * mixed_split * gamma;
        cfg.gamma_x[j] = sign * (1.0 - mixed_split) * gamma;
        break;
    }
  }
  return cfg;
}

OperatorExpr hamiltonian_expr(const ModelConfig& cfg) {
  const int n = cfg.gain_loss.n_sites;
  const Complex i_unit(0.0, 1.0);
  OperatorExpr expr;
  for (int j = 0; j < n; ++j) {
    if (cfg.delta != 0.0) expr.add(PauliString::parse(single_site(n, j, 'X'), cfg.delta));
  }
  for (int j = 0; j + 1 < n; ++j) {
    if (cfg.coupling == 0.0) break;
    std::string s(n, 'I');
    s[j] = 'Z';
    s[j + 1] = 'Z';
    expr.add(PauliString::parse(s, -cfg.coupling));
  }
  for (int j = 0; j < n; ++j) {
    if (cfg.gain_loss.gamma_z[j] != 0.0) {
      expr.add(PauliString::parse(single_site(n, j, 'Z'), i_unit * cfg.gain_loss.gamma_z[j]));
    }
    if (cfg.gain_loss.gamma_x[j] != 0.0) {
      expr.add(PauliString::parse(single_site(n, j, 'X'), i_unit * cfg.gain_loss.gamma_x[j]));
    }
  }
  return expr;
}

DenseOperator build_hamiltonian(const ModelConfig& cfg) {
  cfg.validate();
  return to_dense(hamiltonian_expr(cfg), cfg.gain_loss.n_sites);
}

DenseOperator metric_operator(MetricLabel label, int n_sites) {
  switch (label) {
    case MetricLabel::P: return parity_operator(n_sites);
    case MetricLabel::U: return u_operator(n_sites);
    case MetricLabel::PU: return parity_operator(n_sites) * u_operator(n_sites);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown metric label");
}

std::vector<MetricDescriptor> pseudo_metric_catalog(const ModelConfig& cfg, double tol) {
  const DenseOperator h = build_hamiltonian(cfg);
  const int n = cfg.gain_loss.n_sites;
  std::vector<MetricLabel> labels{MetricLabel::P};
  switch (cfg.gain_loss.kind) {
    case Arrangement::Longitudinal: labels.push_back(MetricLabel::U); break;
    case Arrangement::Transversal: labels.push_back(MetricLabel::PU); break;
    case Arrangement::Mixed: break;
  }
  std::vector<MetricDescriptor> catalog;
  for (MetricLabel label : labels) {
    DenseOperator op = metric_operator(label, n);
    const double residual = pseudo_hermiticity_residual(h, op);
    if (residual > tol) {
      throw Error(ErrorKind::InvalidArgument,
                  "catalog metric " + std::string(to_string(label)) +
                      " fails the pseudo-Hermiticity check (residual " +
                      short_number(residual) + ")");
    }
    catalog.push_back({label, std::move(op)});
  }
  return catalog;
}

Normalization normalize(const ModelConfig& cfg) {
  const double scale = std::hypot(cfg.coupling, cfg.delta);
  if (!(scale > 0.0)) throw Error(ErrorKind::ZeroScale, "sqrt(J^2 + Delta^2) is zero");
  return {cfg.coupling / scale, cfg.gain_loss.amplitude() / scale, scale};
}

ModelConfig fixed_scale_config(Arrangement kind, int n_sites, ParamPoint p,
                               double mixed_split) {
  if (!(std::abs(p.j_tilde) <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "|J~| must not exceed 1");
  }
  ModelConfig cfg;
  cfg.gain_loss = staggered_config(kind, n_sites, p.gamma_tilde, mixed_split);
  cfg.coupling = p.j_tilde;
  cfg.delta = std::sqrt(std::max(0.0, 1.0 - p.j_tilde * p.j_tilde));
  return cfg;
}

ParameterFamily::ParameterFamily(Builder builder, std::vector<MetricDescriptor> metrics,
                                 ParamDomain domain, std::string name)
    : builder_(std::move(builder)),
      metrics_(std::move(metrics)),
      domain_(domain),
      name_(std::move(name)) {
  if (!builder_) throw Error(ErrorKind::InvalidArgument, "parameter family needs a builder");
  if (metrics_.empty()) {
    throw Error(ErrorKind::InvalidArgument, "parameter family needs at least one metric");
  }
}

std::vector<MetricLabel> ParameterFamily::metric_labels() const {
  std::vector<MetricLabel> out;
  out.reserve(metrics_.size());
  for (const auto& m : metrics_) out.push_back(m.label);
  return out;
}

ParameterFamily chain_family(Arrangement kind, int n_sites, double mixed_split) {
  // H(J~, g~) = Delta * Sx - J * Szz + i g~ * G, precomputed once.
  ModelConfig unit_field = fixed_scale_config(kind, n_sites, {0.0, 0.0}, mixed_split);
  const Matrix sx = build_hamiltonian(unit_field).matrix();
  ModelConfig unit_bond = unit_field;
  unit_bond.delta = 0.0;
  unit_bond.coupling = 1.0;
  const Matrix szz = -build_hamiltonian(unit_bond).matrix();
  ModelConfig unit_gain = unit_bond;
  unit_gain.coupling = 0.0;
  unit_gain.gain_loss = staggered_config(kind, n_sites, 1.0, mixed_split);
  OperatorExpr gain_expr = hamiltonian_expr(unit_gain);
  const Matrix gain = to_dense(gain_expr, n_sites).matrix();

  // Catalog checked at a generic interior point.
  const auto catalog =
      pseudo_metric_catalog(fixed_scale_config(kind, n_sites, {0.37, 0.23}, mixed_split));

  auto builder = [sx, szz, gain](ParamPoint p) -> Matrix {
    const double delta = std::sqrt(std::max(0.0, 1.0 - p.j_tilde * p.j_tilde));
    return delta * sx - p.j_tilde * szz + p.gamma_tilde * gain;
  };
  return ParameterFamily(builder, catalog, ParamDomain{},
                         std::string(to_string(kind)) + "-N" + std::to_string(n_sites));
}

}  // namespace pseudospec
