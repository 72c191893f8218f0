#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pseudospec/operators.hpp"

namespace pseudospec {

enum class Arrangement { Longitudinal, Transversal, Mixed };
enum class MetricLabel { P, U, PU };

std::string_view to_string(Arrangement kind);
std::string_view to_string(MetricLabel label);
Arrangement parse_arrangement(std::string_view text);

// Per-site imaginary fields i*(gamma_z[j] Z_j + gamma_x[j] X_j).
struct GainLossConfig {
  int n_sites = 0;
  std::vector<double> gamma_z;
  std::vector<double> gamma_x;
  Arrangement kind = Arrangement::Longitudinal;

  // Throws PTViolation / InvalidArgument when the mirror constraint or the
  // arrangement pattern is broken. All-zero fields are valid for every kind.
  void validate() const;

  // max_j (|gamma_z[j]| + |gamma_x[j]|); equals the staggering amplitude for
  // the staggered patterns.
  double amplitude() const;
};

struct ModelConfig {
  GainLossConfig gain_loss;
  double delta = 1.0;     // transverse field
  double coupling = 0.0;  // Ising J

  void validate() const;
};

struct MetricDescriptor {
  MetricLabel label;
  DenseOperator op;
};

GainLossConfig staggered_config(Arrangement kind, int n_sites, double gamma,
                                double mixed_split = 0.5);

OperatorExpr hamiltonian_expr(const ModelConfig& cfg);
DenseOperator build_hamiltonian(const ModelConfig& cfg);

DenseOperator metric_operator(MetricLabel label, int n_sites);

// Parameter-independent pseudo-metrics for the arrangement, each checked
// against the Hamiltonian of cfg; a metric failing the residual test throws.
std::vector<MetricDescriptor> pseudo_metric_catalog(const ModelConfig& cfg,
                                                    double tol = 1e-12);

struct Normalization {
  double j_tilde;
  double gamma_tilde;
  double scale;
};

Normalization normalize(const ModelConfig& cfg);

// Point in the normalized (J~, gamma~) plane.
struct ParamPoint {
  double j_tilde = 0.0;
  double gamma_tilde = 0.0;
};

// Fixed-scale convention: J = J~, Delta = sqrt(1 - J~^2), staggered amplitude
// gamma = gamma~, so that sqrt(J^2 + Delta^2) = 1 and eps~ = eps.
ModelConfig fixed_scale_config(Arrangement kind, int n_sites, ParamPoint p,
                               double mixed_split = 0.5);

struct ParamDomain {
  double j_min = 0.0;
  double j_max = 1.0;  // exclusive
  double gamma_min = 0.0;
  double gamma_max = std::numeric_limits<double>::infinity();

  bool contains(ParamPoint p) const {
    return p.j_tilde >= j_min && p.j_tilde < j_max && p.gamma_tilde >= gamma_min &&
           p.gamma_tilde <= gamma_max;
  }
};

// A two-parameter Hamiltonian family with its parameter-independent metrics.
// The chain models use chain_family(); tests and small analytic checks build
// their own from a lambda.
class ParameterFamily {
 public:
  using Builder = std::function<Matrix(ParamPoint)>;

  ParameterFamily(Builder builder, std::vector<MetricDescriptor> metrics,
                  ParamDomain domain = {}, std::string name = "custom");

  DenseOperator hamiltonian(ParamPoint p) const { return DenseOperator(builder_(p)); }
  const std::vector<MetricDescriptor>& metrics() const noexcept { return metrics_; }
  const ParamDomain& domain() const noexcept { return domain_; }
  const std::string& name() const noexcept { return name_; }
  std::vector<MetricLabel> metric_labels() const;

 private:
  Builder builder_;
  std::vector<MetricDescriptor> metrics_;
  ParamDomain domain_;
  std::string name_;
};

ParameterFamily chain_family(Arrangement kind, int n_sites, double mixed_split = 0.5);

}  // namespace pseudospec
