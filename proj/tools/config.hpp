#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pseudospec/degeneracy.hpp"
#include "pseudospec/model.hpp"

namespace pseudospec::cli {

// Configuration problems: unreadable file, JSON syntax, schema or model
// validation. Mapped to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PauliTerm {
  std::string pauli;
  Complex coeff;
};

struct ModelSection {
  Arrangement arrangement = Arrangement::Longitudinal;
  int n_sites = 4;
  double mixed_split = 0.5;
  // Fixed-scale point; used unless raw couplings are given.
  double j_tilde = 0.0;
  double gamma_tilde = 0.0;
  // Raw couplings with explicit per-site gain/loss.
  std::optional<double> delta;
  std::optional<double> coupling;
  std::vector<double> gamma_z;
  std::vector<double> gamma_x;
  // Free-form Pauli-string Hamiltonian (spectrum only).
  std::vector<PauliTerm> terms;
  std::vector<MetricLabel> metrics;
};

struct SweepSection {
  std::vector<double> j_tilde{linear_grid(0.0, 0.999, 1000)};
  std::vector<double> gamma_tilde{0.0};
};

struct TraceSection {
  double gamma_tilde = 0.0;             // seeds are protected crossings of this sweep
  std::vector<double> near_j_tilde;     // optional filter on seed locations
  double near_tolerance = 1e-3;
  TraceOptions options;
};

struct OracleSection {
  int samples = 10;
  int n_sites = 4;
  std::vector<int> extra_n_sites;
  double delta_min = 0.05, delta_max = 1.0;
  double coupling_min = 0.05, coupling_max = 1.0;
  double tolerance = 1e-10;
};

struct RunConfig {
  ModelSection model;
  SweepSection sweep;
  DegeneracyTolerances tolerances;
  TraceSection trace;
  OracleSection oracle;
  std::string output_directory = "out";
  unsigned long seed = 1;
  int threads = 1;

  bool free_form() const { return !model.terms.empty(); }
  bool raw_couplings() const { return model.delta.has_value() || model.coupling.has_value(); }
  // ModelConfig for chain models with raw couplings or the fixed-scale point.
  ModelConfig model_config() const;
};

// Reads and validates; throws ConfigError with line/column or field path.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

nlohmann::ordered_json to_json(const RunConfig& cfg);

}  // namespace pseudospec::cli
