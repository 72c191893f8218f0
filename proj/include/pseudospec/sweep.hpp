#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pseudospec/model.hpp"
#include "pseudospec/spectral.hpp"

namespace pseudospec {

struct SweepPlan {
  std::vector<double> j_tilde_grid;        // strictly increasing, in [0, 1)
  std::vector<double> gamma_tilde_values;  // each >= 0
  Arrangement arrangement = Arrangement::Longitudinal;
  int n_sites = 4;
  double mixed_split = 0.5;

  void validate() const;
};

// Evenly spaced grid from `first` to `last` inclusive.
std::vector<double> linear_grid(double first, double last, int points);

struct BandSample {
  double j_tilde = 0.0;
  Complex eps_tilde;
  std::vector<std::optional<LevelIndex>> indices;  // catalog order
  bool defective = false;  // eigensolver reported a defective matrix here
  bool ambiguous = false;  // link from the previous sample was ambiguous
};

struct TrackedBand {
  int band_id = 0;
  std::vector<BandSample> samples;
};

// Eigensystem of one grid point after degenerate clusters were aligned with a
// neighbouring point. `level_of_band[b]` is the storage level of band b.
struct SweepPoint {
  double j_tilde = 0.0;
  bool defective = false;
  BiorthogonalEigensystem eig;
  std::vector<int> level_of_band;
};

struct SweepBlock {
  double gamma_tilde = 0.0;
  std::vector<MetricLabel> metrics;
  std::vector<TrackedBand> bands;
  std::vector<SweepPoint> points;
  std::vector<int> ambiguous_steps;  // k such that the link k-1 -> k was ambiguous
};

struct LevelAssignment {
  std::vector<int> next_of_prev;  // permutation
  std::vector<bool> ambiguous;    // per previous level
};

// Greedy matching on the gauge-invariant weights
// T_nm = <L_prev,n|R_next,m><L_next,m|R_prev,n>, which sum to one over m.
// Ties are broken by eigenvalue distance. Never throws on ambiguity.
LevelAssignment assign_levels(const BiorthogonalEigensystem& prev,
                              const BiorthogonalEigensystem& next,
                              double tol_cluster = 1e-8);

// Same matching; throws AmbiguousTracking when some level's best competitor
// outside its assigned cluster carries more than half its weight.
std::vector<int> track_levels(const BiorthogonalEigensystem& prev,
                              const BiorthogonalEigensystem& next,
                              double tol_cluster = 1e-8);

// Sweeps J~ over `grid` at fixed gamma~ for any parameter family.
SweepBlock sweep_family(const ParameterFamily& family, const std::vector<double>& grid,
                        double gamma_tilde, const SpectralTolerances& tol = {},
                        int threads = 1);

std::vector<SweepBlock> run_sweep(const SweepPlan& plan, const SpectralTolerances& tol = {},
                                  int threads = 1);

// CSV with one row per (gamma~, J~, band). Imaginary parts within the
// reality tolerance are written as 0; undefined indices as empty fields.
void write_sweep_csv(const std::vector<SweepBlock>& blocks, std::ostream& out,
                     const SpectralTolerances& tol = {});
void export_sweep(const std::vector<SweepBlock>& blocks, const std::string& path,
                  const SpectralTolerances& tol = {});

// "%.17g" with negative zero printed as 0.
std::string format_real(double value);

}  // namespace pseudospec
