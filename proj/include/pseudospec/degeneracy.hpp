#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pseudospec/model.hpp"
#include "pseudospec/spectral.hpp"
#include "pseudospec/sweep.hpp"

namespace pseudospec {

enum class Classification { Unclassified, EP2, Diabolical, Avoided };
enum class CandidateKind { SignChange, GapMinimum, RealToComplex };
enum class Termination { EPBoundary, DomainBoundary, StepLimit, CorrectorDivergence };

std::string_view to_string(Classification c);
std::string_view to_string(CandidateKind k);
std::string_view to_string(Termination t);

struct DegeneracyTolerances {
  SpectralTolerances spectral;
  double gap = 1e-8;                 // |eps_a - eps_b| counted as degenerate
  double quality = 1e-6;             // EP quality collapse
  double ep_overlap = 1.0 - 1e-4;    // |<R_a|R_b>| / (|R_a||R_b|) counted as coalesced
  double avoided_gap_max = 0.1;      // gap minima above this are not reported
  double side_offset = 1e-5;         // distance of the index-product probes
  double fd_step = 1e-5;             // finite-difference step, halved once
  double fd_rel_tol = 1e-5;          // Richardson disagreement limit
};

using IndexProducts = std::map<MetricLabel, int>;

// True iff two metrics assign opposite products to the same level pair.
bool check_zero_condition(const IndexProducts& products);

// Levels of `eig` that continue the levels `pair` of `ref`, chosen by the
// weight of the pair's spectral projector. Nullopt when a third level carries
// more than half the weight of the weaker choice.
std::optional<std::array<int, 2>> select_pair(const BiorthogonalEigensystem& ref,
                                              std::array<int, 2> pair,
                                              const BiorthogonalEigensystem& eig);

struct EventDiagnostics {
  double min_quality = 0.0;
  double eigvec_overlap = 0.0;
  bool defective = false;
  std::optional<ParamPoint> complex_side;  // for real-to-complex events
  std::string note;
};

struct CrossingEvent {
  ParamPoint location;
  std::array<int, 2> band_pair{};  // band ids of the sweep
  std::array<int, 2> levels{};     // storage levels at `location`
  CandidateKind candidate = CandidateKind::SignChange;
  Classification classification = Classification::Unclassified;
  IndexProducts index_products;    // only metrics defined on both levels
  double gap_residual = 0.0;
  double energy = 0.0;             // Re of the pair mean
  EventDiagnostics diagnostics;
};

// Candidates from one J~ sweep: sign changes of Re(eps_a - eps_b) between
// real samples (bisected until the gap is below tol.gap), local minima of the
// gap between energy-adjacent real bands below tol.avoided_gap_max (golden
// section), and real-to-complex transitions (bisected by locate_ep_1d).
std::vector<CrossingEvent> find_crossings_1d(const ParameterFamily& family, const SweepBlock& block,
                                             const DegeneracyTolerances& tol = {});

// Classifies at event.location and records index products just outside it.
// Throws UnresolvedClassification when the diagnostics are borderline.
CrossingEvent classify_crossing(const ParameterFamily& family, const CrossingEvent& event,
                                const DegeneracyTolerances& tol = {});

// find_crossings_1d followed by classify_crossing; borderline events are kept
// as Unclassified with the reason in diagnostics.note.
std::vector<CrossingEvent> scan_crossings(const ParameterFamily& family, const SweepBlock& block,
                                          const DegeneracyTolerances& tol = {});

struct EPLocation {
  ParamPoint location;      // last point where both levels are real
  ParamPoint complex_side;  // first point where they are not
  double accuracy = 0.0;    // distance between the two
  std::array<int, 2> levels{};
  double min_quality = 0.0;
  double eigvec_overlap = 0.0;
  bool defective = false;   // the eigensolver reported a defective matrix
};

// Bisection on the reality of the pair along the segment a -> b. `pair` are
// the storage levels at a. Throws NoTransition if both ends agree.
EPLocation locate_ep_1d(const ParameterFamily& family, std::array<int, 2> pair, ParamPoint a,
                        ParamPoint b, const DegeneracyTolerances& tol = {},
                        double accuracy = 1e-15);

struct MetricProjection {
  MetricLabel label;
  int product = 0;             // zeta_1 zeta_2
  Eigen::Vector2cd w;          // <L_1|dH|R_2> in the metric gauge
  Eigen::Vector2cd lower;      // <L_2|dH|R_1>
  double reciprocity_residual = 0.0;  // |lower - product * conj(w)|
};

struct ProjectedHamiltonian {
  ParamPoint base;
  std::array<double, 2> eps_pair{};
  std::array<int, 2> levels{};
  Eigen::Vector2d u1 = Eigen::Vector2d::Zero();
  Eigen::Vector2d u2 = Eigen::Vector2d::Zero();
  double u_imag_residual = 0.0;  // max |Im| of the diagonal gradients
  double grad_norm = 0.0;        // sqrt(|dH/dJ|_F^2 + |dH/dgamma|_F^2)
  double fd_discrepancy = 0.0;   // relative Richardson disagreement
  std::vector<MetricProjection> metrics;
  IndexProducts index_products;
  double min_angle = 0.0;        // between u_minus and Re w, Im w
  bool near_collinear = false;   // min_angle < 1e-3

  Eigen::Vector2d u_minus() const { return 0.5 * (u1 - u2); }
  Eigen::Vector2d u_plus() const { return 0.5 * (u1 + u2); }
  // Linearized 2x2 block at base + dp in the gauge of one metric.
  Eigen::Matrix2cd linear_block(const MetricProjection& m, const Eigen::Vector2d& dp) const;
};

// Central differences over (J~, gamma~) with one Richardson halving; the pair
// must be real with qualities above tol.quality at `base`.
ProjectedHamiltonian project_hamiltonian(const ParameterFamily& family, ParamPoint base,
                                         std::array<int, 2> levels,
                                         const DegeneracyTolerances& tol = {});

struct TraceOptions {
  double step = 1e-2;
  double min_step = 1e-6;
  int max_points = 500;       // per direction
  double trust_factor = 5.0;  // corrector may move at most trust_factor * step
  bool locate_boundary_ep = true;
};

struct ManifoldEnd {
  Termination termination = Termination::StepLimit;
  std::optional<ParamPoint> probe;   // failing point beyond the last accepted one
  std::optional<EPLocation> ep;      // EP located between the end and the probe
  std::string diagnostic;
};

struct ManifoldTrace {
  std::vector<ParamPoint> points;            // ordered from `begin` to `end`
  std::vector<double> gaps;
  std::vector<std::array<int, 2>> levels;    // storage levels at each point
  MetricLabel identifying_metric = MetricLabel::P;
  ManifoldEnd begin;
  ManifoldEnd end;
};

// Predictor-corrector continuation of the protected degeneracy through the
// seed. The seed must be Diabolical with check_zero_condition true.
ManifoldTrace trace_dp_manifold(const ParameterFamily& family, const CrossingEvent& seed,
                                const TraceOptions& options = {},
                                const DegeneracyTolerances& tol = {});

void write_events_csv(const std::vector<CrossingEvent>& events,
                      const std::vector<MetricLabel>& labels, std::ostream& out);
void write_manifold_csv(const std::vector<ManifoldTrace>& traces, std::ostream& out);

}  // namespace pseudospec
