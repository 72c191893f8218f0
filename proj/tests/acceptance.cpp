// Acceptance report: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pseudospec/degeneracy.hpp"
#include "pseudospec/errors.hpp"
#include "pseudospec/oracle.hpp"

using namespace pseudospec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr std::array<Arrangement, 3> kArrangements{Arrangement::Longitudinal, Arrangement::Transversal,
                                                   Arrangement::Mixed};
const std::vector<double> kGammas{0.0, 0.1, 0.2, 0.4};

// Shared N=4 sweeps on the 1e-3 grid, computed once.
class Sweeps {
 public:
  const ParameterFamily& family(Arrangement kind) {
    auto it = families_.find(kind);
    if (it == families_.end()) it = families_.emplace(kind, chain_family(kind, 4)).first;
    return it->second;
  }
  const SweepBlock& block(Arrangement kind, double gamma) {
    const auto key = std::make_pair(kind, gamma);
    auto it = blocks_.find(key);
    if (it == blocks_.end()) {
      it = blocks_.emplace(key, sweep_family(family(kind), linear_grid(0.0, 0.999, 1000), gamma)).first;
    }
    return it->second;
  }
  const std::vector<CrossingEvent>& events(Arrangement kind, double gamma) {
    const auto key = std::make_pair(kind, gamma);
    auto it = events_.find(key);
    if (it == events_.end()) it = events_.emplace(key, scan_crossings(family(kind), block(kind, gamma))).first;
    return it->second;
  }

 private:
  std::map<Arrangement, ParameterFamily> families_;
  std::map<std::pair<Arrangement, double>, SweepBlock> blocks_;
  std::map<std::pair<Arrangement, double>, std::vector<CrossingEvent>> events_;
};

Sweeps& sweeps() {
  static Sweeps s;
  return s;
}

double distance(ParamPoint a, ParamPoint b) { return std::hypot(a.j_tilde - b.j_tilde, a.gamma_tilde - b.gamma_tilde); }

std::vector<CrossingEvent> red_dots(Arrangement kind) {
  std::vector<CrossingEvent> out;
  for (const auto& e : sweeps().events(kind, 0.0)) {
    if (e.classification == Classification::Diabolical && check_zero_condition(e.index_products)) out.push_back(e);
  }
  return out;
}

GainLossConfig random_pt_config(Arrangement kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(-0.3, 0.3);
  GainLossConfig cfg;
  cfg.n_sites = 4;
  cfg.kind = kind;
  cfg.gamma_z.assign(4, 0.0);
  cfg.gamma_x.assign(4, 0.0);
  for (int j = 0; j < 2; ++j) {
    const double z = kind == Arrangement::Transversal ? 0.0 : amp(rng);
    const double x = kind == Arrangement::Longitudinal ? 0.0 : amp(rng);
    cfg.gamma_z[j] = z, cfg.gamma_z[3 - j] = -z;
    cfg.gamma_x[j] = x, cfg.gamma_x[3 - j] = -x;
  }
  return cfg;
}

Outcome biorthonormality() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int accepted = 0, attempts = 0;
  double worst_biorth = 0.0, worst_recon = 0.0;
  while (accepted < 50 && attempts < 1000) {
    ++attempts;
    ModelConfig cfg;
    cfg.gain_loss = random_pt_config(kArrangements[attempts % 3], rng);
    cfg.coupling = unit(rng);
    cfg.delta = 0.2 + unit(rng);
    const auto h = build_hamiltonian(cfg);
    BiorthogonalEigensystem eig;
    try {
      eig = biorthogonal_eig(h);
    } catch (const Error&) {
      continue;
    }
    // Away from EPs: all levels separated.
    double min_gap = std::numeric_limits<double>::infinity();
    for (int a = 0; a < eig.size(); ++a)
      for (int b = a + 1; b < eig.size(); ++b) min_gap = std::min(min_gap, std::abs(eig.eigenvalues(a) - eig.eigenvalues(b)));
    if (min_gap < 1e-3) continue;
    ++accepted;
    const Matrix lr = eig.left * eig.right;
    worst_biorth = std::max(worst_biorth, (lr - Matrix::Identity(lr.rows(), lr.cols())).norm() / std::sqrt(double(lr.rows())));
    const Matrix rec = eig.right * eig.eigenvalues.asDiagonal() * eig.left;
    worst_recon = std::max(worst_recon, (rec - h.matrix()).norm() / h.matrix().norm());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {accepted == 50 && worst_biorth <= 1e-8 && worst_recon <= 1e-8 && secs < 5.0,
          fmt("%d configs, max |LR-1| %.2e, max reconstruction %.2e, %.2f s", accepted, worst_biorth, worst_recon,
              secs)};
}

Outcome catalog() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0, worst_comm = 0.0;
  int checked = 0;
  for (auto kind : kArrangements) {
    for (int trial = 0; trial < 10; ++trial) {
      ModelConfig cfg;
      cfg.gain_loss = random_pt_config(kind, rng);
      cfg.coupling = unit(rng);
      cfg.delta = unit(rng);
      const auto h = build_hamiltonian(cfg);
      for (const auto& m : pseudo_metric_catalog(cfg)) {
        worst = std::max(worst, pseudo_hermiticity_residual(h, m.op));
        ++checked;
      }
      if (kind == Arrangement::Transversal) worst_comm = std::max(worst_comm, commutator_norm(h, u_operator(4)));
    }
  }
  return {worst <= 1e-12 && worst_comm <= 1e-12,
          fmt("%d metric checks, max residual %.2e, transversal max ||[H,U]|| %.2e", checked, worst, worst_comm)};
}

Outcome oracle() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  double worst = 0.0;
  int runs = 0, failed = 0, levels = 0;
  for (int n : {2, 3, 4}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto c = check_against_dense(unit(rng), unit(rng), n);
      worst = std::max(worst, c.max_energy_error);
      levels += c.nondegenerate_levels;
      if (!c.passed(1e-10)) ++failed;
      ++runs;
    }
  }
  return {failed == 0, fmt("%d runs, %d failed, max energy error %.2e, %d non-degenerate U indices checked", runs,
                           failed, worst, levels)};
}

Outcome index_conservation() {
  long violations = 0, comparisons = 0, ambiguous = 0;
  for (auto kind : kArrangements) {
    for (double g : kGammas) {
      const auto& block = sweeps().block(kind, g);
      ambiguous += static_cast<long>(block.ambiguous_steps.size());
      for (const auto& band : block.bands) {
        for (std::size_t k = 1; k < band.samples.size(); ++k) {
          const auto& a = band.samples[k - 1];
          const auto& b = band.samples[k];
          if (b.ambiguous || a.defective || b.defective) continue;
          for (std::size_t m = 0; m < a.indices.size(); ++m) {
            if (!a.indices[m] || !b.indices[m]) continue;
            ++comparisons;
            if (a.indices[m]->value != b.indices[m]->value) ++violations;
          }
        }
      }
    }
  }
  return {violations == 0 && comparisons > 0,
          fmt("%ld violations over %ld neighbouring index pairs (12 sweeps, %ld ambiguous links skipped)", violations,
              comparisons, ambiguous)};
}

Outcome ep_rule() {
  int eps = 0, violations = 0, undefined = 0;
  for (auto kind : {Arrangement::Longitudinal, Arrangement::Transversal}) {
    for (double g : kGammas) {
      for (const auto& e : sweeps().events(kind, g)) {
        if (e.classification != Classification::EP2) continue;
        ++eps;
        if (e.index_products.empty()) ++undefined;
        for (const auto& [label, product] : e.index_products)
          if (product != -1) ++violations;
      }
    }
  }
  return {violations == 0 && eps > 0,
          fmt("%d EP2 events, %d violations, %d without defined indices", eps, violations, undefined)};
}

std::map<std::pair<Arrangement, int>, ManifoldTrace>& traces() {
  static std::map<std::pair<Arrangement, int>, ManifoldTrace> t;
  return t;
}

Outcome red_dot_stability() {
  std::string detail;
  bool pass = true;
  int seeds = 0;
  for (auto kind : {Arrangement::Longitudinal, Arrangement::Transversal}) {
    const auto& family = sweeps().family(kind);
    const auto reds = red_dots(kind);
    if (reds.empty()) pass = false;
    for (std::size_t s = 0; s < reds.size(); ++s) {
      ++seeds;
      const auto& seed = reds[s];
      const auto trace = trace_dp_manifold(family, seed);
      traces()[{kind, static_cast<int>(s)}] = trace;
      const auto last = trace.points.back();
      bool ok = trace.end.termination == Termination::EPBoundary && trace.end.ep.has_value();
      double ep_dist = std::numeric_limits<double>::infinity(), ep_quality = 1.0;
      if (trace.end.ep) {
        ep_dist = distance(trace.end.ep->location, last);
        ep_quality = trace.end.ep->defective ? 0.0 : trace.end.ep->min_quality;
        ok = ok && ep_dist <= 1e-4 && ep_quality < 1e-6;
      }
      double max_gap = 0.0;
      for (double gap : trace.gaps) max_gap = std::max(max_gap, std::abs(gap));
      ok = ok && max_gap <= 1e-8;
      // Independent check: a 1D scan through five trace points with gamma~ > 0,
      // short of the EP end, finds a protected Diabolical crossing there.
      std::vector<std::size_t> inside;
      for (std::size_t i = 0; i < trace.points.size(); ++i)
        if (trace.points[i].gamma_tilde > 0) inside.push_back(i);
      int confirmed = 0;
      for (int k = 0; k < 5 && inside.size() >= 5; ++k) {
        const auto p = trace.points[inside[(inside.size() - 1) * k / 5]];
        const auto block = sweep_family(family, linear_grid(p.j_tilde - 0.005, p.j_tilde + 0.005, 21), p.gamma_tilde);
        for (const auto& e : scan_crossings(family, block)) {
          if (e.classification == Classification::Diabolical && e.gap_residual <= 1e-8 &&
              std::abs(e.location.j_tilde - p.j_tilde) <= 1e-6 && check_zero_condition(e.index_products)) {
            ++confirmed;
            break;
          }
        }
      }
      ok = ok && confirmed >= 5;
      pass = pass && ok;
      detail += fmt("%s%s J=%.6f: %zu pts to (%.4f,%.4f), end %s, EP dist %.1e q %.1e, %d/5 points confirmed",
                    detail.empty() ? "" : "; ", std::string(to_string(kind)).c_str(), seed.location.j_tilde,
                    trace.points.size(), last.j_tilde, last.gamma_tilde,
                    std::string(to_string(trace.end.termination)).c_str(), ep_dist, ep_quality, confirmed);
    }
  }
  return {pass && seeds > 0, detail};
}

Outcome black_dot_splitting() {
  const auto kind = Arrangement::Longitudinal;
  const auto& family = sweeps().family(kind);
  int black = 0, split = 0;
  std::string detail;
  for (const auto& seed : sweeps().events(kind, 0.0)) {
    if (seed.classification != Classification::Diabolical || seed.index_products.empty()) continue;
    bool all_minus = true;
    for (const auto& [label, product] : seed.index_products) all_minus = all_minus && product == -1;
    if (!all_minus) continue;
    ++black;
    const double j0 = seed.location.j_tilde;
    const auto block = sweep_family(family, linear_grid(std::max(0.0, j0 - 0.1), std::min(0.999, j0 + 0.1), 201), 0.1);
    std::vector<CrossingEvent> eps;
    for (const auto& e : scan_crossings(family, block)) {
      if (e.classification == Classification::EP2 && e.candidate == CandidateKind::RealToComplex &&
          std::abs(e.energy - seed.energy) < 0.05) {
        eps.push_back(e);
      }
    }
    bool ok = eps.size() == 2;
    double accuracy = 0.0;
    if (ok) {
      ok = eps[0].location.j_tilde < j0 && eps[1].location.j_tilde > j0;
      for (const auto& e : eps) {
        const double acc = e.diagnostics.complex_side ? distance(e.location, *e.diagnostics.complex_side) : 1.0;
        accuracy = std::max(accuracy, acc);
      }
      ok = ok && accuracy <= 1e-8;
    }
    if (ok) ++split;
    detail += fmt("%sJ=%.6f E=%.4f: %zu EP2 at gamma 0.1", detail.empty() ? "" : "; ", j0, seed.energy, eps.size());
    if (eps.size() == 2) {
      detail += fmt(" at J=%.6f,%.6f (accuracy %.1e)", eps[0].location.j_tilde, eps[1].location.j_tilde, accuracy);
    }
  }
  return {split >= 1, fmt("%d black dots, %d split into two flanking EP2s; ", black, split) + detail};
}

Outcome mixed_gap_opening() {
  const auto kind = Arrangement::Mixed;
  const auto& family = sweeps().family(kind);
  int loci = 0, opened = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  std::string detail;
  for (const auto& seed : sweeps().events(kind, 0.0)) {
    if (seed.classification != Classification::Diabolical) continue;
    const auto it = seed.index_products.find(MetricLabel::P);
    if (it == seed.index_products.end() || it->second != 1) continue;
    ++loci;
    const double j0 = seed.location.j_tilde;
    bool ok = true;
    for (double g : {0.1, 0.2}) {
      const auto block = sweep_family(family, linear_grid(std::max(0.0, j0 - 0.05), j0 + 0.05, 101), g);
      bool avoided = false;
      for (const auto& e : scan_crossings(family, block)) {
        if (std::abs(e.energy - seed.energy) > 0.05) continue;
        if (e.classification == Classification::Diabolical) ok = false;
        if (e.classification == Classification::Avoided && e.gap_residual < 0.1) {
          avoided = true;
          min_gap = std::min(min_gap, e.gap_residual);
          if (e.gap_residual <= 1e-4) ok = false;
        }
      }
      ok = ok && avoided;
    }
    if (ok) ++opened;
  }
  return {loci > 0 && opened == loci,
          fmt("%d same-parity loci, %d Avoided at gamma 0.1 and 0.2 without Diabolical, min gap %.3e", loci, opened,
              min_gap)};
}

Outcome zero_condition_forcing() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst_w = 0.0, worst_identity = 0.0;
  int bases = 0, identities = 0;
  auto check_base = [&](const ParameterFamily& family, ParamPoint base, const BiorthogonalEigensystem& at,
                        std::array<int, 2> levels, bool red) {
    const auto there = biorthogonal_eig(family.hamiltonian(base));
    const auto pair = select_pair(at, levels, there);
    if (!pair) {
      throw Error(ErrorKind::AmbiguousTracking,
                  fmt("pair lost at base (%.6f, %.6f)", base.j_tilde, base.gamma_tilde));
    }
    const auto ph = project_hamiltonian(family, base, *pair);
    ++bases;
    if (red) {
      for (const auto& m : ph.metrics) worst_w = std::max(worst_w, m.w.norm() / ph.grad_norm);
    }
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::Vector2d dp(1e-3 * unit(rng), 1e-3 * unit(rng));
      const auto& a = ph.metrics[0];
      const auto& b = ph.metrics[1];
      const double lhs = a.product * std::norm(a.w.dot(dp.cast<Complex>()));
      const double rhs = b.product * std::norm(b.w.dot(dp.cast<Complex>()));
      const double scale = std::max(std::abs(lhs), ph.grad_norm * ph.grad_norm * dp.squaredNorm());
      worst_identity = std::max(worst_identity, std::abs(lhs - rhs) / scale);
      ++identities;
    }
  };
  for (auto kind : {Arrangement::Longitudinal, Arrangement::Transversal}) {
    const auto& family = sweeps().family(kind);
    const auto reds = red_dots(kind);
    for (std::size_t s = 0; s < reds.size(); ++s) {
      const auto& seed = reds[s];
      const auto at = biorthogonal_eig(family.hamiltonian(seed.location));
      for (double dj : {-5e-3, -1e-3, 1e-3, 5e-3}) check_base(family, {seed.location.j_tilde + dj, 0.0}, at, seed.levels, true);
      // Loci along the first half of the traced manifold, away from the EP end.
      const auto it = traces().find({kind, static_cast<int>(s)});
      if (it == traces().end()) continue;
      const auto& t = it->second;
      for (std::size_t q : {8, 4, 2}) {
        const std::size_t i = t.points.size() / q;
        const auto p = t.points[i];
        const auto locus = biorthogonal_eig(family.hamiltonian(p));
        for (double dj : {-2e-4, 2e-4}) check_base(family, {p.j_tilde + dj, p.gamma_tilde}, locus, t.levels[i], true);
      }
    }
    // Non-trivial instance of the identity at the unprotected crossings.
    for (const auto& e : sweeps().events(kind, 0.0)) {
      if (e.classification != Classification::Diabolical || check_zero_condition(e.index_products)) continue;
      const auto at = biorthogonal_eig(family.hamiltonian(e.location));
      check_base(family, {e.location.j_tilde + 1e-3, 0.0}, at, e.levels, false);
    }
  }
  return {bases > 0 && worst_w <= 1e-8 && worst_identity <= 1e-8,
          fmt("%d base points, max |w|/|grad H| %.2e, %d identity samples, max relative deviation %.2e", bases,
              worst_w, identities, worst_identity)};
}

Outcome analytic_gate() {
  double worst_eig = 0.0, worst_ep = 0.0;
  for (double delta : {0.5, 1.0, 2.0}) {
    Matrix sx(2, 2), sz(2, 2);
    sx << 0, 1, 1, 0;
    sz << 1, 0, 0, -1;
    for (double frac : {0.0, 0.3, 0.6, 0.9, 0.99}) {
      const double g = frac * delta;
      const auto eig = biorthogonal_eig(DenseOperator(delta * sx + Complex(0, g) * sz));
      const double e = std::sqrt(delta * delta - g * g);
      const double lo = std::abs(eig.eigenvalues(0) - (-e)), hi = std::abs(eig.eigenvalues(1) - e);
      worst_eig = std::max({worst_eig, lo, hi});
    }
    ParameterFamily family([sx, sz, delta](ParamPoint p) -> Matrix { return delta * sx + Complex(0, p.gamma_tilde) * sz; },
                           {MetricDescriptor{MetricLabel::P, DenseOperator(sx)}});
    const auto loc = locate_ep_1d(family, {0, 1}, {0.5, 0.5 * delta}, {0.5, 1.5 * delta});
    worst_ep = std::max({worst_ep, std::abs(loc.location.gamma_tilde - delta),
                         std::abs(loc.complex_side.gamma_tilde - delta)});
  }
  return {worst_eig <= 1e-12 && worst_ep <= 1e-8,
          fmt("max eigenvalue error %.2e, max |gamma* - Delta| %.2e", worst_eig, worst_ep)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"biorthonormality", biorthonormality},
      {"pseudo-hermiticity-catalog", catalog},
      {"oracle-equivalence", oracle},
      {"index-conservation", index_conservation},
      {"opposite-index-ep-rule", ep_rule},
      {"red-dot-stability", red_dot_stability},
      {"black-dot-splitting", black_dot_splitting},
      {"mixed-gap-opening", mixed_gap_opening},
      {"zero-condition-forcing", zero_condition_forcing},
      {"analytic-2x2-gate", analytic_gate},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
