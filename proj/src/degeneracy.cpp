#include "pseudospec/degeneracy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "pseudospec/errors.hpp"

namespace pseudospec {

namespace {

struct Solved {
  bool defective = false;
  BiorthogonalEigensystem eig;
};

Solved solve(const ParameterFamily& family, ParamPoint p, const SpectralTolerances& tol) {
  try {
    return {false, biorthogonal_eig(family.hamiltonian(p), tol)};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DefectiveMatrix || e.kind() == ErrorKind::PairingFailure) {
      return {true, {}};
    }
    throw;
  }
}

ParamPoint lerp(ParamPoint a, ParamPoint b, double t) {
  return {a.j_tilde + t * (b.j_tilde - a.j_tilde), a.gamma_tilde + t * (b.gamma_tilde - a.gamma_tilde)};
}

double distance(ParamPoint a, ParamPoint b) {
  return std::hypot(a.j_tilde - b.j_tilde, a.gamma_tilde - b.gamma_tilde);
}

bool pair_real(const BiorthogonalEigensystem& eig, std::array<int, 2> pair, const SpectralTolerances& tol) {
  return is_real_level(eig.eigenvalues(pair[0]), tol) && is_real_level(eig.eigenvalues(pair[1]), tol);
}

bool same_cluster(const BiorthogonalEigensystem& eig, std::array<int, 2> pair, double tol_cluster) {
  for (const auto& c : cluster_degeneracies(eig, tol_cluster)) {
    const bool a = std::find(c.begin(), c.end(), pair[0]) != c.end();
    const bool b = std::find(c.begin(), c.end(), pair[1]) != c.end();
    if (a || b) return a && b;
  }
  return false;
}

// Indices of both levels under one metric, degenerate clusters resolved.
std::array<std::optional<LevelIndex>, 2> pair_indices(const BiorthogonalEigensystem& eig,
                                                      std::array<int, 2> pair,
                                                      const MetricDescriptor& metric,
                                                      const SpectralTolerances& tol) {
  const auto idx = index_levels(eig, metric, tol);
  return {idx.indices[pair[0]], idx.indices[pair[1]]};
}

double vector_overlap(const Vector& a, const Vector& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

struct PairDiagnostics {
  double min_quality = 0.0;
  double overlap = 0.0;
};

// Minimal quality over metrics and both levels, and the eigenvector overlap.
// Inside a degenerate cluster the basis is the one resolved by the first
// metric; a singular Gram matrix counts as quality zero.
PairDiagnostics diagnose_pair(const BiorthogonalEigensystem& eig, std::array<int, 2> pair,
                              const std::vector<MetricDescriptor>& metrics,
                              const SpectralTolerances& tol) {
  PairDiagnostics d;
  d.min_quality = std::numeric_limits<double>::infinity();
  const bool clustered = same_cluster(eig, pair, tol.cluster);
  std::optional<BiorthogonalEigensystem> basis;
  for (const auto& m : metrics) {
    if (clustered) {
      const auto idx = index_levels(eig, m, tol);
      if (!basis) basis = idx.resolved;
      for (int n : pair) {
        const double q = idx.indices[n] ? idx.indices[n]->quality
                                        : (is_real_level(eig.eigenvalues(n), tol)
                                               ? std::abs(metric_expectation(idx.resolved, n, m.op))
                                               : 0.0);
        d.min_quality = std::min(d.min_quality, q);
      }
    } else {
      for (int n : pair) d.min_quality = std::min(d.min_quality, std::abs(metric_expectation(eig, n, m.op)));
    }
  }
  if (metrics.empty()) d.min_quality = 0.0;
  const auto& b = basis ? *basis : eig;
  d.overlap = vector_overlap(b.right.col(pair[0]), b.right.col(pair[1]));
  return d;
}

IndexProducts products_at(const BiorthogonalEigensystem& eig, std::array<int, 2> pair,
                          const std::vector<MetricDescriptor>& metrics, const SpectralTolerances& tol) {
  IndexProducts out;
  if (!pair_real(eig, pair, tol)) return out;
  for (const auto& m : metrics) {
    try {
      const auto idx = pair_indices(eig, pair, m, tol);
      if (idx[0] && idx[1]) out[m.label] = idx[0]->value * idx[1]->value;
    } catch (const Error&) {
      // Undefined products are simply left out.
    }
  }
  return out;
}

// Probes `offset` away from the event and collects the products of the pair.
IndexProducts side_products(const ParameterFamily& family, const CrossingEvent& event,
                            const BiorthogonalEigensystem* at_location, const DegeneracyTolerances& tol) {
  std::vector<ParamPoint> probes;
  if (event.diagnostics.complex_side) {
    const ParamPoint c = *event.diagnostics.complex_side;
    const double d = distance(c, event.location);
    const double dj = d > 0 ? (event.location.j_tilde - c.j_tilde) / d : -1.0;
    const double dg = d > 0 ? (event.location.gamma_tilde - c.gamma_tilde) / d : 0.0;
    probes.push_back({event.location.j_tilde + tol.side_offset * dj,
                      event.location.gamma_tilde + tol.side_offset * dg});
  } else {
    probes.push_back({event.location.j_tilde - tol.side_offset, event.location.gamma_tilde});
    probes.push_back({event.location.j_tilde + tol.side_offset, event.location.gamma_tilde});
  }
  IndexProducts out;
  for (const auto& p : probes) {
    if (!family.domain().contains(p) || at_location == nullptr) continue;
    const auto s = solve(family, p, tol.spectral);
    if (s.defective) continue;
    const auto pair = select_pair(*at_location, event.levels, s.eig);
    if (!pair) continue;
    for (const auto& [label, value] : products_at(s.eig, *pair, family.metrics(), tol.spectral)) {
      out.emplace(label, value);
    }
    if (out.size() == family.metrics().size()) break;
  }
  return out;
}

Eigen::VectorXd projector_weights(const BiorthogonalEigensystem& ref, std::array<int, 2> pair,
                                  const BiorthogonalEigensystem& eig) {
  const Eigen::Index n = eig.right.cols();
  Eigen::VectorXd w(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    Complex acc = 0.0;
    for (int i : pair) {
      acc += ref.left.row(i).dot(eig.right.col(m).conjugate()) * eig.left.row(m).dot(ref.right.col(i).conjugate());
    }
    w(m) = std::abs(acc);
  }
  return w;
}

double pair_weight(const BiorthogonalEigensystem& ref, int i, const BiorthogonalEigensystem& eig, int m) {
  const Complex t = (ref.left.row(i) * eig.right.col(m))(0) * (eig.left.row(m) * ref.right.col(i))(0);
  return std::abs(t);
}

// Eigenvalue-proximity fallback for pairs whose projector is ill-conditioned.
std::array<int, 2> nearest_pair(const Vector& ev, Complex a, Complex b) {
  int best_a = 0;
  for (int n = 1; n < ev.size(); ++n)
    if (std::abs(ev(n) - a) < std::abs(ev(best_a) - a)) best_a = n;
  int best_b = best_a == 0 ? 1 : 0;
  for (int n = 0; n < ev.size(); ++n)
    if (n != best_a && std::abs(ev(n) - b) < std::abs(ev(best_b) - b)) best_b = n;
  return {best_a, best_b};
}

// The two levels closest to each other, weighted toward `energy`.
std::array<int, 2> closest_pair(const Vector& ev, double energy) {
  std::array<int, 2> best{0, 1};
  double score = std::numeric_limits<double>::infinity();
  for (int a = 0; a < ev.size(); ++a) {
    for (int b = a + 1; b < ev.size(); ++b) {
      const double s = std::abs(ev(a) - ev(b)) + std::abs(0.5 * (ev(a) + ev(b)).real() - energy);
      if (s < score) score = s, best = {a, b};
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::EP2: return "EP2";
    case Classification::Diabolical: return "Diabolical";
    case Classification::Avoided: return "Avoided";
    case Classification::Unclassified: break;
  }
  return "Unclassified";
}

std::string_view to_string(CandidateKind k) {
  switch (k) {
    case CandidateKind::SignChange: return "sign_change";
    case CandidateKind::GapMinimum: return "gap_minimum";
    case CandidateKind::RealToComplex: break;
  }
  return "real_to_complex";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::EPBoundary: return "EPBoundary";
    case Termination::DomainBoundary: return "DomainBoundary";
    case Termination::StepLimit: return "StepLimit";
    case Termination::CorrectorDivergence: break;
  }
  return "CorrectorDivergence";
}

bool check_zero_condition(const IndexProducts& products) {
  bool plus = false, minus = false;
  for (const auto& [label, value] : products) {
    plus = plus || value > 0;
    minus = minus || value < 0;
  }
  return plus && minus;
}

std::optional<std::array<int, 2>> select_pair(const BiorthogonalEigensystem& ref, std::array<int, 2> pair,
                                              const BiorthogonalEigensystem& eig) {
  if (ref.right.size() == 0 || eig.right.size() == 0 || eig.size() < 2) return std::nullopt;
  const auto w = projector_weights(ref, pair, eig);
  std::vector<int> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w(a) > w(b); });
  if (order.size() > 2 && w(order[2]) > 0.5 * w(order[1])) return std::nullopt;
  const int m1 = order[0], m2 = order[1];
  const double direct = pair_weight(ref, pair[0], eig, m1) + pair_weight(ref, pair[1], eig, m2);
  const double crossed = pair_weight(ref, pair[0], eig, m2) + pair_weight(ref, pair[1], eig, m1);
  if (crossed > direct) return std::array<int, 2>{m2, m1};
  return std::array<int, 2>{m1, m2};
}

EPLocation locate_ep_1d(const ParameterFamily& family, std::array<int, 2> pair, ParamPoint a, ParamPoint b,
                        const DegeneracyTolerances& tol, double accuracy) {
  const auto sa = solve(family, a, tol.spectral);
  const auto sb = solve(family, b, tol.spectral);
  auto defective_at = [&](ParamPoint p) {
    EPLocation out;
    out.location = out.complex_side = p;
    out.levels = pair;
    out.eigvec_overlap = 1.0;
    out.defective = true;
    return out;
  };
  if (sa.defective) return defective_at(a);
  if (sb.defective) return defective_at(b);
  if (pair[0] < 0 || pair[1] < 0 || pair[0] >= sa.eig.size() || pair[1] >= sa.eig.size() || pair[0] == pair[1]) {
    throw Error(ErrorKind::InvalidArgument, "invalid level pair");
  }
  auto pb = select_pair(sa.eig, pair, sb.eig);
  if (!pb) pb = nearest_pair(sb.eig.eigenvalues, sa.eig.eigenvalues(pair[0]), sa.eig.eigenvalues(pair[1]));
  const bool real_a = pair_real(sa.eig, pair, tol.spectral);
  const bool real_b = pair_real(sb.eig, *pb, tol.spectral);
  if (real_a == real_b) {
    throw Error(ErrorKind::NoTransition,
                std::string("pair is ") + (real_a ? "real" : "complex") + " at both ends of the bracket");
  }
  ParamPoint r = real_a ? a : b, c = real_a ? b : a;
  BiorthogonalEigensystem ref = real_a ? sa.eig : sb.eig;
  std::array<int, 2> ref_pair = real_a ? pair : *pb;
  EPLocation out;
  for (int it = 0; it < 400 && distance(r, c) > accuracy; ++it) {
    const ParamPoint m = lerp(r, c, 0.5);
    if ((m.j_tilde == r.j_tilde && m.gamma_tilde == r.gamma_tilde) ||
        (m.j_tilde == c.j_tilde && m.gamma_tilde == c.gamma_tilde)) {
      break;
    }
    const auto sm = solve(family, m, tol.spectral);
    if (sm.defective) {
      out = defective_at(m);
      out.levels = ref_pair;
      out.accuracy = distance(r, c);
      return out;
    }
    auto pm = select_pair(ref, ref_pair, sm.eig);
    if (!pm) pm = nearest_pair(sm.eig.eigenvalues, ref.eigenvalues(ref_pair[0]), ref.eigenvalues(ref_pair[1]));
    if (pair_real(sm.eig, *pm, tol.spectral)) {
      r = m;
      ref = sm.eig;
      ref_pair = *pm;
    } else {
      c = m;
    }
  }
  out.location = r;
  out.complex_side = c;
  out.accuracy = distance(r, c);
  out.levels = ref_pair;
  const auto d = diagnose_pair(ref, ref_pair, family.metrics(), tol.spectral);
  out.min_quality = d.min_quality;
  out.eigvec_overlap = d.overlap;
  return out;
}

namespace {

struct PairState {
  bool ok = false;
  bool real = false;
  double gap = 0.0;  // Re(eps_0 - eps_1)
  std::array<int, 2> levels{};
  BiorthogonalEigensystem eig;
};

PairState pair_state(const ParameterFamily& family, ParamPoint p, const BiorthogonalEigensystem& ref,
                     std::array<int, 2> ref_pair, const SpectralTolerances& tol) {
  PairState s;
  auto solved = solve(family, p, tol);
  if (solved.defective) return s;
  const auto sel = select_pair(ref, ref_pair, solved.eig);
  if (!sel) return s;
  s.ok = true;
  s.levels = *sel;
  s.real = pair_real(solved.eig, *sel, tol);
  s.gap = (solved.eig.eigenvalues((*sel)[0]) - solved.eig.eigenvalues((*sel)[1])).real();
  s.eig = std::move(solved.eig);
  return s;
}

bool sample_real(const BandSample& s, const SpectralTolerances& tol) {
  return !s.defective && is_real_level(s.eps_tilde, tol);
}

CrossingEvent make_event(ParamPoint p, int band_a, int band_b, std::array<int, 2> levels, CandidateKind kind,
                         const BiorthogonalEigensystem& eig) {
  CrossingEvent e;
  e.location = p;
  e.band_pair = {band_a, band_b};
  e.levels = levels;
  e.candidate = kind;
  const Complex ea = eig.eigenvalues(levels[0]), eb = eig.eigenvalues(levels[1]);
  e.gap_residual = std::abs(ea - eb);
  e.energy = 0.5 * (ea + eb).real();
  return e;
}

}  // namespace

std::vector<CrossingEvent> find_crossings_1d(const ParameterFamily& family, const SweepBlock& block,
                                             const DegeneracyTolerances& tol) {
  std::vector<CrossingEvent> events;
  const auto& st = tol.spectral;
  const int nb = static_cast<int>(block.bands.size());
  if (nb < 2) return events;
  const std::size_t npts = block.points.size();
  const double g = block.gamma_tilde;
  auto sample = [&](int band, std::size_t k) -> const BandSample& { return block.bands[band].samples[k]; };
  auto level = [&](int band, std::size_t k) { return block.points[k].level_of_band[band]; };
  // Grid points where the pair sits inside a larger multiplet are not
  // pairwise crossings (e.g. the J~ = 0 end of the chain).
  auto in_multiplet = [&](int band, std::size_t k) {
    const auto& pt = block.points[k];
    if (pt.defective) return false;
    for (const auto& c : cluster_degeneracies(pt.eig, st.cluster)) {
      if (c.size() > 2 && std::find(c.begin(), c.end(), level(band, k)) != c.end()) return true;
    }
    return false;
  };

  // (a) sign changes between real samples.
  for (int a = 0; a < nb; ++a) {
    for (int b = a + 1; b < nb; ++b) {
      for (std::size_t k = 0; k + 1 < npts; ++k) {
        const auto &a0 = sample(a, k), &a1 = sample(a, k + 1), &b0 = sample(b, k), &b1 = sample(b, k + 1);
        if (!sample_real(a0, st) || !sample_real(a1, st) || !sample_real(b0, st) || !sample_real(b1, st)) continue;
        if (a1.ambiguous || b1.ambiguous) continue;
        const double d0 = (a0.eps_tilde - b0.eps_tilde).real();
        const double d1 = (a1.eps_tilde - b1.eps_tilde).real();
        if (k == 0 && std::abs(d0) <= tol.gap) {
          if (in_multiplet(a, 0)) continue;
          events.push_back(make_event({a0.j_tilde, g}, a, b, {level(a, 0), level(b, 0)}, CandidateKind::SignChange,
                                      block.points[0].eig));
          continue;
        }
        if (std::abs(d0) <= tol.gap) continue;
        if (std::abs(d1) <= tol.gap) {
          if (in_multiplet(a, k + 1)) continue;
          events.push_back(make_event({a1.j_tilde, g}, a, b, {level(a, k + 1), level(b, k + 1)},
                                      CandidateKind::SignChange, block.points[k + 1].eig));
          continue;
        }
        if (d0 * d1 > 0) continue;
        double lo = a0.j_tilde, hi = a1.j_tilde, dlo = d0;
        BiorthogonalEigensystem ref = block.points[k].eig;
        std::array<int, 2> ref_pair{level(a, k), level(b, k)};
        PairState best;
        double best_j = lo;
        std::string note;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          if (mid <= lo || mid >= hi) break;
          auto s = pair_state(family, {mid, g}, ref, ref_pair, st);
          if (!s.ok || !s.real) {
            note = "pair lost during bisection";
            break;
          }
          if (!best.ok || std::abs(s.gap) < std::abs(best.gap)) {
            best = s;
            best_j = mid;
          }
          if (std::abs(s.gap) <= tol.gap) break;
          if ((s.gap > 0) == (dlo > 0)) {
            lo = mid;
            dlo = s.gap;
            ref = s.eig;
            ref_pair = s.levels;
          } else {
            hi = mid;
          }
        }
        if (!best.ok) continue;
        auto e = make_event({best_j, g}, a, b, best.levels, CandidateKind::SignChange, best.eig);
        e.diagnostics.note = note;
        events.push_back(std::move(e));
      }
    }
  }

  // (b) local gap minima between energy-adjacent real bands.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (std::size_t k = 1; k + 1 < npts; ++k) {
    std::vector<int> real_bands;
    for (int b = 0; b < nb; ++b)
      if (sample_real(sample(b, k), st)) real_bands.push_back(b);
    std::stable_sort(real_bands.begin(), real_bands.end(), [&](int x, int y) {
      return sample(x, k).eps_tilde.real() < sample(y, k).eps_tilde.real();
    });
    for (std::size_t i = 0; i + 1 < real_bands.size(); ++i) {
      int a = real_bands[i], b = real_bands[i + 1];
      if (a > b) std::swap(a, b);
      bool usable = true;
      for (std::size_t kk : {k - 1, k + 1}) {
        usable = usable && sample_real(sample(a, kk), st) && sample_real(sample(b, kk), st);
      }
      usable = usable && !sample(a, k).ambiguous && !sample(b, k).ambiguous && !sample(a, k + 1).ambiguous &&
               !sample(b, k + 1).ambiguous;
      if (!usable) continue;
      auto gap_at = [&](std::size_t kk) { return (sample(a, kk).eps_tilde - sample(b, kk).eps_tilde).real(); };
      const double gm = gap_at(k - 1), g0 = gap_at(k), gp = gap_at(k + 1);
      if (gm * gp <= 0 || g0 * gm <= 0) continue;  // sign changes are handled above
      const double am = std::abs(gm), a0 = std::abs(g0), ap = std::abs(gp);
      if (!(a0 < am && a0 <= ap && a0 < tol.avoided_gap_max && a0 > tol.gap)) continue;

      const BiorthogonalEigensystem& ref = block.points[k].eig;
      const std::array<int, 2> ref_pair{level(a, k), level(b, k)};
      double lo = sample(a, k - 1).j_tilde, hi = sample(a, k + 1).j_tilde;
      double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
      auto eval = [&](double j) { return pair_state(family, {j, g}, ref, ref_pair, st); };
      PairState s1 = eval(x1), s2 = eval(x2);
      bool lost = false;
      for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
        if (!s1.ok || !s2.ok || !s1.real || !s2.real) {
          lost = true;
          break;
        }
        if (std::abs(s1.gap) < std::abs(s2.gap)) {
          hi = x2;
          x2 = x1, s2 = std::move(s1);
          x1 = hi - inv_phi * (hi - lo);
          s1 = eval(x1);
        } else {
          lo = x1;
          x1 = x2, s1 = std::move(s2);
          x2 = lo + inv_phi * (hi - lo);
          s2 = eval(x2);
        }
      }
      if (lost) continue;
      const bool first = s1.ok && (!s2.ok || std::abs(s1.gap) <= std::abs(s2.gap));
      const PairState& best = first ? s1 : s2;
      if (!best.ok) continue;
      events.push_back(make_event({first ? x1 : x2, g}, a, b, best.levels, CandidateKind::GapMinimum, best.eig));
    }
  }

  // (c) real-to-complex transitions of conjugate partners.
  for (int a = 0; a < nb; ++a) {
    for (std::size_t k = 0; k + 1 < npts; ++k) {
      const auto &s0 = sample(a, k), &s1 = sample(a, k + 1);
      if (s0.defective || s1.defective) continue;
      const bool r0 = is_real_level(s0.eps_tilde, st), r1 = is_real_level(s1.eps_tilde, st);
      if (r0 == r1) continue;
      const std::size_t kc = r0 ? k + 1 : k;
      const Complex target = std::conj(sample(a, kc).eps_tilde);
      int partner = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int b = 0; b < nb; ++b) {
        if (b == a) continue;
        const double d = std::abs(sample(b, kc).eps_tilde - target);
        if (d < best) best = d, partner = b;
      }
      if (partner < a) continue;
      try {
        const auto loc = locate_ep_1d(family, {level(a, k), level(partner, k)}, {s0.j_tilde, g}, {s1.j_tilde, g},
                                      tol);
        const auto solved = solve(family, loc.location, st);
        CrossingEvent e;
        if (solved.defective) {
          e.location = loc.location;
          e.band_pair = {a, partner};
          e.levels = loc.levels;
          e.candidate = CandidateKind::RealToComplex;
          e.energy = sample(a, kc).eps_tilde.real();
        } else {
          e = make_event(loc.location, a, partner, loc.levels, CandidateKind::RealToComplex, solved.eig);
        }
        e.diagnostics.complex_side = loc.complex_side;
        e.diagnostics.defective = loc.defective;
        events.push_back(std::move(e));
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::NoTransition) throw;
      }
    }
  }

  std::stable_sort(events.begin(), events.end(), [](const CrossingEvent& x, const CrossingEvent& y) {
    if (x.location.j_tilde != y.location.j_tilde) return x.location.j_tilde < y.location.j_tilde;
    return x.band_pair < y.band_pair;
  });
  return events;
}

CrossingEvent classify_crossing(const ParameterFamily& family, const CrossingEvent& event,
                                const DegeneracyTolerances& tol) {
  CrossingEvent out = event;
  const auto s = solve(family, event.location, tol.spectral);
  if (s.defective) {
    out.classification = Classification::EP2;
    out.diagnostics.defective = true;
    out.diagnostics.min_quality = 0.0;
    out.diagnostics.eigvec_overlap = 1.0;
    out.gap_residual = 0.0;
    // Products from the nearest non-defective point where the coalescing
    // pair (closest two levels around the event energy) is real.
    const double d = tol.side_offset;
    for (const ParamPoint off : {ParamPoint{-d, 0.0}, ParamPoint{d, 0.0}, ParamPoint{0.0, -d}, ParamPoint{0.0, d}}) {
      const ParamPoint p{event.location.j_tilde + off.j_tilde, event.location.gamma_tilde + off.gamma_tilde};
      if (!family.domain().contains(p)) continue;
      const auto sn = solve(family, p, tol.spectral);
      if (sn.defective) continue;
      const auto pair = closest_pair(sn.eig.eigenvalues, event.energy);
      if (!pair_real(sn.eig, pair, tol.spectral)) continue;
      out.index_products = products_at(sn.eig, pair, family.metrics(), tol.spectral);
      if (!out.index_products.empty()) break;
    }
    return out;
  }
  const auto& eig = s.eig;
  for (int n : event.levels) {
    if (n < 0 || n >= eig.size()) throw Error(ErrorKind::InvalidArgument, "event levels out of range");
  }
  const Complex ea = eig.eigenvalues(event.levels[0]), eb = eig.eigenvalues(event.levels[1]);
  out.gap_residual = std::abs(ea - eb);
  out.energy = 0.5 * (ea + eb).real();
  const bool real = pair_real(eig, event.levels, tol.spectral);
  const auto d = diagnose_pair(eig, event.levels, family.metrics(), tol.spectral);
  out.diagnostics.min_quality = d.min_quality;
  out.diagnostics.eigvec_overlap = d.overlap;
  const bool coalesced = d.overlap > tol.ep_overlap;
  const bool good_quality = d.min_quality >= tol.quality;

  if (coalesced && d.min_quality < tol.quality) {
    out.classification = Classification::EP2;
  } else if (real && good_quality && !coalesced && out.gap_residual <= tol.gap) {
    out.classification = Classification::Diabolical;
  } else if (real && good_quality && !coalesced && out.gap_residual > tol.gap) {
    out.classification = Classification::Avoided;
  } else {
    char buf[200];
    std::snprintf(buf, sizeof buf, "gap=%.3g min_quality=%.3g overlap=%.12g real=%d", out.gap_residual,
                  d.min_quality, d.overlap, real ? 1 : 0);
    throw Error(ErrorKind::UnresolvedClassification, buf);
  }
  out.index_products = side_products(family, out, &eig, tol);
  return out;
}

std::vector<CrossingEvent> scan_crossings(const ParameterFamily& family, const SweepBlock& block,
                                          const DegeneracyTolerances& tol) {
  auto events = find_crossings_1d(family, block, tol);
  for (auto& e : events) {
    try {
      e = classify_crossing(family, e, tol);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::UnresolvedClassification) throw;
      e.classification = Classification::Unclassified;
      e.diagnostics.note = err.detail();
    }
  }
  return events;
}

Eigen::Matrix2cd ProjectedHamiltonian::linear_block(const MetricProjection& m, const Eigen::Vector2d& dp) const {
  Eigen::Matrix2cd h;
  h(0, 0) = eps_pair[0] + u1.dot(dp);
  h(1, 1) = eps_pair[1] + u2.dot(dp);
  h(0, 1) = m.w(0) * dp(0) + m.w(1) * dp(1);
  h(1, 0) = m.lower(0) * dp(0) + m.lower(1) * dp(1);
  return h;
}

ProjectedHamiltonian project_hamiltonian(const ParameterFamily& family, ParamPoint base,
                                         std::array<int, 2> levels, const DegeneracyTolerances& tol) {
  const auto& st = tol.spectral;
  const auto solved = solve(family, base, st);
  if (solved.defective) throw Error(ErrorKind::DefectiveMatrix, "base point is defective");
  const auto& eig = solved.eig;
  for (int n : levels) {
    if (n < 0 || n >= eig.size()) throw Error(ErrorKind::InvalidArgument, "levels out of range");
  }
  if (levels[0] == levels[1]) throw Error(ErrorKind::InvalidArgument, "levels must differ");
  if (!pair_real(eig, levels, st)) throw Error(ErrorKind::ComplexEigenvalue, "base pair is not real");
  if (same_cluster(eig, levels, st.cluster)) {
    throw Error(ErrorKind::InvalidArgument, "base point must not be degenerate in the pair");
  }

  ProjectedHamiltonian ph;
  ph.base = base;
  ph.levels = levels;
  ph.eps_pair = {eig.eigenvalues(levels[0]).real(), eig.eigenvalues(levels[1]).real()};

  auto central = [&](int axis, double h) {
    ParamPoint plus = base, minus = base;
    (axis == 0 ? plus.j_tilde : plus.gamma_tilde) += h;
    (axis == 0 ? minus.j_tilde : minus.gamma_tilde) -= h;
    return Matrix((family.hamiltonian(plus).matrix() - family.hamiltonian(minus).matrix()) / (2.0 * h));
  };
  std::array<Matrix, 2> dh;
  for (int axis = 0; axis < 2; ++axis) {
    const Matrix coarse = central(axis, tol.fd_step);
    const Matrix fine = central(axis, 0.5 * tol.fd_step);
    dh[axis] = (4.0 * fine - coarse) / 3.0;
    const double scale = dh[axis].norm();
    const double diff = (dh[axis] - fine).norm();
    const double rel = scale > 0 ? diff / scale : diff;
    ph.fd_discrepancy = std::max(ph.fd_discrepancy, rel);
  }
  if (ph.fd_discrepancy > tol.fd_rel_tol) {
    throw Error(ErrorKind::PrecisionLoss,
                "finite-difference estimates disagree by " + short_number(ph.fd_discrepancy));
  }
  ph.grad_norm = std::sqrt(dh[0].squaredNorm() + dh[1].squaredNorm());

  for (int axis = 0; axis < 2; ++axis) {
    const Complex d1 = (eig.left.row(levels[0]) * dh[axis] * eig.right.col(levels[0]))(0);
    const Complex d2 = (eig.left.row(levels[1]) * dh[axis] * eig.right.col(levels[1]))(0);
    ph.u1(axis) = d1.real();
    ph.u2(axis) = d2.real();
    ph.u_imag_residual = std::max({ph.u_imag_residual, std::abs(d1.imag()), std::abs(d2.imag())});
  }

  for (const auto& metric : family.metrics()) {
    const double c1 = metric_expectation(eig, levels[0], metric.op);
    const double c2 = metric_expectation(eig, levels[1], metric.op);
    if (!(std::abs(c1) > tol.quality && std::abs(c2) > tol.quality)) {
      throw Error(ErrorKind::NearException, "pair quality at base point below tolerance");
    }
    const auto g = metric_gauge(eig, metric.op, st);
    MetricProjection mp;
    mp.label = metric.label;
    mp.product = (c1 > 0 ? 1 : -1) * (c2 > 0 ? 1 : -1);
    for (int axis = 0; axis < 2; ++axis) {
      mp.w(axis) = (g.left.row(levels[0]) * dh[axis] * g.right.col(levels[1]))(0);
      mp.lower(axis) = (g.left.row(levels[1]) * dh[axis] * g.right.col(levels[0]))(0);
    }
    mp.reciprocity_residual = (mp.lower - double(mp.product) * mp.w.conjugate()).norm();
    ph.index_products[metric.label] = mp.product;
    ph.metrics.push_back(mp);
  }

  ph.min_angle = std::numbers::pi / 2;
  const Eigen::Vector2d um = ph.u_minus();
  const double floor = 1e-12 * std::max(ph.grad_norm, 1e-300);
  if (!ph.metrics.empty() && um.norm() > floor) {
    for (const Eigen::Vector2d& v : {Eigen::Vector2d(ph.metrics[0].w.real()), Eigen::Vector2d(ph.metrics[0].w.imag())}) {
      if (v.norm() <= floor) continue;
      const double cosine = std::min(1.0, std::abs(um.dot(v)) / (um.norm() * v.norm()));
      ph.min_angle = std::min(ph.min_angle, std::acos(cosine));
    }
  }
  ph.near_collinear = ph.min_angle < 1e-3;
  return ph;
}

namespace {

enum class PairFailure { None, Domain, Defective, Ambiguous, Complex, LowQuality, SameIndex, Divergence };

std::string_view failure_name(PairFailure f) {
  switch (f) {
    case PairFailure::None: return "none";
    case PairFailure::Domain: return "left the parameter domain";
    case PairFailure::Defective: return "defective matrix";
    case PairFailure::Ambiguous: return "pair continuation ambiguous";
    case PairFailure::Complex: return "pair turned complex";
    case PairFailure::LowQuality: return "index quality collapsed";
    case PairFailure::SameIndex: return "identifying index no longer distinguishes the pair";
    case PairFailure::Divergence: break;
  }
  return "corrector left the trust region";
}

struct TraceState {
  PairFailure failure = PairFailure::None;
  ParamPoint p;
  double gap = 0.0;               // eps(+) - eps(-) under the identifying metric
  std::array<int, 2> levels{};    // (+, -)
  BiorthogonalEigensystem eig;
};

class Tracer {
 public:
  Tracer(const ParameterFamily& family, std::size_t metric, const TraceOptions& opt, const DegeneracyTolerances& tol)
      : family_(family), metric_(metric), opt_(opt), tol_(tol) {}

  TraceState evaluate(ParamPoint p, const TraceState& ref) const {
    TraceState s;
    s.p = p;
    if (!family_.domain().contains(p)) return fail(s, PairFailure::Domain);
    auto solved = solve(family_, p, tol_.spectral);
    if (solved.defective) return fail(s, PairFailure::Defective);
    const auto sel = select_pair(ref.eig, ref.levels, solved.eig);
    if (!sel) return fail(s, PairFailure::Ambiguous);
    if (!pair_real(solved.eig, *sel, tol_.spectral)) return fail(s, PairFailure::Complex);
    std::array<int, 2> ordered = *sel;
    for (std::size_t m = 0; m < family_.metrics().size(); ++m) {
      const auto idx = pair_indices(solved.eig, *sel, family_.metrics()[m], tol_.spectral);
      if (!idx[0] || !idx[1] || idx[0]->quality < tol_.quality || idx[1]->quality < tol_.quality) {
        return fail(s, PairFailure::LowQuality);
      }
      if (m == metric_) {
        if (idx[0]->value == idx[1]->value) return fail(s, PairFailure::SameIndex);
        if (idx[0]->value < 0) std::swap(ordered[0], ordered[1]);
      }
    }
    // Inside a degenerate cluster the levels were resolved against the
    // identifying metric; keep that basis so the labels stay meaningful.
    if (same_cluster(solved.eig, ordered, tol_.spectral.cluster)) {
      solved.eig = index_levels(solved.eig, family_.metrics()[metric_], tol_.spectral).resolved;
    }
    s.levels = ordered;
    s.gap = (solved.eig.eigenvalues(ordered[0]) - solved.eig.eigenvalues(ordered[1])).real();
    s.eig = std::move(solved.eig);
    return s;
  }

  // Gradient of the signed gap; one-sided next to the domain boundary.
  std::optional<Eigen::Vector2d> gradient(const TraceState& at) const {
    const double h = 1e-6;
    Eigen::Vector2d grad;
    for (int axis = 0; axis < 2; ++axis) {
      ParamPoint plus = at.p, minus = at.p;
      (axis == 0 ? plus.j_tilde : plus.gamma_tilde) += h;
      (axis == 0 ? minus.j_tilde : minus.gamma_tilde) -= h;
      const auto sp = evaluate(plus, at);
      const auto sm = evaluate(minus, at);
      if (sp.failure == PairFailure::None && sm.failure == PairFailure::None) {
        grad(axis) = (sp.gap - sm.gap) / (2 * h);
      } else if (sp.failure == PairFailure::None) {
        grad(axis) = (sp.gap - at.gap) / h;
      } else if (sm.failure == PairFailure::None) {
        grad(axis) = (at.gap - sm.gap) / h;
      } else {
        return std::nullopt;
      }
    }
    return grad;
  }

  // Root of the gap along q + s n, |s| <= trust.
  TraceState correct(ParamPoint q, Eigen::Vector2d n, double slope, double trust, const TraceState& ref) const {
    auto at = [&](double s) { return ParamPoint{q.j_tilde + s * n(0), q.gamma_tilde + s * n(1)}; };
    TraceState s0 = evaluate(q, ref);
    if (s0.failure != PairFailure::None) return s0;
    if (std::abs(s0.gap) <= 1e-3 * tol_.gap) return s0;
    double s_newton = -s0.gap / slope;
    if (!std::isfinite(s_newton) || s_newton == 0.0) s_newton = (s0.gap > 0 ? -1.0 : 1.0) * 1e-3 * trust;
    double sa = 0.0, sb = s_newton;
    TraceState A = s0, B = evaluate(at(sb), ref);
    while (B.failure == PairFailure::None && (B.gap > 0) == (A.gap > 0) && std::abs(B.gap) > 1e-3 * tol_.gap) {
      sa = sb;
      A = std::move(B);
      sb *= 2.0;
      if (std::abs(sb) > trust) {
        TraceState d;
        d.p = at(sb);
        return fail(d, PairFailure::Divergence);
      }
      B = evaluate(at(sb), ref);
    }
    if (B.failure != PairFailure::None) return B;
    if (std::abs(B.gap) <= 1e-3 * tol_.gap) return B;
    // Illinois false position: stays bracketed, converges superlinearly.
    double ga = A.gap, gb = B.gap;
    int side = 0;
    for (int it = 0; it < 200; ++it) {
      double sm = sb - gb * (sb - sa) / (gb - ga);
      if (!(sm > std::min(sa, sb) && sm < std::max(sa, sb))) sm = 0.5 * (sa + sb);
      if (sm == sa || sm == sb) break;
      TraceState M = evaluate(at(sm), ref);
      if (M.failure != PairFailure::None) return M;
      if (std::abs(M.gap) <= 1e-3 * tol_.gap) return M;
      if ((M.gap > 0) == (A.gap > 0)) {
        sa = sm;
        ga = M.gap;
        A = std::move(M);
        if (side == -1) gb *= 0.5;
        side = -1;
      } else {
        sb = sm;
        gb = M.gap;
        B = std::move(M);
        if (side == 1) ga *= 0.5;
        side = 1;
      }
    }
    return std::abs(A.gap) <= std::abs(B.gap) ? A : B;
  }

  std::vector<TraceState> march(const TraceState& seed, int direction, ManifoldEnd& end) const {
    std::vector<TraceState> accepted;
    TraceState cur = seed;
    std::optional<Eigen::Vector2d> prev_tangent;
    double step = opt_.step;
    PairFailure last = PairFailure::None;
    std::optional<ParamPoint> probe;
    auto stop_at_ep = [&](const Eigen::Vector2d& tangent, const Eigen::Vector2d& normal) {
      if (!opt_.locate_boundary_ep) return false;
      auto ep = nearby_ep(cur, {tangent, normal, -normal});
      if (!ep) return false;
      end.termination = Termination::EPBoundary;
      end.ep = std::move(ep);
      end.probe = end.ep->complex_side;
      end.diagnostic = last == PairFailure::None ? "EP next to the trace" : std::string(failure_name(last));
      return true;
    };
    while (true) {
      if (static_cast<int>(accepted.size()) >= opt_.max_points) {
        end.termination = Termination::StepLimit;
        end.diagnostic = "max_points reached";
        return accepted;
      }
      const auto grad = gradient(cur);
      if (!grad || grad->norm() == 0.0) {
        const Eigen::Vector2d t = prev_tangent ? *prev_tangent : Eigen::Vector2d(0.0, 1.0);
        if (stop_at_ep(t, Eigen::Vector2d(t(1), -t(0)))) return accepted;
        end.termination = Termination::CorrectorDivergence;
        end.diagnostic = "gap gradient unavailable";
        return accepted;
      }
      const double slope = grad->norm();
      const Eigen::Vector2d normal = *grad / slope;
      Eigen::Vector2d tangent(-normal(1), normal(0));
      if (prev_tangent) {
        if (tangent.dot(*prev_tangent) < 0) tangent = -tangent;
      } else {
        const bool flip = std::abs(tangent(1)) > 1e-12 ? tangent(1) < 0 : tangent(0) < 0;
        if (flip) tangent = -tangent;
        tangent *= direction;
      }
      const ParamPoint q{cur.p.j_tilde + step * tangent(0), cur.p.gamma_tilde + step * tangent(1)};
      TraceState next = correct(q, normal, slope, opt_.trust_factor * step, cur);
      if (next.failure == PairFailure::None && std::abs(next.gap) <= tol_.gap &&
          distance(next.p, q) <= opt_.trust_factor * step) {
        accepted.push_back(next);
        cur = std::move(next);
        prev_tangent = tangent;
        step = std::min(2.0 * step, opt_.step);
        continue;
      }
      last = next.failure == PairFailure::None ? PairFailure::Divergence : next.failure;
      probe = next.p;
      // A failed step next to an EP of either level ends the line there.
      if (last != PairFailure::Domain && stop_at_ep(tangent, normal)) return accepted;
      step *= 0.5;
      if (step < opt_.min_step) break;
    }
    switch (last) {
      case PairFailure::Domain: end.termination = Termination::DomainBoundary; break;
      case PairFailure::Divergence: end.termination = Termination::CorrectorDivergence; break;
      default: end.termination = Termination::EPBoundary; break;
    }
    end.probe = probe;
    end.diagnostic = std::string(failure_name(last));
    if (end.termination == Termination::EPBoundary && opt_.locate_boundary_ep) {
      end.ep = nearby_ep(cur, {});
      if (!end.ep) end.diagnostic += "; no EP located within reach";
    }
    return accepted;
  }

  // An EP involving a level of the pair within kEPReach of `last`: probes in
  // the given directions (plus the ring of directions if none is given) and
  // bisects toward the first probe where a level near the pair is complex.
  std::optional<EPLocation> nearby_ep(const TraceState& last, std::vector<Eigen::Vector2d> dirs) const {
    constexpr double kEPReach = 1e-4;
    if (dirs.empty()) {
      for (int k = 0; k < 8; ++k) {
        const double a = k * std::numbers::pi / 4;
        dirs.emplace_back(std::cos(a), std::sin(a));
      }
    }
    const double e0 = last.eig.eigenvalues(last.levels[0]).real();
    const double e1 = last.eig.eigenvalues(last.levels[1]).real();
    for (const auto& d : dirs) {
      for (double r : {kEPReach, 0.25 * kEPReach}) {
        const ParamPoint p{last.p.j_tilde + r * d(0), last.p.gamma_tilde + r * d(1)};
        if (!family_.domain().contains(p)) continue;
        const auto s = solve(family_, p, tol_.spectral);
        if (s.defective) {
          EPLocation loc;
          loc.location = loc.complex_side = p;
          loc.levels = last.levels;
          loc.defective = true;
          loc.eigvec_overlap = 1.0;
          return loc;
        }
        int x = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int n = 0; n < s.eig.size(); ++n) {
          if (is_real_level(s.eig.eigenvalues(n), tol_.spectral)) continue;
          const double re = s.eig.eigenvalues(n).real();
          const double dist = std::min(std::abs(re - e0), std::abs(re - e1));
          if (dist < best) best = dist, x = n;
        }
        if (x < 0 || best > 1e-2) continue;
        int partner = -1;
        best = std::numeric_limits<double>::infinity();
        for (int n = 0; n < s.eig.size(); ++n) {
          if (n == x) continue;
          const double dist = std::abs(s.eig.eigenvalues(n) - std::conj(s.eig.eigenvalues(x)));
          if (dist < best) best = dist, partner = n;
        }
        try {
          return locate_ep_1d(family_, {x, partner}, p, last.p, tol_);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NoTransition) throw;
        }
      }
    }
    return std::nullopt;
  }

 private:
  static TraceState fail(TraceState s, PairFailure f) {
    s.failure = f;
    return s;
  }

  const ParameterFamily& family_;
  std::size_t metric_;
  TraceOptions opt_;
  DegeneracyTolerances tol_;
};

}  // namespace

ManifoldTrace trace_dp_manifold(const ParameterFamily& family, const CrossingEvent& seed,
                                const TraceOptions& options, const DegeneracyTolerances& tol) {
  if (seed.classification != Classification::Diabolical || !check_zero_condition(seed.index_products)) {
    throw Error(ErrorKind::InvalidArgument, "seed must be a Diabolical crossing satisfying the zero condition");
  }
  if (!(options.step > 0 && options.min_step > 0 && options.max_points > 0)) {
    throw Error(ErrorKind::InvalidArgument, "trace step sizes and max_points must be positive");
  }
  std::size_t metric = family.metrics().size();
  for (std::size_t m = 0; m < family.metrics().size(); ++m) {
    const auto it = seed.index_products.find(family.metrics()[m].label);
    if (it != seed.index_products.end() && it->second < 0) {
      metric = m;
      break;
    }
  }
  if (metric == family.metrics().size()) throw Error(ErrorKind::InvalidArgument, "no metric separates the pair");

  const auto solved = solve(family, seed.location, tol.spectral);
  if (solved.defective) throw Error(ErrorKind::DefectiveMatrix, "seed point is defective");
  Tracer tracer(family, metric, options, tol);
  TraceState anchor;
  anchor.p = seed.location;
  anchor.eig = solved.eig;
  anchor.levels = seed.levels;
  TraceState start = tracer.evaluate(seed.location, anchor);
  if (start.failure != PairFailure::None) {
    throw Error(ErrorKind::InvalidArgument, "seed pair rejected: " + std::string(failure_name(start.failure)));
  }

  ManifoldTrace trace;
  trace.identifying_metric = family.metrics()[metric].label;
  const auto backward = tracer.march(start, -1, trace.begin);
  const auto forward = tracer.march(start, +1, trace.end);
  auto push = [&](const TraceState& s) {
    trace.points.push_back(s.p);
    trace.gaps.push_back(s.gap);
    trace.levels.push_back(s.levels);
  };
  for (auto it = backward.rbegin(); it != backward.rend(); ++it) push(*it);
  push(start);
  for (const auto& s : forward) push(s);
  return trace;
}

void write_events_csv(const std::vector<CrossingEvent>& events, const std::vector<MetricLabel>& labels,
                      std::ostream& out) {
  out << "gamma_tilde,j_tilde,band_a,band_b,classification";
  for (auto l : labels) out << ",product_" << to_string(l);
  out << ",gap_residual\n";
  for (const auto& e : events) {
    out << format_real(e.location.gamma_tilde) << ',' << format_real(e.location.j_tilde) << ',' << e.band_pair[0]
        << ',' << e.band_pair[1] << ',' << to_string(e.classification);
    for (auto l : labels) {
      out << ',';
      const auto it = e.index_products.find(l);
      if (it != e.index_products.end()) out << it->second;
    }
    out << ',' << format_real(e.gap_residual) << '\n';
  }
}

void write_manifold_csv(const std::vector<ManifoldTrace>& traces, std::ostream& out) {
  out << "trace_id,point_index,j_tilde,gamma_tilde,gap,termination_begin,termination_end\n";
  for (std::size_t t = 0; t < traces.size(); ++t) {
    const auto& tr = traces[t];
    for (std::size_t i = 0; i < tr.points.size(); ++i) {
      out << t << ',' << i << ',' << format_real(tr.points[i].j_tilde) << ','
          << format_real(tr.points[i].gamma_tilde) << ',' << format_real(tr.gaps[i]) << ',';
      if (i + 1 == tr.points.size()) {
        out << to_string(tr.begin.termination) << ',' << to_string(tr.end.termination);
      } else {
        out << ',';
      }
      out << '\n';
    }
  }
}

}  // namespace pseudospec
