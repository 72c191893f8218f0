#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>
#include <sstream>

#include "pseudospec/degeneracy.hpp"
#include "pseudospec/errors.hpp"

using namespace pseudospec;

namespace {

const Complex I(0.0, 1.0);

Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

ParameterFamily two_level(ParameterFamily::Builder builder, Matrix metric) {
  return ParameterFamily(std::move(builder), {MetricDescriptor{MetricLabel::P, DenseOperator(std::move(metric))}});
}

// Two metrics with opposite products on the Z eigenbasis: sigma_z and 1.
ParameterFamily protected_two_level(ParameterFamily::Builder builder) {
  return ParameterFamily(std::move(builder), {MetricDescriptor{MetricLabel::P, DenseOperator(pauli_z())},
                                              MetricDescriptor{MetricLabel::U, DenseOperator(Matrix::Identity(2, 2))}});
}

CrossingEvent event_at(ParamPoint p, std::array<int, 2> levels) {
  CrossingEvent e;
  e.location = p;
  e.levels = levels;
  return e;
}

std::vector<CrossingEvent> of_class(const std::vector<CrossingEvent>& events, Classification c) {
  std::vector<CrossingEvent> out;
  for (const auto& e : events)
    if (e.classification == c) out.push_back(e);
  return out;
}

// Storage levels at `base` continuing the pair of a crossing event.
std::array<int, 2> follow(const ParameterFamily& family, const CrossingEvent& e, ParamPoint base) {
  const auto at = biorthogonal_eig(family.hamiltonian(e.location));
  const auto there = biorthogonal_eig(family.hamiltonian(base));
  const auto sel = select_pair(at, e.levels, there);
  if (!sel) throw std::runtime_error("pair not followed");
  return *sel;
}

std::vector<CrossingEvent> scan(const ParameterFamily& family, double lo, double hi, int points, double gamma) {
  return scan_crossings(family, sweep_family(family, linear_grid(lo, hi, points), gamma));
}

}  // namespace

TEST(ZeroCondition, Examples) {
  EXPECT_TRUE(check_zero_condition({{MetricLabel::P, 1}, {MetricLabel::U, -1}}));
  EXPECT_FALSE(check_zero_condition({{MetricLabel::P, -1}, {MetricLabel::U, -1}}));
  EXPECT_FALSE(check_zero_condition({{MetricLabel::P, 1}}));
  EXPECT_FALSE(check_zero_condition({}));
}

TEST(ClassifyCrossing, AnalyticEP) {
  const auto family = two_level([](ParamPoint p) -> Matrix { return pauli_x() + I * p.gamma_tilde * pauli_z(); },
                                pauli_x());
  const auto e = classify_crossing(family, event_at({0.5, 1.0}, {0, 1}));
  EXPECT_EQ(e.classification, Classification::EP2);
  EXPECT_EQ(e.index_products.at(MetricLabel::P), -1);
}

TEST(ClassifyCrossing, DiagonalIsDiabolical) {
  const auto family =
      two_level([](ParamPoint p) -> Matrix { return (p.j_tilde - 0.5) * pauli_z(); }, pauli_z());
  const auto e = classify_crossing(family, event_at({0.5, 0.0}, {0, 1}));
  EXPECT_EQ(e.classification, Classification::Diabolical);
  EXPECT_LE(e.gap_residual, 1e-12);
  EXPECT_GE(e.diagnostics.min_quality, 1.0 - 1e-12);
  EXPECT_EQ(e.index_products.at(MetricLabel::P), -1);
}

TEST(ClassifyCrossing, OffsetIsAvoided) {
  Matrix x = pauli_x();
  const auto family = two_level(
      [x](ParamPoint p) -> Matrix { return (p.j_tilde - 0.5) * pauli_z() + 2e-2 * x; }, pauli_x());
  const auto events = scan(family, 0.0, 0.99, 100, 0.0);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].candidate, CandidateKind::GapMinimum);
  EXPECT_EQ(events[0].classification, Classification::Avoided);
  EXPECT_NEAR(events[0].location.j_tilde, 0.5, 1e-6);
  EXPECT_NEAR(events[0].gap_residual, 4e-2, 1e-9);
}

TEST(FindCrossings, LinearCrossingAndConstantBands) {
  const auto crossing =
      two_level([](ParamPoint p) -> Matrix { return (p.j_tilde - 0.5) * pauli_z(); }, pauli_z());
  const auto events = find_crossings_1d(crossing, sweep_family(crossing, linear_grid(0.0, 0.99, 37), 0.0));
  ASSERT_EQ(events.size(), 1u);
  EXPECT_NEAR(events[0].location.j_tilde, 0.5, 1e-8);
  EXPECT_EQ(events[0].band_pair, (std::array<int, 2>{0, 1}));

  const auto flat = two_level([](ParamPoint) -> Matrix { return pauli_z(); }, pauli_z());
  EXPECT_TRUE(find_crossings_1d(flat, sweep_family(flat, linear_grid(0.0, 0.99, 37), 0.0)).empty());
}

TEST(LocateEP, AnalyticBracket) {
  const auto family = two_level([](ParamPoint p) -> Matrix { return pauli_x() + I * p.gamma_tilde * pauli_z(); },
                                pauli_x());
  const auto loc = locate_ep_1d(family, {0, 1}, {0.5, 0.5}, {0.5, 1.5});
  EXPECT_NEAR(loc.location.gamma_tilde, 1.0, 1e-8);
  EXPECT_NEAR(loc.complex_side.gamma_tilde, 1.0, 1e-8);
  EXPECT_LE(loc.location.gamma_tilde, loc.complex_side.gamma_tilde);
  EXPECT_THROW(locate_ep_1d(family, {0, 1}, {0.5, 0.1}, {0.5, 0.6}), Error);
  try {
    locate_ep_1d(family, {0, 1}, {0.5, 0.1}, {0.5, 0.6});
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoTransition);
  }
}

TEST(ProjectHamiltonian, TwoLevelMatchesAnalytic) {
  // H = (0.5 + J) sx + i g sz, base Delta = 1, g = 0.5 Delta.
  const auto family = two_level(
      [](ParamPoint p) -> Matrix { return (0.5 + p.j_tilde) * pauli_x() + I * p.gamma_tilde * pauli_z(); },
      pauli_x());
  const ParamPoint base{0.5, 0.5};
  const auto eig = biorthogonal_eig(family.hamiltonian(base));
  const int up = eig.eigenvalues(0).real() > 0 ? 0 : 1;
  const auto ph = project_hamiltonian(family, base, {up, 1 - up});

  const double e = std::sqrt(0.75);
  EXPECT_NEAR(ph.eps_pair[0], e, 1e-12);
  EXPECT_NEAR(ph.u1(0), 1.0 / e, 1e-8);
  EXPECT_NEAR(ph.u1(1), -0.5 / e, 1e-8);
  EXPECT_NEAR(ph.u2(0), -1.0 / e, 1e-8);
  EXPECT_NEAR(ph.u2(1), 0.5 / e, 1e-8);
  EXPECT_LE(ph.u_imag_residual, 1e-8 * ph.grad_norm);

  ASSERT_EQ(ph.metrics.size(), 1u);
  const auto& m = ph.metrics[0];
  EXPECT_EQ(m.product, -1);
  EXPECT_GT(m.w.norm(), 0.1);
  EXPECT_LE(m.reciprocity_residual, 1e-8 * ph.grad_norm);

  // Gauge-free check: w_a * lower_a = (R1^T dH R2)^2 / (R1^T R1 R2^T R2)
  // with R = (Delta, lambda - i g) and symmetric H.
  const std::array<Matrix, 2> dh{pauli_x(), I * pauli_z()};
  const Vector r1 = (Vector(2) << 1.0, e - 0.5 * I).finished();
  const Vector r2 = (Vector(2) << 1.0, -e - 0.5 * I).finished();
  const Complex n1 = (r1.transpose() * r1)(0), n2 = (r2.transpose() * r2)(0);
  for (int a = 0; a < 2; ++a) {
    const Complex c = (r1.transpose() * dh[a] * r2)(0);
    EXPECT_LE(std::abs(m.w(a) * m.lower(a) - c * c / (n1 * n2)), 1e-8);
  }
}

TEST(ProjectHamiltonian, DiagonalFamilyHasNoCoupling) {
  Matrix z = pauli_z();
  const auto family = two_level(
      [](ParamPoint p) -> Matrix {
        Matrix h = Matrix::Zero(2, 2);
        h(0, 0) = p.j_tilde;
        h(1, 1) = 2.0 + 3.0 * p.gamma_tilde;
        return h;
      },
      z);
  const auto ph = project_hamiltonian(family, {0.3, 0.2}, {0, 1});
  EXPECT_NEAR(ph.u1(0), 1.0, 1e-9);
  EXPECT_NEAR(ph.u1(1), 0.0, 1e-9);
  EXPECT_NEAR(ph.u2(0), 0.0, 1e-9);
  EXPECT_NEAR(ph.u2(1), 3.0, 1e-9);
  EXPECT_LE(ph.metrics[0].w.norm(), 1e-12);
  EXPECT_EQ(ph.metrics[0].product, -1);
}

TEST(ProjectHamiltonian, RejectsDegenerateOrComplexBase) {
  const auto family = two_level([](ParamPoint p) -> Matrix { return pauli_x() + I * p.gamma_tilde * pauli_z(); },
                                pauli_x());
  EXPECT_THROW(project_hamiltonian(family, {0.5, 1.2}, {0, 1}), Error);
  const auto flat = two_level([](ParamPoint) -> Matrix { return Matrix::Identity(2, 2); }, pauli_z());
  EXPECT_THROW(project_hamiltonian(flat, {0.5, 0.0}, {0, 1}), Error);
}

TEST(ProjectHamiltonian, RedDotCouplingVanishesInBothBases) {
  const auto family = chain_family(Arrangement::Longitudinal, 4);
  const auto events = of_class(scan(family, 0.6, 0.65, 51, 0.0), Classification::Diabolical);
  int red = 0;
  for (const auto& e : events) {
    if (!check_zero_condition(e.index_products)) continue;
    ++red;
    for (double dj : {-5e-3, -1e-3, 1e-3, 5e-3}) {
      for (double g : {0.0, 0.02}) {
        const ParamPoint base{e.location.j_tilde + dj, g};
        const auto ph = project_hamiltonian(family, base, follow(family, e, base));
        ASSERT_EQ(ph.metrics.size(), 2u);
        for (const auto& m : ph.metrics) {
          EXPECT_LE(m.w.norm(), 1e-8 * ph.grad_norm) << to_string(m.label) << " at " << dj << "," << g;
          EXPECT_LE(m.reciprocity_residual, 1e-8 * ph.grad_norm);
        }
        EXPECT_NE(ph.metrics[0].product, ph.metrics[1].product);
      }
    }
  }
  EXPECT_EQ(red, 1);
}

TEST(ProjectHamiltonian, CharacteristicIdentityAcrossMetrics) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto kind : {Arrangement::Longitudinal, Arrangement::Transversal}) {
    const auto family = chain_family(kind, 4);
    for (const ParamPoint base : {ParamPoint{0.3, 0.05}, ParamPoint{0.55, 0.1}, ParamPoint{0.8, 0.02}}) {
      const auto eig = biorthogonal_eig(family.hamiltonian(base));
      for (int a = 0; a + 1 < eig.size(); ++a) {
        const std::array<int, 2> pair{a, a + 1};
        if (!is_real_level(eig.eigenvalues(a), {}) || !is_real_level(eig.eigenvalues(a + 1), {})) continue;
        const auto ph = project_hamiltonian(family, base, pair);
        for (int trial = 0; trial < 3; ++trial) {
          const Eigen::Vector2d dp(1e-3 * unit(rng), 1e-3 * unit(rng));
          const auto& m0 = ph.metrics[0];
          const auto& m1 = ph.metrics[1];
          const double lhs = m0.product * std::norm(m0.w.dot(dp.cast<Complex>()));
          const double rhs = m1.product * std::norm(m1.w.dot(dp.cast<Complex>()));
          const double scale = std::max(std::abs(lhs), 1e-6 * ph.grad_norm * ph.grad_norm * dp.squaredNorm());
          EXPECT_LE(std::abs(lhs - rhs), 1e-8 * scale) << to_string(kind) << " pair " << a;
        }
      }
    }
  }
}

TEST(ProjectHamiltonian, SameProductGapOpening) {
  // At the linearized crossing, eps_1 - eps_2 = 2 sqrt(product) |w.dp|:
  // real for product +1, imaginary for product -1.
  auto gap_at_crossing = [](const ProjectedHamiltonian& ph, const MetricProjection& m) {
    const Eigen::Vector2d um = ph.u_minus();
    const double d = 0.5 * (ph.eps_pair[0] - ph.eps_pair[1]);
    Eigen::Vector2d dp = -d * um / um.squaredNorm();
    dp += 1e-3 * Eigen::Vector2d(-um(1), um(0)).normalized();
    Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(ph.linear_block(m, dp));
    return Complex(es.eigenvalues()(0) - es.eigenvalues()(1));
  };

  const auto longitudinal = chain_family(Arrangement::Longitudinal, 4);
  const auto black = of_class(scan(longitudinal, 0.49, 0.51, 21, 0.0), Classification::Diabolical);
  int checked = 0;
  for (const auto& e : black) {
    if (check_zero_condition(e.index_products)) continue;
    const ParamPoint base{e.location.j_tilde + 1e-3, 0.0};
    const auto ph = project_hamiltonian(longitudinal, base, follow(longitudinal, e, base));
    for (const auto& m : ph.metrics) {
      ASSERT_EQ(m.product, -1);
      const Complex gap = gap_at_crossing(ph, m);
      EXPECT_GT(std::abs(gap.imag()), 1e3 * std::abs(gap.real()));
    }
    ++checked;
  }
  EXPECT_EQ(checked, 1);

  // The staggered gain is P-odd, so equal-parity levels only couple once
  // gamma~ > 0; project at the avoided crossing itself.
  const auto mixed = chain_family(Arrangement::Mixed, 4);
  const auto avoided = of_class(scan(mixed, 0.45, 0.55, 101, 0.1), Classification::Avoided);
  checked = 0;
  for (const auto& e : avoided) {
    if (e.gap_residual > 0.05) continue;
    const auto ph = project_hamiltonian(mixed, e.location, e.levels);
    ASSERT_EQ(ph.metrics[0].product, 1);
    const Complex gap = gap_at_crossing(ph, ph.metrics[0]);
    EXPECT_GT(std::abs(gap.real()), 1e3 * std::abs(gap.imag()));
    EXPECT_GT(std::abs(gap.real()), 1e-6);
    ++checked;
  }
  EXPECT_EQ(checked, 1);
}

TEST(TraceManifold, DiagonalFamilyFollowsTheDiagonal) {
  const auto family =
      protected_two_level([](ParamPoint p) -> Matrix { return (p.j_tilde - p.gamma_tilde) * pauli_z() + 0.3 * Matrix::Identity(2, 2); });
  const auto seed = classify_crossing(family, event_at({0.5, 0.5}, {0, 1}));
  ASSERT_EQ(seed.classification, Classification::Diabolical);
  ASSERT_TRUE(check_zero_condition(seed.index_products));
  const auto trace = trace_dp_manifold(family, seed);
  ASSERT_GT(trace.points.size(), 50u);
  for (std::size_t i = 0; i < trace.points.size(); ++i) {
    EXPECT_NEAR(trace.points[i].j_tilde, trace.points[i].gamma_tilde, 1e-12);
    EXPECT_LE(std::abs(trace.gaps[i]), 1e-8);
  }
  EXPECT_EQ(trace.begin.termination, Termination::DomainBoundary);
  EXPECT_EQ(trace.end.termination, Termination::DomainBoundary);
  EXPECT_LT(trace.points.front().j_tilde, 0.02);
  EXPECT_GT(trace.points.back().j_tilde, 0.98);
}

TEST(TraceManifold, RejectsUnprotectedSeed) {
  const auto family =
      two_level([](ParamPoint p) -> Matrix { return (p.j_tilde - 0.5) * pauli_z(); }, pauli_z());
  const auto seed = classify_crossing(family, event_at({0.5, 0.0}, {0, 1}));
  EXPECT_THROW(trace_dp_manifold(family, seed), Error);
}

TEST(TraceManifold, StepLimit) {
  const auto family =
      protected_two_level([](ParamPoint p) -> Matrix { return (p.j_tilde - p.gamma_tilde) * pauli_z(); });
  const auto seed = classify_crossing(family, event_at({0.5, 0.5}, {0, 1}));
  TraceOptions opt;
  opt.max_points = 3;
  const auto trace = trace_dp_manifold(family, seed, opt);
  EXPECT_EQ(trace.points.size(), 7u);
  EXPECT_EQ(trace.begin.termination, Termination::StepLimit);
  EXPECT_EQ(trace.end.termination, Termination::StepLimit);
}

TEST(TraceManifold, LongitudinalRedDotEndsAtEP) {
  const auto family = chain_family(Arrangement::Longitudinal, 4);
  const auto events = of_class(scan(family, 0.6, 0.65, 51, 0.0), Classification::Diabolical);
  int traced = 0;
  for (const auto& e : events) {
    if (!check_zero_condition(e.index_products)) continue;
    const auto trace = trace_dp_manifold(family, e);
    EXPECT_EQ(trace.begin.termination, Termination::DomainBoundary);
    ASSERT_EQ(trace.end.termination, Termination::EPBoundary) << trace.end.diagnostic;
    ASSERT_TRUE(trace.end.ep.has_value());
    const auto& last = trace.points.back();
    EXPECT_LE(std::hypot(trace.end.ep->location.j_tilde - last.j_tilde,
                         trace.end.ep->location.gamma_tilde - last.gamma_tilde),
              1e-4);
    EXPECT_LT(trace.end.ep->min_quality, 1e-6);
    EXPECT_GT(last.gamma_tilde, 0.1);
    for (double gap : trace.gaps) EXPECT_LE(std::abs(gap), 1e-8);
    ++traced;
  }
  EXPECT_EQ(traced, 1);
}

TEST(Crossings, LongitudinalMatchesDenseScan) {
  const auto family = chain_family(Arrangement::Longitudinal, 4);
  // Oracle: local minima of adjacent sorted Hermitian eigenvalue gaps on a
  // 1e-4 grid.
  struct Hit {
    double j, e;
  };
  std::vector<Hit> oracle;
  const int n = 9800;
  std::vector<Eigen::VectorXd> levels(n);
  auto j_of = [](int k) { return 0.01 + 1e-4 * k; };
  for (int k = 0; k < n; ++k) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(family.hamiltonian({j_of(k), 0.0}).matrix(), Eigen::EigenvaluesOnly);
    levels[k] = es.eigenvalues();
  }
  for (int a = 0; a + 1 < 16; ++a) {
    for (int k = 1; k + 1 < n; ++k) {
      auto gap = [&](int kk) { return levels[kk](a + 1) - levels[kk](a); };
      if (gap(k) < 1e-3 && gap(k) <= gap(k - 1) && gap(k) < gap(k + 1)) {
        oracle.push_back({j_of(k), 0.5 * (levels[k](a) + levels[k](a + 1))});
      }
    }
  }
  const auto events = scan(family, 0.0, 0.999, 1000, 0.0);
  const auto diabolical = of_class(events, Classification::Diabolical);
  EXPECT_EQ(diabolical.size(), events.size());
  ASSERT_EQ(diabolical.size(), oracle.size());
  for (const auto& h : oracle) {
    int matches = 0;
    for (const auto& e : diabolical) {
      if (std::abs(e.location.j_tilde - h.j) <= 2e-4 && std::abs(e.energy - h.e) <= 1e-3) ++matches;
    }
    EXPECT_EQ(matches, 1) << "oracle crossing at J=" << h.j << " E=" << h.e;
  }
  int red = 0, black = 0;
  for (const auto& e : diabolical) (check_zero_condition(e.index_products) ? red : black)++;
  EXPECT_EQ(red, 3);
  EXPECT_EQ(black, 3);
}

TEST(Crossings, BlackDotSplitsIntoTwoEPs) {
  const auto family = chain_family(Arrangement::Longitudinal, 4);
  const auto at_zero = scan(family, 0.45, 0.55, 101, 0.0);
  std::optional<CrossingEvent> black;
  for (const auto& e : at_zero)
    if (e.classification == Classification::Diabolical && !check_zero_condition(e.index_products)) black = e;
  ASSERT_TRUE(black);
  const auto events = scan(family, 0.45, 0.55, 101, 0.1);
  std::vector<CrossingEvent> eps;
  for (const auto& e : of_class(events, Classification::EP2)) {
    if (std::abs(e.energy - black->energy) < 0.05) eps.push_back(e);
  }
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_LT(eps[0].location.j_tilde, black->location.j_tilde);
  EXPECT_GT(eps[1].location.j_tilde, black->location.j_tilde);
  for (const auto& e : eps) {
    for (const auto& [label, product] : e.index_products) EXPECT_EQ(product, -1) << to_string(label);
    EXPECT_LT(e.diagnostics.min_quality, 1e-6);
    EXPECT_GT(e.diagnostics.eigvec_overlap, 1.0 - 1e-4);
  }
}

TEST(Crossings, MixedSameParityCrossingsAreAvoided) {
  const auto family = chain_family(Arrangement::Mixed, 4);
  const auto events = scan(family, 0.4, 0.75, 351, 0.1);
  int avoided = 0;
  for (const auto& e : events) {
    EXPECT_NE(e.classification, Classification::Diabolical);
    if (e.classification == Classification::Avoided && e.gap_residual < 0.02) {
      EXPECT_GT(e.gap_residual, 1e-4);
      EXPECT_EQ(e.index_products.at(MetricLabel::P), 1);
      ++avoided;
    }
  }
  EXPECT_GE(avoided, 2);
}

TEST(Crossings, EPsHaveOppositeIndicesInEveryMetric) {
  for (auto kind : {Arrangement::Longitudinal, Arrangement::Transversal}) {
    const auto family = chain_family(kind, 4);
    const auto eps = of_class(scan(family, 0.0, 0.999, 500, 0.15), Classification::EP2);
    ASSERT_FALSE(eps.empty());
    for (const auto& e : eps) {
      EXPECT_EQ(e.index_products.size(), 2u);
      for (const auto& [label, product] : e.index_products) EXPECT_EQ(product, -1);
    }
  }
}

TEST(EventsCsv, HeaderAndRow) {
  CrossingEvent e = event_at({0.5, 0.25}, {3, 4});
  e.band_pair = {3, 4};
  e.classification = Classification::Diabolical;
  e.index_products = {{MetricLabel::P, 1}};
  e.gap_residual = 0.0;
  std::ostringstream out;
  write_events_csv({e}, {MetricLabel::P, MetricLabel::U}, out);
  EXPECT_EQ(out.str(),
            "gamma_tilde,j_tilde,band_a,band_b,classification,product_P,product_U,gap_residual\n"
            "0.25,0.5,3,4,Diabolical,1,,0\n");
}

TEST(ManifoldCsv, TerminationOnLastRow) {
  ManifoldTrace t;
  t.points = {{0.1, 0.0}, {0.2, 0.1}};
  t.gaps = {0.0, 1e-12};
  t.levels = {{0, 1}, {0, 1}};
  t.begin.termination = Termination::DomainBoundary;
  t.end.termination = Termination::EPBoundary;
  std::ostringstream out;
  write_manifold_csv({t}, out);
  EXPECT_EQ(out.str(),
            "trace_id,point_index,j_tilde,gamma_tilde,gap,termination_begin,termination_end\n"
            "0,0," + format_real(0.1) + ",0,0,,\n"
            "0,1," + format_real(0.2) + "," + format_real(0.1) + "," + format_real(1e-12) +
                ",DomainBoundary,EPBoundary\n");
}
