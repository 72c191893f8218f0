#include <gtest/gtest.h>

#include <map>
#include <random>

#include <Eigen/Eigenvalues>

#include "pseudospec/model.hpp"
#include "pseudospec/oracle.hpp"

using namespace pseudospec;

namespace {

std::vector<double> dense_h0_spectrum(double delta, double coupling, int n) {
  ModelConfig cfg;
  cfg.gain_loss = GainLossConfig{n, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                                 Arrangement::Longitudinal};
  cfg.delta = delta;
  cfg.coupling = coupling;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(build_hamiltonian(cfg).matrix());
  const Eigen::VectorXd ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

std::map<long, int> multiplicities(const std::vector<double>& e) {
  std::map<long, int> out;
  for (double x : e) ++out[std::lround(x)];
  return out;
}

}  // namespace

TEST(FreeFermion, DecoupledFields) {
  const auto m = single_particle_modes(1.0, 0.0, 4);
  for (double e : m.energies) EXPECT_NEAR(e, 2.0, 1e-14);
  EXPECT_NEAR(m.ground_energy, -4.0, 1e-14);
  EXPECT_EQ(multiplicities(many_body_spectrum(m)),
            (std::map<long, int>{{-4, 1}, {-2, 4}, {0, 6}, {2, 4}, {4, 1}}));
}

TEST(FreeFermion, ClassicalIsingHasFreeEdgeMode) {
  const auto m = single_particle_modes(0.0, 1.0, 4);
  EXPECT_NEAR(m.energies[0], 0.0, 1e-14);
  for (int k = 1; k < 4; ++k) EXPECT_NEAR(m.energies[k], 2.0, 1e-14);
  EXPECT_NEAR(m.ground_energy, -3.0, 1e-14);
  EXPECT_EQ(multiplicities(many_body_spectrum(m)),
            (std::map<long, int>{{-3, 2}, {-1, 6}, {1, 6}, {3, 2}}));
}

TEST(FreeFermion, MatchesDenseDiagonalization) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    for (int n : {2, 3, 4, 5}) {
      const double delta = u(rng), coupling = u(rng);
      const auto oracle = many_body_spectrum(single_particle_modes(delta, coupling, n));
      const auto dense = dense_h0_spectrum(delta, coupling, n);
      ASSERT_EQ(oracle.size(), dense.size());
      for (std::size_t k = 0; k < dense.size(); ++k) {
        EXPECT_NEAR(oracle[k], dense[k], 1e-10) << "delta=" << delta << " J=" << coupling << " n=" << n;
      }
    }
  }
}

TEST(FreeFermion, SpectrumSymmetricWhenOneCouplingVanishes) {
  for (auto [d, j] : {std::pair{1.3, 0.0}, std::pair{0.0, 0.7}}) {
    const auto e = many_body_spectrum(single_particle_modes(d, j, 4));
    for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(e[k], -e[e.size() - 1 - k], 1e-12);
  }
}

TEST(FreeFermion, UIndexOracle) {
  EXPECT_EQ(u_index_oracle(0b0000), 1);
  EXPECT_EQ(u_index_oracle(0b0001), -1);
  EXPECT_EQ(u_index_oracle(0b0101), 1);
  EXPECT_EQ(vacuum_u_parity(4), 1);
  EXPECT_EQ(vacuum_u_parity(3), -1);
}

TEST(FreeFermion, DenseIndicesAgree) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.05, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    for (int n : {2, 3, 4}) {
      const auto r = check_against_dense(u(rng), u(rng), n);
      EXPECT_TRUE(r.passed(1e-10)) << "err=" << r.max_energy_error << " idx=" << r.index_mismatches
                                   << " clusters=" << r.cluster_mismatches;
      EXPECT_GT(r.nondegenerate_levels, 0);
    }
  }
}
