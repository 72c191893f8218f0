#include "pseudospec/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <Eigen/SVD>

#include "pseudospec/errors.hpp"
#include "pseudospec/model.hpp"

namespace pseudospec {

FermionModes single_particle_modes(double delta, double coupling, int n_sites) {
  if (n_sites < 2 || n_sites > 20) {
    throw Error(ErrorKind::InvalidArgument, "n_sites must lie in [2, 20]");
  }
  if (!std::isfinite(delta) || !std::isfinite(coupling)) {
    throw Error(ErrorKind::InvalidArgument, "Delta and J must be finite");
  }
  // After Jordan-Wigner the Bogolyubov energies are twice the singular values
  // of the bidiagonal block with Delta on the diagonal and J below it.
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n_sites, n_sites);
  for (int j = 0; j < n_sites; ++j) block(j, j) = delta;
  for (int j = 0; j + 1 < n_sites; ++j) block(j + 1, j) = coupling;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(block);
  FermionModes modes;
  modes.energies.resize(n_sites);
  for (int k = 0; k < n_sites; ++k) {
    modes.energies[k] = std::max(0.0, 2.0 * svd.singularValues()(k));
  }
  std::sort(modes.energies.begin(), modes.energies.end());
  double sum = 0.0;
  for (double e : modes.energies) sum += e;
  modes.ground_energy = -0.5 * sum;
  return modes;
}

std::vector<ManyBodyLevel> many_body_levels(const FermionModes& modes) {
  const int n = modes.n_sites();
  std::vector<ManyBodyLevel> levels(std::size_t{1} << n);
  for (std::uint32_t mask = 0; mask < levels.size(); ++mask) {
    double e = modes.ground_energy;
    for (int k = 0; k < n; ++k) {
      if (mask & (1u << k)) e += modes.energies[k];
    }
    levels[mask] = {e, mask};
  }
  std::stable_sort(levels.begin(), levels.end(),
                   [](const ManyBodyLevel& a, const ManyBodyLevel& b) { return a.energy < b.energy; });
  return levels;
}

std::vector<double> many_body_spectrum(const FermionModes& modes) {
  const auto levels = many_body_levels(modes);
  std::vector<double> out(levels.size());
  std::transform(levels.begin(), levels.end(), out.begin(), [](const ManyBodyLevel& l) { return l.energy; });
  return out;
}

int u_index_oracle(std::uint32_t occupation) {
  return (std::popcount(occupation) % 2 == 0) ? 1 : -1;
}

int vacuum_u_parity(int n_sites) { return (n_sites % 2 == 0) ? 1 : -1; }

OracleCheck check_against_dense(double delta, double coupling, int n_sites,
                                const SpectralTolerances& tol) {
  OracleCheck report{delta, coupling, n_sites};
  const auto levels = many_body_levels(single_particle_modes(delta, coupling, n_sites));

  ModelConfig cfg;
  cfg.gain_loss = GainLossConfig{n_sites, std::vector<double>(n_sites, 0.0),
                                 std::vector<double>(n_sites, 0.0), Arrangement::Longitudinal};
  cfg.delta = delta;
  cfg.coupling = coupling;
  const auto h = build_hamiltonian(cfg);
  const auto eig = biorthogonal_eig(h, tol);
  const MetricDescriptor u{MetricLabel::U, u_operator(n_sites)};
  const auto indexed = index_levels(eig, u, tol);

  for (int n = 0; n < eig.size(); ++n) {
    report.max_energy_error =
        std::max(report.max_energy_error, std::abs(eig.eigenvalues(n) - levels[n].energy));
  }
  const int vacuum = vacuum_u_parity(n_sites);
  for (const auto& cluster : cluster_degeneracies(indexed.resolved, tol.cluster)) {
    std::vector<int> dense_idx, oracle_idx;
    for (int n : cluster) {
      dense_idx.push_back(indexed.indices[n] ? indexed.indices[n]->value : 0);
      oracle_idx.push_back(vacuum * u_index_oracle(levels[n].occupation));
    }
    if (cluster.size() == 1) {
      ++report.nondegenerate_levels;
      if (dense_idx[0] != oracle_idx[0]) ++report.index_mismatches;
      continue;
    }
    std::sort(dense_idx.begin(), dense_idx.end());
    std::sort(oracle_idx.begin(), oracle_idx.end());
    if (dense_idx != oracle_idx) ++report.cluster_mismatches;
  }
  return report;
}

}  // namespace pseudospec
