#pragma once

#include <cstdint>
#include <vector>

#include "pseudospec/spectral.hpp"

namespace pseudospec {

// Bogolyubov modes of the open transverse-field Ising chain
// Delta sum X_j - J sum Z_j Z_{j+1}.
struct FermionModes {
  std::vector<double> energies;  // ascending, >= 0
  double ground_energy = 0.0;    // -1/2 sum energies
  int n_sites() const noexcept { return static_cast<int>(energies.size()); }
};

FermionModes single_particle_modes(double delta, double coupling, int n_sites);

struct ManyBodyLevel {
  double energy = 0.0;
  std::uint32_t occupation = 0;  // bit k set <=> mode k excited
};

// All 2^N occupation states, sorted by energy with ties broken by bitmask.
std::vector<ManyBodyLevel> many_body_levels(const FermionModes& modes);
std::vector<double> many_body_spectrum(const FermionModes& modes);

// (-1)^popcount(mask).
int u_index_oracle(std::uint32_t occupation);

// U eigenvalue of the fermionic vacuum. For Delta > 0 the vacuum is
// adiabatically connected to the all-down X state, so it is (-1)^N.
int vacuum_u_parity(int n_sites);

struct OracleCheck {
  double delta = 0.0;
  double coupling = 0.0;
  int n_sites = 0;
  double max_energy_error = 0.0;       // multiset distance to dense diagonalization
  int nondegenerate_levels = 0;
  int index_mismatches = 0;            // non-degenerate levels with wrong U index
  int cluster_mismatches = 0;          // degenerate clusters with wrong U multiset
  bool passed(double tol) const {
    return max_energy_error <= tol && index_mismatches == 0 && cluster_mismatches == 0;
  }
};

// Compares the free-fermion spectrum and U indices with dense diagonalization
// of the Hermitian chain. Degenerate levels are compared as U-index multisets
// after resolving the cluster against U.
OracleCheck check_against_dense(double delta, double coupling, int n_sites,
                                const SpectralTolerances& tol = {});

}  // namespace pseudospec
