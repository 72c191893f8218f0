#pragma once

#include <optional>
#include <vector>

#include "pseudospec/model.hpp"
#include "pseudospec/operators.hpp"

namespace pseudospec {

struct SpectralTolerances {
  double real = 1e-9;        // |Im eps| <= real * scale counts as a real level
  double cluster = 1e-8;     // eigenvalues closer than this share a cluster
  double quality = 1e-6;     // index refused at or below this quality
  double defective = 1e-10;  // biorthogonal overlap floor
  double scale = 1.0;        // energy unit for the reality test
};

// Right eigenvectors are the columns of `right`, left eigenvectors the rows of
// `left`, with left * right = 1 up to biorth_residual. Levels are sorted by
// (Re eps, Im eps); right columns have unit norm and their largest component
// real and positive.
struct BiorthogonalEigensystem {
  Vector eigenvalues;
  Matrix right;
  Matrix left;
  double biorth_residual = 0.0;

  int size() const noexcept { return static_cast<int>(eigenvalues.size()); }
  // Ket |L_n> (the adjoint of row n of `left`).
  Vector left_ket(int n) const { return left.row(n).adjoint(); }
};

BiorthogonalEigensystem biorthogonal_eig(const DenseOperator& h,
                                         const SpectralTolerances& tol = {});

using Cluster = std::vector<int>;

// Single-linkage grouping of levels whose eigenvalues lie within tol_cluster.
std::vector<Cluster> cluster_degeneracies(const BiorthogonalEigensystem& eig,
                                          double tol_cluster);

// Rotates the cluster so that <R_m|zeta|R_n> is diagonal, positive entries
// first. Left rows transform contragradiently; other levels are untouched.
BiorthogonalEigensystem resolve_degenerate_subspace(const BiorthogonalEigensystem& eig,
                                                    const Cluster& cluster,
                                                    const DenseOperator& zeta,
                                                    const SpectralTolerances& tol = {});

struct LevelIndex {
  MetricLabel metric_label = MetricLabel::P;
  int value = 0;  // +1 or -1
  double quality = 0.0;
};

bool is_real_level(Complex eps, const SpectralTolerances& tol);

// <R_n|zeta|R_n> / <R_n|R_n>, real for Hermitian zeta.
double metric_expectation(const BiorthogonalEigensystem& eig, int level,
                          const DenseOperator& zeta);

LevelIndex topological_index(const BiorthogonalEigensystem& eig, int level,
                             const MetricDescriptor& metric,
                             const SpectralTolerances& tol = {});

// Indices for every level under one metric, degenerate real clusters resolved
// against that metric first. Levels that are complex, near an exceptional point
// or inside a singular cluster get std::nullopt.
struct MetricIndexing {
  MetricLabel label;
  BiorthogonalEigensystem resolved;
  std::vector<std::optional<LevelIndex>> indices;
};

MetricIndexing index_levels(const BiorthogonalEigensystem& eig, const MetricDescriptor& metric,
                            const SpectralTolerances& tol = {});

// Rescales real levels with defined index so that zeta|R_n> = zeta_n |L_n>.
BiorthogonalEigensystem metric_gauge(const BiorthogonalEigensystem& eig,
                                     const DenseOperator& zeta,
                                     const SpectralTolerances& tol = {});

// Normalizes right columns to unit length with the phase convention, adjusting
// the left rows so that biorthonormality is kept.
void canonicalize_phases(BiorthogonalEigensystem& eig);

}  // namespace pseudospec
