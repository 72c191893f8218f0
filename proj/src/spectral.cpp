#include "pseudospec/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "pseudospec/errors.hpp"

namespace pseudospec {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
// Multiplier on kappa * eps * ||H|| when deciding that two computed
// eigenvalues are numerically indistinguishable.
constexpr double kUncertaintyFactor = 10.0;

std::vector<int> lexicographic_order(const Vector& ev) {
  std::vector<int> order(ev.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (ev(a).real() != ev(b).real()) return ev(a).real() < ev(b).real();
    return ev(a).imag() < ev(b).imag();
  });
  return order;
}

Complex phase_of_largest(const Eigen::Ref<const Vector>& v) {
  const double vmax = v.cwiseAbs().maxCoeff();
  if (vmax == 0.0) return 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    if (a >= (1.0 - 1e-10) * vmax) return std::conj(v(i)) / a;
  }
  return 1.0;
}

// Cluster labels: clusters[k] lists member levels, kept sorted.
std::vector<Cluster> single_linkage(const Vector& ev, double tol) {
  const int n = static_cast<int>(ev.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (std::abs(ev(a) - ev(b)) <= tol) parent[find(a)] = find(b);
    }
  }
  std::vector<Cluster> clusters;
  std::vector<int> slot(n, -1);
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(clusters.size());
      clusters.emplace_back();
    }
    clusters[slot[root]].push_back(i);
  }
  return clusters;
}

double cluster_distance(const Vector& ev, const Cluster& a, const Cluster& b) {
  double d = std::numeric_limits<double>::infinity();
  for (int i : a)
    for (int j : b) d = std::min(d, std::abs(ev(i) - ev(j)));
  return d;
}

double point_distance(const Vector& ev, const Cluster& c, Complex z) {
  double d = std::numeric_limits<double>::infinity();
  for (int i : c) d = std::min(d, std::abs(ev(i) - z));
  return d;
}

void merge_clusters(std::vector<Cluster>& clusters, std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  clusters[a].insert(clusters[a].end(), clusters[b].begin(), clusters[b].end());
  std::sort(clusters[a].begin(), clusters[a].end());
  clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(b));
}

Matrix gather_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
  return out;
}

double smallest_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

}  // namespace

void canonicalize_phases(BiorthogonalEigensystem& eig) {
  for (int n = 0; n < eig.size(); ++n) {
    const double norm = eig.right.col(n).norm();
    if (norm == 0.0) continue;
    const Complex phase = phase_of_largest(eig.right.col(n));
    eig.right.col(n) *= phase / norm;
    eig.left.row(n) *= norm / phase;
  }
}

BiorthogonalEigensystem biorthogonal_eig(const DenseOperator& h, const SpectralTolerances& tol) {
  const Matrix& hm = h.matrix();
  const int n = static_cast<int>(h.dim());
  Eigen::ComplexEigenSolver<Matrix> right_solver(hm, true);
  Eigen::ComplexEigenSolver<Matrix> adjoint_solver(hm.adjoint(), true);
  if (right_solver.info() != Eigen::Success || adjoint_solver.info() != Eigen::Success) {
    throw Error(ErrorKind::PairingFailure, "eigensolver did not converge");
  }

  BiorthogonalEigensystem out;
  out.eigenvalues.resize(n);
  out.right.resize(n, n);
  const auto order = lexicographic_order(right_solver.eigenvalues());
  for (int k = 0; k < n; ++k) {
    out.eigenvalues(k) = right_solver.eigenvalues()(order[k]);
    Vector v = right_solver.eigenvectors().col(order[k]).normalized();
    v *= phase_of_largest(v);
    out.right.col(k) = v;
  }
  // Adjoint problem: H^dag |l> = conj(eps) |l>  <=>  <l| H = eps <l|.
  const Vector adjoint_eps = adjoint_solver.eigenvalues().conjugate();
  Matrix left_kets = adjoint_solver.eigenvectors();
  left_kets.colwise().normalize();

  const double hnorm = std::max(hm.norm(), std::numeric_limits<double>::min());
  const double far = 1e-6 * std::max(1.0, hnorm);
  std::vector<Cluster> clusters = single_linkage(out.eigenvalues, tol.cluster);
  std::vector<std::vector<int>> assigned;
  std::vector<double> sigma;

  for (int pass = 0;; ++pass) {
    if (pass > 2 * n + 2) throw Error(ErrorKind::PairingFailure, "cluster pairing did not settle");
    // Pair every adjoint eigenvalue with the closest right cluster.
    assigned.assign(clusters.size(), {});
    bool restart = false;
    for (int j = 0; j < n && !restart; ++j) {
      double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
      std::size_t c1 = 0, c2 = 0;
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        const double d = point_distance(out.eigenvalues, clusters[c], adjoint_eps(j));
        if (d < d1) {
          d2 = d1, c2 = c1;
          d1 = d, c1 = c;
        } else if (d < d2) {
          d2 = d, c2 = c;
        }
      }
      if (d1 > far) {
        throw Error(ErrorKind::PairingFailure,
                    "adjoint eigenvalue has no right partner within " + short_number(far));
      }
      if (clusters.size() > 1 && d1 > 0.5 * d2) {
        // Equidistant candidates: the levels cannot be told apart.
        merge_clusters(clusters, c1, c2);
        restart = true;
      } else {
        assigned[c1].push_back(j);
      }
    }
    if (restart) continue;
    for (std::size_t c = 0; c < clusters.size() && !restart; ++c) {
      if (assigned[c].size() != clusters[c].size()) {
        // Count mismatch: fold the cluster into its nearest neighbour.
        double best = std::numeric_limits<double>::infinity();
        std::size_t partner = c;
        for (std::size_t o = 0; o < clusters.size(); ++o) {
          if (o == c) continue;
          const double d = cluster_distance(out.eigenvalues, clusters[c], clusters[o]);
          if (d < best) best = d, partner = o;
        }
        if (partner == c || best > far) {
          throw Error(ErrorKind::PairingFailure, "left/right eigenvalue counts disagree");
        }
        merge_clusters(clusters, c, partner);
        restart = true;
      }
    }
    if (restart) continue;

    sigma.assign(clusters.size(), 0.0);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const Matrix rc = gather_columns(out.right, clusters[c]);
      const Matrix lc = gather_columns(left_kets, assigned[c]);
      sigma[c] = smallest_singular_value(lc.adjoint() * rc);
      if (sigma[c] < tol.defective) {
        throw Error(ErrorKind::DefectiveMatrix,
                    "biorthogonal overlap " + short_number(sigma[c]) + " below " +
                        short_number(tol.defective) + " near eigenvalue " +
                        short_number(out.eigenvalues(clusters[c].front()).real()));
      }
    }
    // Eigenvalues closer than their own condition-number uncertainty are
    // numerically one eigenvalue and must be handled as a block.
    for (std::size_t a = 0; a < clusters.size() && !restart; ++a) {
      for (std::size_t b = a + 1; b < clusters.size() && !restart; ++b) {
        const double unc = kUncertaintyFactor * kEps * hnorm * (1.0 / sigma[a] + 1.0 / sigma[b]);
        if (cluster_distance(out.eigenvalues, clusters[a], clusters[b]) <= unc) {
          merge_clusters(clusters, a, b);
          restart = true;
        }
      }
    }
    if (!restart) break;
  }

  // The adjoint problem certifies the pairing; the left rows themselves come
  // from inverting the right basis, which stays accurate for close but
  // distinct levels where separately computed left vectors mix.
  out.left = out.right.fullPivLu().inverse();
  out.biorth_residual = (out.left * out.right - Matrix::Identity(n, n)).norm();
  return out;
}

std::vector<Cluster> cluster_degeneracies(const BiorthogonalEigensystem& eig, double tol_cluster) {
  if (!(tol_cluster > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "cluster tolerance must be positive");
  }
  return single_linkage(eig.eigenvalues, tol_cluster);
}

bool is_real_level(Complex eps, const SpectralTolerances& tol) {
  return std::abs(eps.imag()) <= tol.real * tol.scale;
}

BiorthogonalEigensystem resolve_degenerate_subspace(const BiorthogonalEigensystem& eig,
                                                    const Cluster& cluster,
                                                    const DenseOperator& zeta,
                                                    const SpectralTolerances& tol) {
  BiorthogonalEigensystem out = eig;
  if (cluster.size() < 2) return out;
  for (int n : cluster) {
    if (!is_real_level(eig.eigenvalues(n), tol)) {
      throw Error(ErrorKind::ComplexEigenvalue,
                  "cluster level " + std::to_string(n) + " is not real");
    }
  }
  const auto k = static_cast<Eigen::Index>(cluster.size());
  const Matrix rc = gather_columns(eig.right, cluster);
  Matrix lc(k, eig.left.cols());
  for (Eigen::Index i = 0; i < k; ++i) lc.row(i) = eig.left.row(cluster[i]);

  Matrix gram = rc.adjoint() * zeta.matrix() * rc;
  gram = 0.5 * (gram + gram.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
  const Eigen::VectorXd d = solver.eigenvalues();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.cwiseAbs().minCoeff() > tol.defective * std::max(dmax, 1e-300))) {
    throw Error(ErrorKind::GramSingular, "cluster Gram matrix is singular");
  }
  // Descending order: positive-norm directions first.
  Matrix v = solver.eigenvectors().rowwise().reverse();
  const Matrix new_right = rc * v;
  const Matrix new_left = v.adjoint() * lc;
  Vector diag_eps(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Complex acc = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) acc += std::norm(v(j, i)) * eig.eigenvalues(cluster[j]);
    diag_eps(i) = acc;
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const int n = cluster[i];
    out.right.col(n) = new_right.col(i);
    out.left.row(n) = new_left.row(i);
    out.eigenvalues(n) = diag_eps(i);
    const double norm = out.right.col(n).norm();
    const Complex phase = phase_of_largest(out.right.col(n));
    out.right.col(n) *= phase / norm;
    out.left.row(n) *= norm / phase;
  }
  const int dim = out.size();
  out.biorth_residual = (out.left * out.right - Matrix::Identity(dim, dim)).norm();
  return out;
}

double metric_expectation(const BiorthogonalEigensystem& eig, int level, const DenseOperator& zeta) {
  const auto r = eig.right.col(level);
  const Complex c = r.dot(zeta.matrix() * r);
  return c.real() / r.squaredNorm();
}

LevelIndex topological_index(const BiorthogonalEigensystem& eig, int level,
                             const MetricDescriptor& metric, const SpectralTolerances& tol) {
  if (level < 0 || level >= eig.size()) {
    throw Error(ErrorKind::InvalidArgument, "level out of range");
  }
  const Complex eps = eig.eigenvalues(level);
  if (!is_real_level(eps, tol)) {
    throw Error(ErrorKind::ComplexEigenvalue,
                "level " + std::to_string(level) + " has Im eps = " + short_number(eps.imag()));
  }
  const double expectation = metric_expectation(eig, level, metric.op);
  const double quality = std::abs(expectation);
  if (!(quality > tol.quality)) {
    throw Error(ErrorKind::NearException,
                "quality " + short_number(quality) + " of level " + std::to_string(level) +
                    " at or below " + short_number(tol.quality));
  }
  return {metric.label, expectation > 0.0 ? 1 : -1, quality};
}

MetricIndexing index_levels(const BiorthogonalEigensystem& eig, const MetricDescriptor& metric,
                            const SpectralTolerances& tol) {
  MetricIndexing out{metric.label, eig, std::vector<std::optional<LevelIndex>>(eig.size())};
  std::vector<bool> blocked(eig.size(), false);
  for (const auto& cluster : cluster_degeneracies(eig, tol.cluster)) {
    if (cluster.size() < 2) continue;
    const bool all_real = std::all_of(cluster.begin(), cluster.end(), [&](int n) {
      return is_real_level(eig.eigenvalues(n), tol);
    });
    if (!all_real) continue;
    try {
      out.resolved = resolve_degenerate_subspace(out.resolved, cluster, metric.op, tol);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GramSingular) throw;
      for (int n : cluster) blocked[n] = true;
    }
  }
  for (int n = 0; n < eig.size(); ++n) {
    if (blocked[n] || !is_real_level(out.resolved.eigenvalues(n), tol)) continue;
    const double expectation = metric_expectation(out.resolved, n, metric.op);
    if (std::abs(expectation) > tol.quality) {
      out.indices[n] = LevelIndex{metric.label, expectation > 0.0 ? 1 : -1, std::abs(expectation)};
    }
  }
  return out;
}

BiorthogonalEigensystem metric_gauge(const BiorthogonalEigensystem& eig, const DenseOperator& zeta,
                                     const SpectralTolerances& tol) {
  BiorthogonalEigensystem out = eig;
  for (int n = 0; n < eig.size(); ++n) {
    if (!is_real_level(eig.eigenvalues(n), tol)) continue;
    const auto r = eig.right.col(n);
    const double c = r.dot(zeta.matrix() * r).real();
    if (!(std::abs(c) > tol.quality * r.squaredNorm())) continue;
    const double alpha = 1.0 / std::sqrt(std::abs(c));
    out.right.col(n) *= alpha;
    out.left.row(n) /= alpha;
  }
  return out;
}

}  // namespace pseudospec
