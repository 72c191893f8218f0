#include "pseudospec/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "parallel.hpp"
#include "pseudospec/errors.hpp"

namespace pseudospec {

namespace {

// Smallest acceptable singular value of the rebasis matrix when a degenerate
// cluster is aligned with a neighbouring point.
constexpr double kAlignmentFloor = 1e-3;

std::vector<int> cluster_of_levels(const BiorthogonalEigensystem& eig, double tol_cluster) {
  std::vector<int> owner(eig.size(), -1);
  int id = 0;
  for (const auto& c : cluster_degeneracies(eig, tol_cluster)) {
    for (int n : c) owner[n] = id;
    ++id;
  }
  return owner;
}

BiorthogonalEigensystem eigenvalues_only(const DenseOperator& h) {
  Eigen::ComplexEigenSolver<Matrix> solver(h.matrix(), false);
  BiorthogonalEigensystem out;
  const Vector ev = solver.eigenvalues();
  std::vector<int> order(ev.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (ev(a).real() != ev(b).real()) return ev(a).real() < ev(b).real();
    return ev(a).imag() < ev(b).imag();
  });
  out.eigenvalues.resize(ev.size());
  for (std::size_t k = 0; k < order.size(); ++k) out.eigenvalues(k) = ev(order[k]);
  return out;
}

// Weight matrix T(n, m) = <L_a,n|R_b,m><L_b,m|R_a,n>.
Eigen::MatrixXd transfer_weights(const BiorthogonalEigensystem& a, const BiorthogonalEigensystem& b) {
  const Matrix ab = a.left * b.right;
  const Matrix ba = b.left * a.right;
  return ab.cwiseProduct(ba.transpose()).cwiseAbs();
}

LevelAssignment assign_by_proximity(const Vector& prev, const Vector& next) {
  const int n = static_cast<int>(prev.size());
  struct Candidate {
    double distance;
    int p, q;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(n) * n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) cands.push_back({std::abs(prev(p) - next(q)), p, q});
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    return std::pair(x.p, x.q) < std::pair(y.p, y.q);
  });
  LevelAssignment out{std::vector<int>(n, -1), std::vector<bool>(n, false)};
  std::vector<bool> taken(n, false);
  for (const auto& c : cands) {
    if (out.next_of_prev[c.p] >= 0 || taken[c.q]) continue;
    out.next_of_prev[c.p] = c.q;
    taken[c.q] = true;
  }
  return out;
}

// Replaces the basis of a degenerate cluster by the projections of the
// neighbouring point's levels that carry most of the cluster's weight.
bool align_cluster(BiorthogonalEigensystem& eig, const Cluster& cluster,
                   const BiorthogonalEigensystem& ref) {
  const auto k = static_cast<Eigen::Index>(cluster.size());
  const Eigen::Index dim = eig.right.rows();
  Matrix rc(dim, k), lc(k, dim);
  for (Eigen::Index i = 0; i < k; ++i) {
    rc.col(i) = eig.right.col(cluster[i]);
    lc.row(i) = eig.left.row(cluster[i]);
  }
  const Matrix coeff_all = lc * ref.right;     // <L_n|R_ref,m>
  const Matrix back = ref.left * rc;           // <L_ref,m|R_n>
  std::vector<std::pair<double, int>> weight;
  for (Eigen::Index m = 0; m < ref.right.cols(); ++m) {
    Complex w = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) w += coeff_all(i, m) * back(m, i);
    weight.emplace_back(std::abs(w), static_cast<int>(m));
  }
  std::stable_sort(weight.begin(), weight.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> chosen;
  for (Eigen::Index i = 0; i < k; ++i) chosen.push_back(weight[i].second);
  std::sort(chosen.begin(), chosen.end());  // ref storage order is energy order

  Matrix coeff(k, k);
  for (Eigen::Index i = 0; i < k; ++i) coeff.col(i) = coeff_all.col(chosen[i]);
  Matrix new_right = rc * coeff;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double norm = new_right.col(i).norm();
    if (!(norm > 0.0)) return false;
    coeff.col(i) /= norm;
    new_right.col(i) /= norm;
  }
  Eigen::JacobiSVD<Matrix> svd(new_right);
  if (!(svd.singularValues()(k - 1) > kAlignmentFloor * svd.singularValues()(0))) return false;
  const Matrix inv = coeff.fullPivLu().inverse();
  const Matrix new_left = inv * lc;
  Vector lambda(k);
  for (Eigen::Index i = 0; i < k; ++i) lambda(i) = eig.eigenvalues(cluster[i]);
  const Matrix projected = inv * lambda.asDiagonal() * coeff;
  for (Eigen::Index i = 0; i < k; ++i) {
    const int n = cluster[i];
    eig.right.col(n) = new_right.col(i);
    eig.left.row(n) = new_left.row(i);
    eig.eigenvalues(n) = projected(i, i);
  }
  canonicalize_phases(eig);
  return true;
}

struct PointWork {
  SweepPoint point;
  std::vector<Cluster> degenerate;
  std::vector<bool> aligned;
};

}  // namespace

void SweepPlan::validate() const {
  if (j_tilde_grid.size() < 2) throw Error(ErrorKind::InvalidArgument, "J~ grid needs at least 2 points");
  for (std::size_t k = 0; k < j_tilde_grid.size(); ++k) {
    const double j = j_tilde_grid[k];
    if (!(j >= 0.0 && j < 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "J~ grid value " + format_real(j) + " outside [0, 1)");
    }
    if (k > 0 && !(j > j_tilde_grid[k - 1])) {
      throw Error(ErrorKind::InvalidArgument, "J~ grid must be strictly increasing");
    }
  }
  if (gamma_tilde_values.empty()) throw Error(ErrorKind::InvalidArgument, "no gamma~ values");
  for (double g : gamma_tilde_values) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw Error(ErrorKind::InvalidArgument, "gamma~ values must be finite and >= 0");
    }
  }
  if (n_sites < 2 || n_sites % 2 != 0) {
    throw Error(ErrorKind::OddChain, "staggered sweeps need an even n_sites >= 2");
  }
}

std::vector<double> linear_grid(double first, double last, int points) {
  if (points < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 points");
  std::vector<double> out(points);
  for (int k = 0; k < points; ++k) {
    out[k] = first + (last - first) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  out.back() = last;
  return out;
}

LevelAssignment assign_levels(const BiorthogonalEigensystem& prev,
                              const BiorthogonalEigensystem& next, double tol_cluster) {
  const int n = prev.size();
  if (next.size() != n) throw Error(ErrorKind::InvalidArgument, "eigensystems differ in size");
  if (prev.right.size() == 0 || next.right.size() == 0) {
    return assign_by_proximity(prev.eigenvalues, next.eigenvalues);
  }
  const Eigen::MatrixXd t = transfer_weights(prev, next);
  struct Candidate {
    double quantized, distance;
    int p, q;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(n) * n);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      cands.push_back({std::floor(t(p, q) * 1e9), std::abs(prev.eigenvalues(p) - next.eigenvalues(q)), p, q});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.quantized != y.quantized) return x.quantized > y.quantized;
    if (x.distance != y.distance) return x.distance < y.distance;
    return std::pair(x.p, x.q) < std::pair(y.p, y.q);
  });
  LevelAssignment out{std::vector<int>(n, -1), std::vector<bool>(n, false)};
  std::vector<bool> taken(n, false);
  for (const auto& c : cands) {
    if (out.next_of_prev[c.p] >= 0 || taken[c.q]) continue;
    out.next_of_prev[c.p] = c.q;
    taken[c.q] = true;
  }
  const auto prev_cluster = cluster_of_levels(prev, tol_cluster);
  const auto next_cluster = cluster_of_levels(next, tol_cluster);
  std::vector<int> prev_size(n, 0);
  for (int c : prev_cluster) ++prev_size[c];
  for (int p = 0; p < n; ++p) {
    if (prev_size[prev_cluster[p]] > 1) continue;
    const int q = out.next_of_prev[p];
    double rival = 0.0;
    for (int m = 0; m < n; ++m) {
      if (next_cluster[m] != next_cluster[q]) rival = std::max(rival, t(p, m));
    }
    out.ambiguous[p] = rival > 0.5 * t(p, q);
  }
  return out;
}

std::vector<int> track_levels(const BiorthogonalEigensystem& prev,
                              const BiorthogonalEigensystem& next, double tol_cluster) {
  auto a = assign_levels(prev, next, tol_cluster);
  for (std::size_t p = 0; p < a.ambiguous.size(); ++p) {
    if (a.ambiguous[p]) {
      throw Error(ErrorKind::AmbiguousTracking,
                  "level " + std::to_string(p) + " has a competing overlap above half its best");
    }
  }
  return a.next_of_prev;
}

SweepBlock sweep_family(const ParameterFamily& family, const std::vector<double>& grid,
                        double gamma_tilde, const SpectralTolerances& tol, int threads) {
  if (grid.size() < 2) throw Error(ErrorKind::InvalidArgument, "sweep grid needs at least 2 points");
  const std::size_t npts = grid.size();
  std::vector<PointWork> work(npts);
  detail::parallel_for(npts, threads, [&](std::size_t k) {
    auto& w = work[k];
    w.point.j_tilde = grid[k];
    const auto h = family.hamiltonian({grid[k], gamma_tilde});
    try {
      w.point.eig = biorthogonal_eig(h, tol);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DefectiveMatrix && e.kind() != ErrorKind::PairingFailure) throw;
      w.point.defective = true;
      w.point.eig = eigenvalues_only(h);
      return;
    }
    for (auto& c : cluster_degeneracies(w.point.eig, tol.cluster)) {
      if (c.size() > 1) w.degenerate.push_back(std::move(c));
    }
    w.aligned.assign(w.degenerate.size(), false);
  });

  // Degenerate clusters take their basis from the next point when it resolves
  // the same levels, otherwise from the already aligned previous point.
  for (std::size_t k = 0; k < npts; ++k) {
    auto& w = work[k];
    for (std::size_t c = 0; c < w.degenerate.size(); ++c) {
      for (int side : {+1, -1}) {
        if ((side < 0 && k == 0) || (side > 0 && k + 1 == npts)) continue;
        const auto& ref = work[k + side];
        if (ref.point.defective) continue;
        if (side > 0 && !ref.degenerate.empty()) {
          // Accept only if none of the levels near the cluster are degenerate.
          const Complex centre = w.point.eig.eigenvalues(w.degenerate[c].front());
          bool overlapping = false;
          for (const auto& rc : ref.degenerate) {
            for (int n : rc) {
              if (std::abs(ref.point.eig.eigenvalues(n) - centre) < 1e-2) overlapping = true;
            }
          }
          if (overlapping) continue;
        }
        if (align_cluster(w.point.eig, w.degenerate[c], ref.point.eig)) {
          w.aligned[c] = true;
          break;
        }
      }
    }
  }

  SweepBlock block;
  block.gamma_tilde = gamma_tilde;
  block.metrics = family.metric_labels();
  const int nlev = work.front().point.eig.size();
  const std::size_t nmet = family.metrics().size();

  // Per-point indices, in storage order.
  std::vector<std::vector<std::vector<std::optional<LevelIndex>>>> indices(npts);
  detail::parallel_for(npts, threads, [&](std::size_t k) {
    auto& w = work[k];
    indices[k].assign(nmet, std::vector<std::optional<LevelIndex>>(nlev));
    if (w.point.defective) return;
    std::vector<int> unaligned_owner(nlev, -1);
    for (std::size_t c = 0; c < w.degenerate.size(); ++c) {
      if (!w.aligned[c])
        for (int n : w.degenerate[c]) unaligned_owner[n] = static_cast<int>(c);
    }
    for (std::size_t m = 0; m < nmet; ++m) {
      const auto& metric = family.metrics()[m];
      std::optional<MetricIndexing> gram;
      for (int n = 0; n < nlev; ++n) {
        if (!is_real_level(w.point.eig.eigenvalues(n), tol)) continue;
        if (unaligned_owner[n] >= 0) {
          if (!gram) gram = index_levels(w.point.eig, metric, tol);
          indices[k][m][n] = gram->indices[n];
          continue;
        }
        const double e = metric_expectation(w.point.eig, n, metric.op);
        if (std::abs(e) > tol.quality) indices[k][m][n] = LevelIndex{metric.label, e > 0 ? 1 : -1, std::abs(e)};
      }
    }
  });

  // Stitch bands in grid order.
  std::vector<int> level(nlev);
  std::iota(level.begin(), level.end(), 0);
  block.bands.resize(nlev);
  for (int b = 0; b < nlev; ++b) {
    block.bands[b].band_id = b;
    block.bands[b].samples.reserve(npts);
  }
  for (std::size_t k = 0; k < npts; ++k) {
    std::vector<bool> ambiguous(nlev, false);
    if (k > 0) {
      const auto a = assign_levels(work[k - 1].point.eig, work[k].point.eig, tol.cluster);
      std::vector<int> next_level(nlev);
      bool any = false;
      for (int b = 0; b < nlev; ++b) {
        next_level[b] = a.next_of_prev[level[b]];
        ambiguous[b] = a.ambiguous[level[b]];
        any = any || ambiguous[b];
      }
      level = next_level;
      if (any) block.ambiguous_steps.push_back(static_cast<int>(k));
    }
    work[k].point.level_of_band = level;
    for (int b = 0; b < nlev; ++b) {
      BandSample s;
      s.j_tilde = grid[k];
      s.eps_tilde = work[k].point.eig.eigenvalues(level[b]);
      s.defective = work[k].point.defective;
      s.ambiguous = ambiguous[b];
      s.indices.resize(nmet);
      for (std::size_t m = 0; m < nmet; ++m) s.indices[m] = indices[k][m][level[b]];
      block.bands[b].samples.push_back(std::move(s));
    }
  }
  block.points.reserve(npts);
  for (auto& w : work) block.points.push_back(std::move(w.point));
  return block;
}

std::vector<SweepBlock> run_sweep(const SweepPlan& plan, const SpectralTolerances& tol, int threads) {
  plan.validate();
  const auto family = chain_family(plan.arrangement, plan.n_sites, plan.mixed_split);
  std::vector<SweepBlock> out;
  out.reserve(plan.gamma_tilde_values.size());
  for (double g : plan.gamma_tilde_values) {
    out.push_back(sweep_family(family, plan.j_tilde_grid, g, tol, threads));
  }
  return out;
}

std::string format_real(double value) {
  if (value == 0.0) value = 0.0;  // drops the sign of -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_sweep_csv(const std::vector<SweepBlock>& blocks, std::ostream& out,
                     const SpectralTolerances& tol) {
  if (blocks.empty() || blocks.front().bands.empty()) {
    throw Error(ErrorKind::InvalidArgument, "no bands to export");
  }
  const auto& labels = blocks.front().metrics;
  out << "gamma_tilde,j_tilde,band_id,re_eps_tilde,im_eps_tilde";
  for (auto l : labels) out << ",index_" << to_string(l) << ",quality_" << to_string(l);
  out << '\n';
  for (const auto& block : blocks) {
    if (block.metrics != labels) throw Error(ErrorKind::InvalidArgument, "blocks use different catalogs");
    const std::size_t npts = block.bands.front().samples.size();
    for (std::size_t k = 0; k < npts; ++k) {
      for (const auto& band : block.bands) {
        const auto& s = band.samples[k];
        const double im = is_real_level(s.eps_tilde, tol) ? 0.0 : s.eps_tilde.imag();
        out << format_real(block.gamma_tilde) << ',' << format_real(s.j_tilde) << ',' << band.band_id << ','
            << format_real(s.eps_tilde.real()) << ',' << format_real(im);
        for (const auto& idx : s.indices) {
          if (idx) {
            out << ',' << idx->value << ',' << format_real(idx->quality);
          } else {
            out << ",,";
          }
        }
        out << '\n';
      }
    }
  }
}

void export_sweep(const std::vector<SweepBlock>& blocks, const std::string& path,
                  const SpectralTolerances& tol) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  write_sweep_csv(blocks, file, tol);
  file.flush();
  if (!file) throw Error(ErrorKind::IoError, "write to " + path + " failed");
}

}  // namespace pseudospec
