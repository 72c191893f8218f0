#include "pseudospec/operators.hpp"

#include <bit>
#include <cmath>

#include "pseudospec/errors.hpp"

namespace pseudospec {

namespace {

constexpr double kRcondThreshold = 1e-12;

bool all_finite(const Matrix& m) {
  return m.array().real().allFinite() && m.array().imag().allFinite();
}

bool is_power_of_two(Eigen::Index n) {
  return n > 0 && std::has_single_bit(static_cast<std::uint64_t>(n));
}

void require_sites(int n_sites) {
  if (n_sites < 1 || n_sites > 12) {
    throw Error(ErrorKind::InvalidArgument,
                "n_sites must lie in [1, 12], got " + std::to_string(n_sites));
  }
}

}  // namespace

PauliString::PauliString(Complex c, std::vector<Pauli> l)
    : coefficient(c), letters(std::move(l)) {
  if (!std::isfinite(coefficient.real()) || !std::isfinite(coefficient.imag())) {
    throw Error(ErrorKind::InvalidArgument, "Pauli string coefficient is not finite");
  }
  if (letters.empty()) {
    throw Error(ErrorKind::InvalidArgument, "Pauli string needs at least one site");
  }
}

PauliString PauliString::parse(std::string_view text, Complex coefficient) {
  std::vector<Pauli> letters;
  letters.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case 'I': letters.push_back(Pauli::I); break;
      case 'X': letters.push_back(Pauli::X); break;
      case 'Y': letters.push_back(Pauli::Y); break;
      case 'Z': letters.push_back(Pauli::Z); break;
      default:
        throw Error(ErrorKind::InvalidArgument,
                    "unknown Pauli letter '" + std::string(1, ch) + "'");
    }
  }
  return PauliString(coefficient, std::move(letters));
}

std::string PauliString::to_string() const {
  static constexpr char kNames[] = {'I', 'X', 'Y', 'Z'};
  std::string out;
  out.reserve(letters.size());
  for (Pauli p : letters) out.push_back(kNames[static_cast<int>(p)]);
  return out;
}

OperatorExpr::OperatorExpr(std::vector<PauliString> terms) {
  for (auto& t : terms) add(std::move(t));
}

OperatorExpr& OperatorExpr::add(PauliString term) {
  if (!terms_.empty() && term.n_sites() != terms_.front().n_sites()) {
    throw Error(ErrorKind::SiteCountMismatch,
                "term " + term.to_string() + " has " + std::to_string(term.n_sites()) +
                    " sites, expression has " + std::to_string(terms_.front().n_sites()));
  }
  terms_.push_back(std::move(term));
  return *this;
}

int OperatorExpr::n_sites() const noexcept {
  return terms_.empty() ? 0 : terms_.front().n_sites();
}

OperatorExpr operator+(OperatorExpr lhs, const OperatorExpr& rhs) {
  for (const auto& t : rhs.terms_) lhs.add(t);
  return lhs;
}

OperatorExpr operator*(Complex scale, OperatorExpr expr) {
  for (auto& t : expr.terms_) t.coefficient *= scale;
  return expr;
}

DenseOperator::DenseOperator(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || !is_power_of_two(entries_.rows())) {
    throw Error(ErrorKind::InvalidArgument,
                "dense operator must be square with power-of-two dimension");
  }
  if (!all_finite(entries_)) {
    throw Error(ErrorKind::InvalidArgument, "dense operator has non-finite entries");
  }
}

DenseOperator DenseOperator::identity(int n_sites) {
  require_sites(n_sites);
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  return DenseOperator(Matrix::Identity(dim, dim));
}

int DenseOperator::n_sites() const noexcept {
  return std::countr_zero(static_cast<std::uint64_t>(entries_.rows()));
}

DenseOperator DenseOperator::adjoint() const { return DenseOperator(entries_.adjoint()); }

bool DenseOperator::is_hermitian(double tol) const {
  const double scale = std::max(1.0, entries_.norm());
  return (entries_ - entries_.adjoint()).norm() <= tol * scale;
}

DenseOperator operator*(const DenseOperator& a, const DenseOperator& b) {
  return DenseOperator(a.entries_ * b.entries_);
}
DenseOperator operator+(const DenseOperator& a, const DenseOperator& b) {
  return DenseOperator(a.entries_ + b.entries_);
}
DenseOperator operator-(const DenseOperator& a, const DenseOperator& b) {
  return DenseOperator(a.entries_ - b.entries_);
}
DenseOperator operator*(Complex s, const DenseOperator& a) {
  return DenseOperator(s * a.entries_);
}

DenseOperator to_dense(const OperatorExpr& expr, int n_sites) {
  require_sites(n_sites);
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  Matrix m = Matrix::Zero(dim, dim);
  const Complex i_unit(0.0, 1.0);
  for (const auto& term : expr.terms()) {
    if (term.n_sites() != n_sites) {
      throw Error(ErrorKind::SiteCountMismatch,
                  "term " + term.to_string() + " has " + std::to_string(term.n_sites()) +
                      " sites, expected " + std::to_string(n_sites));
    }
    // Each Pauli string maps a basis state |b> to phase * |b ^ flips>.
    std::uint64_t flips = 0;
    for (int j = 0; j < n_sites; ++j) {
      const Pauli p = term.letters[j];
      if (p == Pauli::X || p == Pauli::Y) flips |= std::uint64_t{1} << (n_sites - 1 - j);
    }
    for (Eigen::Index col = 0; col < dim; ++col) {
      Complex phase = term.coefficient;
      for (int j = 0; j < n_sites; ++j) {
        const bool bit = (static_cast<std::uint64_t>(col) >> (n_sites - 1 - j)) & 1U;
        switch (term.letters[j]) {
          case Pauli::Z: if (bit) phase = -phase; break;
          case Pauli::Y: phase *= bit ? -i_unit : i_unit; break;
          default: break;
        }
      }
      const auto row = static_cast<Eigen::Index>(static_cast<std::uint64_t>(col) ^ flips);
      m(row, col) += phase;
    }
  }
  return DenseOperator(std::move(m));
}

DenseOperator parity_operator(int n_sites) {
  require_sites(n_sites);
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  Matrix m = Matrix::Zero(dim, dim);
  for (Eigen::Index col = 0; col < dim; ++col) {
    std::uint64_t mirrored = 0;
    for (int j = 0; j < n_sites; ++j) {
      if ((static_cast<std::uint64_t>(col) >> j) & 1U) {
        mirrored |= std::uint64_t{1} << (n_sites - 1 - j);
      }
    }
    m(static_cast<Eigen::Index>(mirrored), col) = 1.0;
  }
  return DenseOperator(std::move(m));
}

DenseOperator u_operator(int n_sites) {
  require_sites(n_sites);
  return to_dense(OperatorExpr({PauliString::parse(std::string(n_sites, 'X'))}), n_sites);
}

double pseudo_hermiticity_residual(const DenseOperator& h, const DenseOperator& zeta) {
  if (h.dim() != zeta.dim()) {
    throw Error(ErrorKind::InvalidArgument, "metric and Hamiltonian dimensions differ");
  }
  if (!zeta.is_hermitian(1e-12)) {
    throw Error(ErrorKind::InvalidArgument, "pseudo-metric is not Hermitian");
  }
  Eigen::JacobiSVD<Matrix> svd(zeta.matrix());
  const auto& sv = svd.singularValues();
  const double rcond = sv(sv.size() - 1) / sv(0);
  if (!(rcond >= kRcondThreshold)) {
    throw Error(ErrorKind::SingularMetric,
                "reciprocal condition estimate " + short_number(rcond) + " below 1e-12");
  }
  const Matrix conjugated = zeta.matrix() * h.matrix() * zeta.matrix().fullPivLu().inverse();
  const Matrix hdag = h.matrix().adjoint();
  const double denom = conjugated.norm() + hdag.norm();
  if (denom == 0.0) return 0.0;
  return (conjugated - hdag).norm() / denom;
}

double commutator_norm(const DenseOperator& a, const DenseOperator& b) {
  return (a.matrix() * b.matrix() - b.matrix() * a.matrix()).norm();
}

}  // namespace pseudospec
