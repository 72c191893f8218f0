#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pseudospec {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

enum class Pauli : std::uint8_t { I, X, Y, Z };

// A coefficient times a tensor product of single-site Pauli matrices. Site 1
// (letters[0]) is the most significant tensor factor.
struct PauliString {
  Complex coefficient{1.0, 0.0};
  std::vector<Pauli> letters;

  PauliString() = default;
  PauliString(Complex coefficient, std::vector<Pauli> letters);

  // "XIZ" -> X on site 1, identity on site 2, Z on site 3.
  static PauliString parse(std::string_view letters, Complex coefficient = 1.0);

  int n_sites() const noexcept { return static_cast<int>(letters.size()); }
  std::string to_string() const;
};

class OperatorExpr {
 public:
  OperatorExpr() = default;
  explicit OperatorExpr(std::vector<PauliString> terms);

  OperatorExpr& add(PauliString term);
  const std::vector<PauliString>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }
  // Site count shared by all terms, 0 when empty.
  int n_sites() const noexcept;

  friend OperatorExpr operator+(OperatorExpr lhs, const OperatorExpr& rhs);
  friend OperatorExpr operator*(Complex scale, OperatorExpr expr);

 private:
  std::vector<PauliString> terms_;
};

// Dense 2^N x 2^N complex matrix with finite entries.
class DenseOperator {
 public:
  explicit DenseOperator(Matrix entries);

  static DenseOperator identity(int n_sites);

  Eigen::Index dim() const noexcept { return entries_.rows(); }
  int n_sites() const noexcept;
  const Matrix& matrix() const noexcept { return entries_; }

  DenseOperator adjoint() const;
  double frobenius_norm() const { return entries_.norm(); }
  bool is_hermitian(double tol = 1e-12) const;

  friend DenseOperator operator*(const DenseOperator& a, const DenseOperator& b);
  friend DenseOperator operator+(const DenseOperator& a, const DenseOperator& b);
  friend DenseOperator operator-(const DenseOperator& a, const DenseOperator& b);
  friend DenseOperator operator*(Complex s, const DenseOperator& a);

 private:
  Matrix entries_;
};

DenseOperator to_dense(const OperatorExpr& expr, int n_sites);

// Mirror flip of the chain: site j <-> site N+1-j.
DenseOperator parity_operator(int n_sites);

// Product of sigma^x over all sites.
DenseOperator u_operator(int n_sites);

// ||zeta h zeta^-1 - h^dag||_F / (||zeta h zeta^-1||_F + ||h^dag||_F), zero for
// the zero matrix. For unitary zeta the denominator is 2 ||h||_F.
double pseudo_hermiticity_residual(const DenseOperator& h, const DenseOperator& zeta);

double commutator_norm(const DenseOperator& a, const DenseOperator& b);

}  // namespace pseudospec
