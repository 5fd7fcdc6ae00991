#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "hyperinf/errors.hpp"

namespace hyperinf {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles. Immutable from the outside unless a
// mutable reference is held; all library operations return new matrices.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  // Zero-filled rows x cols matrix. Both dimensions must be positive.
  DenseMatrix(std::size_t rows, std::size_t cols);

  // Takes ownership of `data` (row-major). Rejects wrong lengths and
  // non-finite entries.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  // Skips the finiteness check; used for iterates that may legitimately
  // overflow while an iteration diverges.
  static DenseMatrix from_unchecked(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix scaled_identity(std::size_t n, double scale);
  static DenseMatrix diagonal(std::span<const double> values);
  // Single column built from a vector.
  static DenseMatrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vector col(std::size_t j) const;

  bool all_finite() const noexcept;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Square matrix symmetrized on construction: A <- (A + A^T) / 2.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(DenseMatrix a);

  const DenseMatrix& matrix() const noexcept { return inner_; }
  std::size_t dim() const noexcept { return inner_.rows(); }

 private:
  DenseMatrix inner_;
};

// Products. Each output entry accumulates over the inner index in a fixed
// blocked order, so repeated calls are bit-identical on one platform.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);  // a^T b
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);  // a b^T
Vector matvec(const DenseMatrix& a, std::span<const double> x);

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
DenseMatrix add_scaled_identity(const DenseMatrix& a, double s);
// Kronecker product I_r (x) a.
DenseMatrix kron_identity(std::size_t r, const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);
double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b);
double norm1(const DenseMatrix& a);     // max column abs sum
double norm_inf(const DenseMatrix& a);  // max row abs sum
double max_abs(const DenseMatrix& a);
// ||I - a||_F for square a.
double identity_residual(const DenseMatrix& a);
double symmetry_defect(const DenseMatrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Partial-pivot LU factorization P A = L U, stored in place.
class LuFactorization {
 public:
  // Throws SingularMatrixError when a pivot falls below n * eps * max|A|.
  explicit LuFactorization(const DenseMatrix& a);

  std::size_t dim() const noexcept { return lu_.rows(); }
  Vector solve(std::span<const double> b) const;
  DenseMatrix solve(const DenseMatrix& b) const;
  DenseMatrix inverse() const;

 private:
  DenseMatrix lu_;
  std::vector<std::size_t> perm_;  // row i of P A is row perm_[i] of A
};

DenseMatrix gaussian_inverse(const DenseMatrix& a);

struct SolveResult {
  Vector x;
  double residual = 0.0;  // ||b - A x||_2 / ||b||_2 of the returned x
  std::size_t iterations = 0;
  bool converged = false;
  // CG: relative residual after every iteration. GMRES: true relative
  // residual at the end of every restart cycle.
  std::vector<double> history;
};

SolveResult cg_solve(const SpdMatrix& a, std::span<const double> b, std::size_t max_iters, double tol);
SolveResult gmres_solve(const DenseMatrix& a, std::span<const double> b, std::size_t restart,
                        std::size_t max_iters, double tol);

// Many right-hand sides at once: each column of `rhs` is an independent
// system with its own scalars; only the matrix products are shared.
struct MultiSolveResult {
  DenseMatrix x;
  std::vector<double> residuals;  // per column, relative
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> history;  // max relative residual across columns
};

MultiSolveResult cg_solve_columns(const SpdMatrix& a, const DenseMatrix& rhs, std::size_t max_iters,
                                  double tol);
MultiSolveResult gmres_solve_columns(const DenseMatrix& a, const DenseMatrix& rhs, std::size_t restart,
                                     std::size_t max_iters, double tol, std::size_t chunk = 512);

// Rayleigh-quotient estimate of the largest eigenvalue of a symmetric
// matrix by power iteration. The estimate is a lower bound.
double power_iteration_max_eigenvalue(const DenseMatrix& a, std::size_t iters, unsigned long long seed);

}  // namespace hyperinf
