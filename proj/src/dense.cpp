#include "hyperinf/dense.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace hyperinf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const DenseMatrix& a) { return ConstMap(a.data().data(), a.rows(), a.cols()); }
MutMap view(DenseMatrix& a) { return MutMap(a.data().data(), a.rows(), a.cols()); }

std::string dims(const DenseMatrix& a) { return std::to_string(a.rows()) + "x" + std::to_string(a.cols()); }

void require_positive(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " + dims(b));
}

void require_square(const DenseMatrix& a, const char* op) {
  if (!a.is_square()) throw ShapeError(std::string(op) + ": expected square matrix, got " + dims(a));
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  require_positive(rows, cols);
  data_.assign(rows * cols, 0.0);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive(rows, cols);
  if (data_.size() != rows * cols)
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  for (std::size_t k = 0; k < data_.size(); ++k)
    if (!std::isfinite(data_[k])) throw DataError("non-finite matrix entry at flat index " + std::to_string(k));
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  require_positive(rows_, cols_);
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  for (double v : data_)
    if (!std::isfinite(v)) throw DataError("non-finite matrix entry");
}

DenseMatrix DenseMatrix::from_unchecked(std::size_t rows, std::size_t cols, std::vector<double> data) {
  require_positive(rows, cols);
  if (data.size() != rows * cols) throw ShapeError("matrix data length mismatch");
  DenseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  return m;
}

DenseMatrix DenseMatrix::identity(std::size_t n) { return scaled_identity(n, 1.0); }

DenseMatrix DenseMatrix::scaled_identity(std::size_t n, double s) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = s;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> values) {
  DenseMatrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

DenseMatrix DenseMatrix::column(std::span<const double> values) {
  return DenseMatrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Vector DenseMatrix::col(std::size_t j) const {
  Vector out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

SpdMatrix::SpdMatrix(DenseMatrix a) : inner_(std::move(a)) {
  require_square(inner_, "SpdMatrix");
  const std::size_t n = inner_.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (inner_(i, j) + inner_(j, i));
      inner_(i, j) = s;
      inner_(j, i) = s;
    }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch " + dims(a) + " x " + dims(b));
  DenseMatrix c = DenseMatrix::from_unchecked(a.rows(), b.cols(), std::vector<double>(a.rows() * b.cols()));
  view(c).noalias() = view(a) * view(b);
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row mismatch " + dims(a) + " vs " + dims(b));
  DenseMatrix c = DenseMatrix::from_unchecked(a.cols(), b.cols(), std::vector<double>(a.cols() * b.cols()));
  view(c).noalias() = view(a).transpose() * view(b);
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column mismatch " + dims(a) + " vs " + dims(b));
  DenseMatrix c = DenseMatrix::from_unchecked(a.rows(), b.rows(), std::vector<double>(a.rows() * b.rows()));
  view(c).noalias() = view(a) * view(b).transpose();
  return c;
}

Vector matvec(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t = DenseMatrix::from_unchecked(a.cols(), a.rows(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t k = 0; k < cd.size(); ++k) cd[k] += bd[k];
  return c;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "subtract");
  DenseMatrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t k = 0; k < cd.size(); ++k) cd[k] -= bd[k];
  return c;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
  DenseMatrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

DenseMatrix add_scaled_identity(const DenseMatrix& a, double s) {
  require_square(a, "add_scaled_identity");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += s;
  return c;
}

DenseMatrix kron_identity(std::size_t r, const DenseMatrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  DenseMatrix k(r * m, r * n);
  for (std::size_t b = 0; b < r; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) k(b * m + i, b * n + j) = a(i, j);
  return k;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  return dot(a.data(), b.data());
}

double norm1(const DenseMatrix& a) {
  std::vector<double> colsum(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) colsum[j] += std::abs(a(i, j));
  return colsum.empty() ? 0.0 : *std::max_element(colsum.begin(), colsum.end());
}

double norm_inf(const DenseMatrix& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double identity_residual(const DenseMatrix& a) {
  require_square(a, "identity_residual");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double e = (i == j ? 1.0 : 0.0) - a(i, j);
      s += e * e;
    }
  return std::sqrt(s);
}

double symmetry_defect(const DenseMatrix& a) {
  require_square(a, "symmetry_defect");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
  return worst;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------------------
// LU

LuFactorization::LuFactorization(const DenseMatrix& a) : lu_(a) {
  require_square(a, "LuFactorization");
  const std::size_t n = a.rows();
  perm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
  const double threshold = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * max_abs(a);

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(lu_(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(lu_(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (!(best > threshold)) throw SingularMatrixError(k, best);
    if (p != k) {
      std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(p).begin());
      std::swap(perm_[k], perm_[p]);
    }
    const double pivot = lu_(k, k);
    const double* pivot_row = lu_.row(k).data();
    for (std::size_t i = k + 1; i < n; ++i) {
      double* ri = lu_.row(i).data();
      const double l = ri[k] / pivot;
      ri[k] = l;
      if (l == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) ri[j] -= l * pivot_row[j];
    }
  }
}

Vector LuFactorization::solve(std::span<const double> b) const {
  const std::size_t n = dim();
  if (b.size() != n) throw ShapeError("LU solve: right-hand side length mismatch");
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = lu_.row(i).data();
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * x[k];
    x[i] = s;
  }
  for (std::size_t i = n; i-- > 0;) {
    const double* ui = lu_.row(i).data();
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= ui[k] * x[k];
    x[i] = s / ui[i];
  }
  return x;
}

DenseMatrix LuFactorization::solve(const DenseMatrix& b) const {
  const std::size_t n = dim();
  if (b.rows() != n) throw ShapeError("LU solve: right-hand side rows mismatch");
  const std::size_t m = b.cols();
  DenseMatrix x(n, m);
  for (std::size_t i = 0; i < n; ++i) std::copy(b.row(perm_[i]).begin(), b.row(perm_[i]).end(), x.row(i).begin());
  // Row-oriented substitutions: each step is an axpy on a full row of x.
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = x.row(i).data();
    for (std::size_t k = 0; k < i; ++k) {
      const double l = lu_(i, k);
      if (l == 0.0) continue;
      const double* xk = x.row(k).data();
      for (std::size_t j = 0; j < m; ++j) xi[j] -= l * xk[j];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double* xi = x.row(i).data();
    for (std::size_t k = i + 1; k < n; ++k) {
      const double u = lu_(i, k);
      if (u == 0.0) continue;
      const double* xk = x.row(k).data();
      for (std::size_t j = 0; j < m; ++j) xi[j] -= u * xk[j];
    }
    const double d = lu_(i, i);
    for (std::size_t j = 0; j < m; ++j) xi[j] /= d;
  }
  return x;
}

DenseMatrix LuFactorization::inverse() const { return solve(DenseMatrix::identity(dim())); }

DenseMatrix gaussian_inverse(const DenseMatrix& a) { return LuFactorization(a).inverse(); }

// ---------------------------------------------------------------------------
// Krylov solvers over column blocks. Column reductions are accumulated row by
// row into per-column sums, so the order for column c is always rows 0..d-1.

namespace {

void column_dots(const DenseMatrix& a, const DenseMatrix& b, std::vector<double>& out) {
  const std::size_t k = a.cols();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    const double* bi = b.row(i).data();
    for (std::size_t c = 0; c < k; ++c) out[c] += ai[c] * bi[c];
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalBreakdown(std::string(what) + ": non-finite intermediate");
}

DenseMatrix residual_block(const DenseMatrix& a, const DenseMatrix& x, const DenseMatrix& rhs) {
  return subtract(rhs, matmul(a, x));
}

}  // namespace

MultiSolveResult cg_solve_columns(const SpdMatrix& spd, const DenseMatrix& rhs, std::size_t max_iters, double tol) {
  const DenseMatrix& a = spd.matrix();
  if (rhs.rows() != a.rows()) throw ShapeError("cg_solve: right-hand side rows mismatch");
  const std::size_t n = a.rows(), k = rhs.cols();

  DenseMatrix x(n, k);
  DenseMatrix r = rhs;
  DenseMatrix p = rhs;
  std::vector<double> bnorm(k), rr(k), pap(k), rr_new(k);
  column_dots(rhs, rhs, bnorm);
  for (double& v : bnorm) v = std::sqrt(v);
  rr = bnorm;
  for (double& v : rr) v *= v;

  std::vector<bool> done(k, false);
  auto relres = [&](std::size_t c) { return bnorm[c] == 0.0 ? 0.0 : std::sqrt(rr[c]) / bnorm[c]; };
  for (std::size_t c = 0; c < k; ++c) done[c] = relres(c) <= tol;

  MultiSolveResult out;
  std::size_t it = 0;
  while (it < max_iters && std::find(done.begin(), done.end(), false) != done.end()) {
    ++it;
    const DenseMatrix ap = matmul(a, p);
    column_dots(p, ap, pap);
    std::vector<double> alpha(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      if (done[c]) continue;
      if (!(pap[c] > 0.0)) {
        require_finite(pap[c], "cg_solve");
        throw NumericalBreakdown("cg_solve: non-positive curvature p^T A p in column " + std::to_string(c));
      }
      alpha[c] = rr[c] / pap[c];
      require_finite(alpha[c], "cg_solve");
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* xi = x.row(i).data();
      double* ri = r.row(i).data();
      const double* pi = p.row(i).data();
      const double* api = ap.row(i).data();
      for (std::size_t c = 0; c < k; ++c) {
        xi[c] += alpha[c] * pi[c];
        ri[c] -= alpha[c] * api[c];
      }
    }
    column_dots(r, r, rr_new);
    std::vector<double> beta(k, 0.0);
    double worst = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (done[c]) continue;
      require_finite(rr_new[c], "cg_solve");
      beta[c] = rr_new[c] / rr[c];
      rr[c] = rr_new[c];
      const double rel = relres(c);
      worst = std::max(worst, rel);
      if (rel <= tol) done[c] = true;
    }
    out.history.push_back(worst);
    for (std::size_t i = 0; i < n; ++i) {
      double* pi = p.row(i).data();
      const double* ri = r.row(i).data();
      for (std::size_t c = 0; c < k; ++c) pi[c] = ri[c] + beta[c] * pi[c];
    }
  }

  const DenseMatrix true_r = residual_block(a, x, rhs);
  std::vector<double> tr(k);
  column_dots(true_r, true_r, tr);
  out.residuals.resize(k);
  out.converged = true;
  for (std::size_t c = 0; c < k; ++c) {
    out.residuals[c] = bnorm[c] == 0.0 ? 0.0 : std::sqrt(tr[c]) / bnorm[c];
    if (!done[c]) out.converged = false;
  }
  out.x = std::move(x);
  out.iterations = it;
  return out;
}

SolveResult cg_solve(const SpdMatrix& a, std::span<const double> b, std::size_t max_iters, double tol) {
  MultiSolveResult m = cg_solve_columns(a, DenseMatrix::column(b), max_iters, tol);
  SolveResult out;
  out.x = m.x.col(0);
  out.residual = m.residuals[0];
  out.iterations = m.iterations;
  out.converged = m.converged;
  out.history = std::move(m.history);
  return out;
}

namespace {

// One chunk of columns of restarted GMRES; writes into x (chunk-local).
void gmres_chunk(const DenseMatrix& a, const DenseMatrix& b, std::size_t restart, std::size_t max_iters,
                 double tol, DenseMatrix& x, std::vector<double>& residuals, std::vector<bool>& done,
                 std::vector<double>& cycle_history, std::size_t& iters_used) {
  const std::size_t n = a.rows(), k = b.cols();
  std::vector<double> bnorm(k);
  column_dots(b, b, bnorm);
  for (double& v : bnorm) v = std::sqrt(v);

  auto relative = [&](std::size_t c, double r) { return bnorm[c] == 0.0 ? 0.0 : r / bnorm[c]; };

  std::vector<double> rnorm(k);
  DenseMatrix r = b;
  column_dots(r, r, rnorm);
  for (std::size_t c = 0; c < k; ++c) {
    rnorm[c] = std::sqrt(rnorm[c]);
    residuals[c] = relative(c, rnorm[c]);
    done[c] = residuals[c] <= tol;
  }

  std::size_t total = 0;
  while (total < max_iters && std::find(done.begin(), done.end(), false) != done.end()) {
    const std::size_t m = std::min(restart, max_iters - total);
    // Per-column Hessenberg (m+1 x m, column-major by step), rotations, rhs.
    std::vector<std::vector<double>> h(k, std::vector<double>((m + 1) * m, 0.0));
    std::vector<std::vector<double>> cs(k, std::vector<double>(m, 0.0)), sn(k, std::vector<double>(m, 0.0));
    std::vector<std::vector<double>> g(k, std::vector<double>(m + 1, 0.0));
    std::vector<std::size_t> steps(k, 0);
    std::vector<bool> active(k);
    for (std::size_t c = 0; c < k; ++c) {
      active[c] = !done[c];
      g[c][0] = rnorm[c];
    }

    std::vector<DenseMatrix> basis;
    basis.reserve(m + 1);
    {
      DenseMatrix v0(n, k);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
          if (active[c]) v0(i, c) = r(i, c) / rnorm[c];
      basis.push_back(std::move(v0));
    }

    std::vector<double> hcol(k), hnext(k);
    for (std::size_t j = 0; j < m; ++j) {
      if (std::find(active.begin(), active.end(), true) == active.end()) break;
      DenseMatrix w = matmul(a, basis[j]);
      // Modified Gram-Schmidt, all columns at once.
      for (std::size_t i = 0; i <= j; ++i) {
        column_dots(basis[i], w, hcol);
        for (std::size_t c = 0; c < k; ++c)
          if (active[c]) h[c][j * (m + 1) + i] = hcol[c];
        for (std::size_t row = 0; row < n; ++row) {
          double* wr = w.row(row).data();
          const double* vr = basis[i].row(row).data();
          for (std::size_t c = 0; c < k; ++c)
            if (active[c]) wr[c] -= hcol[c] * vr[c];
        }
      }
      column_dots(w, w, hnext);
      DenseMatrix vnext(n, k);
      for (std::size_t c = 0; c < k; ++c) {
        if (!active[c]) continue;
        const double hn = std::sqrt(hnext[c]);
        if (!std::isfinite(hn)) throw NumericalBreakdown("gmres_solve: non-finite Arnoldi norm");
        h[c][j * (m + 1) + j + 1] = hn;
        double* hc = &h[c][j * (m + 1)];
        for (std::size_t i = 0; i < j; ++i) {
          const double t = cs[c][i] * hc[i] + sn[c][i] * hc[i + 1];
          hc[i + 1] = -sn[c][i] * hc[i] + cs[c][i] * hc[i + 1];
          hc[i] = t;
        }
        const double denom = std::hypot(hc[j], hc[j + 1]);
        if (denom == 0.0) throw NumericalBreakdown("gmres_solve: singular Hessenberg column");
        cs[c][j] = hc[j] / denom;
        sn[c][j] = hc[j + 1] / denom;
        hc[j] = denom;
        hc[j + 1] = 0.0;
        g[c][j + 1] = -sn[c][j] * g[c][j];
        g[c][j] = cs[c][j] * g[c][j];
        steps[c] = j + 1;
        // Zero Arnoldi norm is a lucky breakdown: the Krylov space is invariant.
        const bool lucky = hn <= std::numeric_limits<double>::epsilon() * bnorm[c];
        if (lucky || relative(c, std::abs(g[c][j + 1])) <= tol) {
          active[c] = false;
          continue;
        }
        for (std::size_t row = 0; row < n; ++row) vnext(row, c) = w(row, c) / hn;
      }
      basis.push_back(std::move(vnext));
    }

    std::size_t cycle_steps = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t s = steps[c];
      cycle_steps = std::max(cycle_steps, s);
      if (s == 0) continue;
      std::vector<double> y(s);
      for (std::size_t i = s; i-- > 0;) {
        double acc = g[c][i];
        for (std::size_t l = i + 1; l < s; ++l) acc -= h[c][l * (m + 1) + i] * y[l];
        y[i] = acc / h[c][i * (m + 1) + i];
      }
      for (std::size_t row = 0; row < n; ++row) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) acc += basis[i](row, c) * y[i];
        x(row, c) += acc;
      }
    }
    total += cycle_steps;

    r = residual_block(a, x, b);
    column_dots(r, r, rnorm);
    double worst = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      rnorm[c] = std::sqrt(rnorm[c]);
      if (!std::isfinite(rnorm[c])) throw NumericalBreakdown("gmres_solve: non-finite residual");
      residuals[c] = relative(c, rnorm[c]);
      worst = std::max(worst, residuals[c]);
      // Stopping inside a cycle means convergence or an invariant Krylov subspace.
      const bool stopped_early = steps[c] > 0 && steps[c] < m;
      done[c] = done[c] || residuals[c] <= tol || stopped_early;
    }
    cycle_history.push_back(worst);
    if (cycle_steps == 0) break;
  }
  iters_used = std::max(iters_used, total);
}

}  // namespace

MultiSolveResult gmres_solve_columns(const DenseMatrix& a, const DenseMatrix& rhs, std::size_t restart,
                                     std::size_t max_iters, double tol, std::size_t chunk) {
  require_square(a, "gmres_solve");
  if (rhs.rows() != a.rows()) throw ShapeError("gmres_solve: right-hand side rows mismatch");
  if (restart == 0) throw InvalidArgument("gmres_solve: restart must be positive");
  const std::size_t n = a.rows(), k = rhs.cols();
  chunk = std::max<std::size_t>(1, std::min(chunk, k));

  MultiSolveResult out;
  out.x = DenseMatrix(n, k);
  out.residuals.assign(k, 0.0);
  out.converged = true;
  std::vector<double> chunk_history_max;

  for (std::size_t c0 = 0; c0 < k; c0 += chunk) {
    const std::size_t kc = std::min(chunk, k - c0);
    DenseMatrix b(n, kc);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < kc; ++c) b(i, c) = rhs(i, c0 + c);
    DenseMatrix x(n, kc);
    std::vector<double> res(kc);
    std::vector<bool> done(kc);
    std::vector<double> history;
    gmres_chunk(a, b, restart, max_iters, tol, x, res, done, history, out.iterations);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < kc; ++c) out.x(i, c0 + c) = x(i, c);
    for (std::size_t c = 0; c < kc; ++c) {
      out.residuals[c0 + c] = res[c];
      if (res[c] > tol) out.converged = false;
    }
    if (chunk_history_max.size() < history.size()) chunk_history_max.resize(history.size(), 0.0);
    for (std::size_t h = 0; h < history.size(); ++h) chunk_history_max[h] = std::max(chunk_history_max[h], history[h]);
  }
  out.history = std::move(chunk_history_max);
  return out;
}

SolveResult gmres_solve(const DenseMatrix& a, std::span<const double> b, std::size_t restart, std::size_t max_iters,
                        double tol) {
  MultiSolveResult m = gmres_solve_columns(a, DenseMatrix::column(b), restart, max_iters, tol, 1);
  SolveResult out;
  out.x = m.x.col(0);
  out.residual = m.residuals[0];
  out.iterations = m.iterations;
  out.converged = m.converged;
  out.history = std::move(m.history);
  return out;
}

double power_iteration_max_eigenvalue(const DenseMatrix& a, std::size_t iters, unsigned long long seed) {
  require_square(a, "power_iteration");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector x(a.rows());
  for (double& v : x) v = normal(rng);
  double nx = norm2(x);
  for (double& v : x) v /= nx;
  double lambda = 0.0;
  for (std::size_t t = 0; t < iters; ++t) {
    Vector y = matvec(a, x);
    lambda = dot(x, y);
    const double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) x[i] = y[i] / ny;
  }
  return lambda;
}

}  // namespace hyperinf
