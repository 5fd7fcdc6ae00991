#include "hyperinf/hyperpower.hpp"

#include <cmath>
#include <string>

namespace hyperinf {

void IterationConfig::validate() const {
  if (max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) throw InvalidArgument("init_scale must be positive");
  if (order_p < 2) throw InvalidArgument("order_p must be at least 2");
  if (early_stop_tol && !(*early_stop_tol > 0.0)) throw InvalidArgument("early_stop_tol must be positive");
  if (init_mode == InitMode::Custom && custom_init.empty())
    throw InvalidArgument("custom init mode requires custom_init");
}

DenseMatrix stabilized_init(const DenseMatrix& a) {
  if (!a.is_square()) throw ShapeError("stabilized_init: expected square matrix");
  const double denom = norm1(a) * norm_inf(a);
  if (denom == 0.0) throw InvalidArgument("stabilized_init: zero matrix has no inverse");
  return scale(transpose(a), 1.0 / denom);
}

namespace {

DenseMatrix initial_iterate(const DenseMatrix& a, const IterationConfig& cfg) {
  switch (cfg.init_mode) {
    case InitMode::ScaledIdentity:
      return DenseMatrix::scaled_identity(a.rows(), cfg.init_scale);
    case InitMode::TransposeScaled:
      return stabilized_init(a);
    case InitMode::Custom:
      if (cfg.custom_init.rows() != a.rows() || cfg.custom_init.cols() != a.cols())
        throw ShapeError("custom_init shape does not match the matrix");
      return cfg.custom_init;
  }
  throw InvalidArgument("unknown init mode");
}

// In place: m <- c I - m.
void identity_minus(DenseMatrix& m, double c) {
  for (double& v : m.data()) v = -v;
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += c;
}

// Polynomial factor I + T + ... + T^{p-1} given AX, via Horner.
DenseMatrix hyperpower_factor(const DenseMatrix& ax, int p) {
  DenseMatrix t = ax;
  identity_minus(t, 1.0);
  DenseMatrix s = add_scaled_identity(t, 1.0);  // I + T
  for (int k = 2; k < p; ++k) s = add_scaled_identity(matmul(t, s), 1.0);
  return s;
}

InverseResult iterate(const DenseMatrix& a, const IterationConfig& cfg, const DenseMatrix* oracle, int p,
                      const char* label) {
  if (!a.is_square()) throw ShapeError(std::string(label) + ": expected square matrix");
  cfg.validate();
  if (oracle && (oracle->rows() != a.rows() || oracle->cols() != a.cols()))
    throw ShapeError(std::string(label) + ": oracle shape mismatch");

  InverseResult out;
  ConvergenceTrace& trace = out.trace;
  trace.method = label;
  trace.error_metric = oracle ? "oracle_frobenius" : "residual_frobenius";
  trace.reference_norm = oracle ? frobenius_norm(*oracle) : 1.0;

  DenseMatrix x = initial_iterate(a, cfg);
  DenseMatrix ax = matmul(a, x);
  for (std::size_t t = 1; t <= cfg.max_iters; ++t) {
    DenseMatrix next;
    if (p == 2) {
      // Fused Schulz step: reuse the A X buffer as 2I - A X.
      identity_minus(ax, 2.0);
      next = matmul(x, ax);
    } else {
      next = matmul(x, hyperpower_factor(ax, p));
    }
    DenseMatrix next_ax = matmul(a, next);
    const double residual = identity_residual(next_ax);
    const double error = oracle ? frobenius_norm(subtract(*oracle, next)) : residual;
    if (!std::isfinite(residual) || !std::isfinite(error)) {
      trace.diverged = true;
      break;
    }
    x = std::move(next);
    ax = std::move(next_ax);
    trace.residuals.push_back(residual);
    trace.per_iteration_error.push_back(error);
    trace.iters_used = t;
    if (cfg.early_stop_tol && residual <= *cfg.early_stop_tol) break;
  }

  const double final_residual = trace.residuals.empty() ? identity_residual(ax) : trace.residuals.back();
  const double target = cfg.early_stop_tol ? *cfg.early_stop_tol : kConvergedResidual;
  trace.converged = !trace.diverged && final_residual <= target;
  out.inverse = std::move(x);
  return out;
}

}  // namespace

InverseResult hyperpower_inverse(const DenseMatrix& a, const IterationConfig& cfg, const DenseMatrix* oracle) {
  return iterate(a, cfg, oracle, cfg.order_p, "hyperpower");
}

InverseResult schulz_inverse(const DenseMatrix& a, const IterationConfig& cfg, const DenseMatrix* oracle) {
  return iterate(a, cfg, oracle, 2, "schulz");
}

LissaResult lissa_iterate(const LinearOperator& apply, std::span<const double> v, std::size_t iters,
                          const Vector* oracle) {
  const std::size_t n = v.size();
  if (oracle && oracle->size() != n) throw ShapeError("lissa: oracle length mismatch");
  const double vnorm = norm2(v);
  const double denom = vnorm == 0.0 ? 1.0 : vnorm;

  LissaResult out;
  ConvergenceTrace& trace = out.trace;
  trace.method = "lissa";
  trace.error_metric = oracle ? "oracle_relative" : "residual_relative";

  Vector current(v.begin(), v.end());
  for (std::size_t j = 1; j <= iters; ++j) {
    const Vector av = apply(current);
    if (av.size() != n) throw ShapeError("lissa: operator output length mismatch");
    Vector next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = v[i] + current[i] - av[i];

    double err = 0.0;
    if (oracle) {
      for (std::size_t i = 0; i < n; ++i) err += ((*oracle)[i] - next[i]) * ((*oracle)[i] - next[i]);
    } else {
      const Vector an = apply(next);
      for (std::size_t i = 0; i < n; ++i) err += (an[i] - v[i]) * (an[i] - v[i]);
    }
    err = std::sqrt(err) / denom;
    const double growth = norm2(next) / denom;
    if (!std::isfinite(err) || !std::isfinite(growth)) {
      trace.diverged = true;
      break;
    }
    if (growth > kLissaDivergenceGrowth) trace.diverged = true;
    current = std::move(next);
    trace.per_iteration_error.push_back(err);
    trace.iters_used = j;
  }
  trace.converged = !trace.diverged && !trace.per_iteration_error.empty() &&
                    trace.per_iteration_error.back() <= kConvergedResidual;
  out.estimate = std::move(current);
  return out;
}

LissaResult lissa_hvp(const DenseMatrix& a, std::span<const double> v, std::size_t max_iters) {
  if (!a.is_square() || a.rows() != v.size()) throw ShapeError("lissa_hvp: dimension mismatch");
  LinearOperator apply = [&a](std::span<const double> x) { return matvec(a, x); };
  std::optional<Vector> oracle;
  if (a.rows() <= 4096) {
    try {
      oracle = LuFactorization(a).solve(v);
    } catch (const SingularMatrixError&) {
      oracle.reset();
    }
  }
  return lissa_iterate(apply, v, max_iters, oracle ? &*oracle : nullptr);
}

}  // namespace hyperinf
