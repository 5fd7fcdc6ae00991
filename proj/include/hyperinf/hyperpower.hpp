#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyperinf/dense.hpp"

namespace hyperinf {

enum class InitMode {
  ScaledIdentity,   // X0 = init_scale * I
  TransposeScaled,  // X0 = A^T / (||A||_1 ||A||_inf), see stabilized_init
  Custom,           // X0 = custom_init
};

struct IterationConfig {
  std::size_t max_iters = 25;
  double init_scale = 5e-4;
  int order_p = 2;
  // Stop once ||I - A X_t||_F <= tol. Unset means run exactly max_iters.
  std::optional<double> early_stop_tol;
  InitMode init_mode = InitMode::ScaledIdentity;
  DenseMatrix custom_init;

  void validate() const;
};

// Residual ||I - A X||_F below which a fixed-count run counts as converged.
inline constexpr double kConvergedResidual = 1e-3;

struct ConvergenceTrace {
  std::string method;
  // Error of the iterate after each iteration t = 1..iters_used.
  std::vector<double> per_iteration_error;
  // "oracle_frobenius": ||oracle - X_t||_F
  // "residual_frobenius": ||I - A X_t||_F
  // "oracle_relative": ||x* - v_j||_2 / ||v||_2
  // "residual_relative": ||A v_j - v||_2 / ||v||_2
  std::string error_metric;
  // Divide per_iteration_error by this for a normalized error
  // (||oracle||_F for matrix oracles, 1 otherwise).
  double reference_norm = 1.0;
  // ||I - A X_t||_F per iteration; only filled by the matrix iterations.
  std::vector<double> residuals;
  bool converged = false;
  bool diverged = false;
  std::size_t iters_used = 0;
};

struct InverseResult {
  DenseMatrix inverse;
  ConvergenceTrace trace;
};

// Order-p hyperpower iteration X_{t+1} = X_t (I + T_t + ... + T_t^{p-1}),
// T_t = I - A X_t. Uses p matrix products per iteration (one of them forms
// A X_{t+1}, which also yields the residual). Divergence is reported in the
// trace, never thrown.
InverseResult hyperpower_inverse(const DenseMatrix& a, const IterationConfig& cfg,
                                 const DenseMatrix* oracle = nullptr);

// X_{t+1} = X_t (2I - A X_t). Same results as hyperpower_inverse with p = 2,
// bit for bit; cfg.order_p is ignored.
InverseResult schulz_inverse(const DenseMatrix& a, const IterationConfig& cfg, const DenseMatrix* oracle = nullptr);

// X0 = A^T / (||A||_1 ||A||_inf). Schulz converges from this start for any
// nonsingular A.
DenseMatrix stabilized_init(const DenseMatrix& a);

using LinearOperator = std::function<Vector(std::span<const double>)>;

struct LissaResult {
  Vector estimate;
  ConvergenceTrace trace;
};

// Norm growth ||v_j|| / ||v|| beyond which a LiSSA run is flagged diverged.
inline constexpr double kLissaDivergenceGrowth = 1e6;

// v_0 = v, v_j = v + (I - A) v_{j-1}, with A given as an operator. When
// `oracle` (A^{-1} v) is supplied the trace is ||oracle - v_j|| / ||v||,
// otherwise ||A v_j - v|| / ||v||. Stops early only on non-finite values.
LissaResult lissa_iterate(const LinearOperator& apply, std::span<const double> v, std::size_t iters,
                          const Vector* oracle = nullptr);

// Dense convenience wrapper. Computes A^{-1} v by LU as the trace oracle when
// dim <= 4096 and A is nonsingular.
LissaResult lissa_hvp(const DenseMatrix& a, std::span<const double> v, std::size_t max_iters);

}  // namespace hyperinf
