#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyperinf/dense.hpp"
#include "hyperinf/hyperpower.hpp"

namespace hyperinf {

// Unflattened per-example gradient of one parameter block, d x r with d >= r.
struct GradientBlock {
  std::string name;
  DenseMatrix values;
  // Set when the source matrix was r x d and got transposed on ingestion.
  bool transposed = false;

  std::size_t d() const noexcept { return values.rows(); }
  std::size_t r() const noexcept { return values.cols(); }

  // Puts the long dimension first.
  static GradientBlock ingest(std::string name, DenseMatrix values);
};

// Column-stacking vec: vec(g)[c * d + i] = g(i, c). With this convention
// (I_r (x) A) vec(V) = vec(A V).
Vector vec(const DenseMatrix& g);
DenseMatrix unvec(std::span<const double> v, std::size_t d, std::size_t r);

enum class CurvatureKind { Fim, Gfim };

struct CurvatureMatrix {
  CurvatureKind kind = CurvatureKind::Gfim;
  SpdMatrix matrix;
  double damping = 0.0;
  std::string block_name;
  std::size_t sample_count = 0;

  std::size_t dim() const noexcept { return matrix.dim(); }
  DenseMatrix damped() const { return add_scaled_identity(matrix.matrix(), damping); }
  // Positive definiteness of matrix + damping I, checked by Cholesky.
  bool damped_is_positive_definite() const;
};

// (1/n) sum vec(g_i) vec(g_i)^T, an (rd) x (rd) matrix. Damping is left at 0.
CurvatureMatrix build_fim(std::span<const GradientBlock> grads);

// (1/n) sum g_i g_i^T, a d x d matrix. The full curvature it stands for,
// I_r (x) (G / r), is never formed.
CurvatureMatrix build_gfim(std::span<const GradientBlock> grads);

inline constexpr double kDampingCoefficient = 0.1;
inline constexpr double kDampingFloor = 1e-12;

// coefficient * (n d)^{-1} * sum_i ||g_i||_F^2. Returns 0 for all-zero
// gradients; callers apply kDampingFloor.
double damping_factor(std::span<const GradientBlock> grads, double coefficient = kDampingCoefficient);

enum class Inverter { Schulz, Exact };

struct HvpResult {
  GradientBlock value;
  // Schulz residual ||I - A X||_F of the inverse used (0 for the exact path).
  double residual = 0.0;
  // Set when the Schulz residual stayed above kConvergedResidual.
  bool warning = false;
};

// (G + lambda I_d)^{-1} v for a GFIM curvature and a d x r block v.
HvpResult gfim_inverse_hvp(const CurvatureMatrix& curv, const GradientBlock& v, Inverter inverter,
                           const IterationConfig& cfg = {});

// Monte-Carlo witness for the Kronecker factorization of the FIM under
// i.i.d. zero-mean gradient columns: the relative Frobenius gap between
// mean(vec(g) vec(g)^T) and I_r (x) (mean(g g^T) / r) over `samples`
// standard-normal d x r draws.
double lemma1_gap(std::size_t d, std::size_t r, std::size_t samples, std::uint64_t seed);

}  // namespace hyperinf
