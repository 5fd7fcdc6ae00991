#include "hyperinf/fisher.hpp"

#include <cmath>
#include <random>
#include <string>

namespace hyperinf {

GradientBlock GradientBlock::ingest(std::string name, DenseMatrix values) {
  GradientBlock b;
  b.name = std::move(name);
  if (values.rows() < values.cols()) {
    b.values = transpose(values);
    b.transposed = true;
  } else {
    b.values = std::move(values);
  }
  if (!b.values.all_finite()) throw DataError("gradient block '" + b.name + "' has non-finite entries");
  return b;
}

Vector vec(const DenseMatrix& g) {
  const std::size_t d = g.rows(), r = g.cols();
  Vector out(d * r);
  for (std::size_t c = 0; c < r; ++c)
    for (std::size_t i = 0; i < d; ++i) out[c * d + i] = g(i, c);
  return out;
}

DenseMatrix unvec(std::span<const double> v, std::size_t d, std::size_t r) {
  if (v.size() != d * r) throw ShapeError("unvec: length does not match d*r");
  DenseMatrix g = DenseMatrix::from_unchecked(d, r, std::vector<double>(d * r));
  for (std::size_t c = 0; c < r; ++c)
    for (std::size_t i = 0; i < d; ++i) g(i, c) = v[c * d + i];
  return g;
}

bool CurvatureMatrix::damped_is_positive_definite() const {
  // Cholesky succeeds exactly when the symmetric matrix is positive definite.
  const DenseMatrix a = damped();
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = a(j, j);
    for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(s > 0.0)) return false;
    l(j, j) = std::sqrt(s);
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  return true;
}

namespace {

void check_uniform_shapes(std::span<const GradientBlock> grads, const char* op) {
  if (grads.empty()) throw InvalidArgument(std::string(op) + ": need at least one gradient");
  const std::size_t d = grads[0].d(), r = grads[0].r();
  for (std::size_t i = 1; i < grads.size(); ++i)
    if (grads[i].d() != d || grads[i].r() != r)
      throw ShapeError(std::string(op) + ": example " + std::to_string(i) + " has shape " +
                       std::to_string(grads[i].d()) + "x" + std::to_string(grads[i].r()) + ", expected " +
                       std::to_string(d) + "x" + std::to_string(r));
}

}  // namespace

CurvatureMatrix build_fim(std::span<const GradientBlock> grads) {
  check_uniform_shapes(grads, "build_fim");
  const std::size_t n = grads.size(), d = grads[0].d(), r = grads[0].r();
  DenseMatrix stacked(n, d * r);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector v = vec(grads[i].values);
    std::copy(v.begin(), v.end(), stacked.row(i).begin());
  }
  CurvatureMatrix c;
  c.kind = CurvatureKind::Fim;
  c.matrix = SpdMatrix(scale(matmul_tn(stacked, stacked), 1.0 / static_cast<double>(n)));
  c.block_name = grads[0].name;
  c.sample_count = n;
  return c;
}

CurvatureMatrix build_gfim(std::span<const GradientBlock> grads) {
  check_uniform_shapes(grads, "build_gfim");
  const std::size_t n = grads.size(), d = grads[0].d(), r = grads[0].r();
  // [g_1 | g_2 | ... | g_n] (d x nr); its Gram matrix is sum g_i g_i^T.
  DenseMatrix side_by_side(d, n * r);
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t c = 0; c < r; ++c) side_by_side(i, e * r + c) = grads[e].values(i, c);
  CurvatureMatrix cm;
  cm.kind = CurvatureKind::Gfim;
  cm.matrix = SpdMatrix(scale(matmul_nt(side_by_side, side_by_side), 1.0 / static_cast<double>(n)));
  cm.block_name = grads[0].name;
  cm.sample_count = n;
  return cm;
}

double damping_factor(std::span<const GradientBlock> grads, double coefficient) {
  check_uniform_shapes(grads, "damping_factor");
  double total = 0.0;
  for (const auto& g : grads) {
    const double f = frobenius_norm(g.values);
    total += f * f;
  }
  return coefficient * total / (static_cast<double>(grads.size()) * static_cast<double>(grads[0].d()));
}

HvpResult gfim_inverse_hvp(const CurvatureMatrix& curv, const GradientBlock& v, Inverter inverter,
                           const IterationConfig& cfg) {
  if (curv.kind != CurvatureKind::Gfim) throw InvalidArgument("gfim_inverse_hvp: curvature must be a GFIM");
  if (v.d() != curv.dim())
    throw ShapeError("gfim_inverse_hvp: block has d=" + std::to_string(v.d()) + ", curvature is " +
                     std::to_string(curv.dim()) + "x" + std::to_string(curv.dim()));
  const DenseMatrix a = curv.damped();
  HvpResult out;
  DenseMatrix inv;
  if (inverter == Inverter::Exact) {
    inv = gaussian_inverse(a);
  } else {
    InverseResult res = schulz_inverse(a, cfg);
    out.residual = res.trace.residuals.empty() ? INFINITY : res.trace.residuals.back();
    out.warning = !res.trace.converged;
    inv = std::move(res.inverse);
  }
  out.value.name = v.name;
  out.value.transposed = v.transposed;
  out.value.values = matmul(inv, v.values);
  return out;
}

double lemma1_gap(std::size_t d, std::size_t r, std::size_t samples, std::uint64_t seed) {
  if (d == 0 || r == 0 || samples == 0) throw InvalidArgument("lemma1_gap: d, r and samples must be positive");
  const std::size_t n = d * r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  // Both sums round the product before accumulating (no fused multiply-add
  // difference), so for r = 1 they agree bit for bit.
  DenseMatrix flat(n, n), small(d, d);
  Vector v(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (double& x : v) x = normal(rng);  // column-stacked draw: column c is v[c*d .. c*d+d)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        acc += v[i] * v[j];
        flat(i, j) += acc;
      }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < r; ++c) acc += v[c * d + i] * v[c * d + j];
        small(i, j) += acc;
      }
  }
  const double inv_samples = 1.0 / static_cast<double>(samples);
  const DenseMatrix fim = scale(flat, inv_samples);
  const DenseMatrix kron = kron_identity(r, scale(scale(small, inv_samples), 1.0 / static_cast<double>(r)));
  const double denom = frobenius_norm(kron);
  return denom == 0.0 ? 0.0 : frobenius_norm(subtract(fim, kron)) / denom;
}

}  // namespace hyperinf
