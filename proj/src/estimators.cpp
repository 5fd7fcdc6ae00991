#include "hyperinf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hyperinf {

void GradientDump::validate() const {
  const std::size_t n = example_ids.size();
  if (train_grads.size() != blocks.size()) throw DataError("dump: train gradients missing for some blocks");
  if (val_grads.size() != blocks.size()) throw DataError("dump: validation gradient missing for some blocks");
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const BlockSpec& b = blocks[l];
    for (std::size_t m = 0; m < l; ++m)
      if (blocks[m].name == b.name) throw DataError("dump: duplicate block name '" + b.name + "'");
    if (train_grads[l].size() != n)
      throw DataError("dump: block '" + b.name + "' has " + std::to_string(train_grads[l].size()) +
                      " examples, expected " + std::to_string(n));
    auto check = [&](const GradientBlock& g, const std::string& where) {
      if (g.d() != b.d || g.r() != b.r)
        throw DataError("dump: block '" + b.name + "' " + where + " has shape " + std::to_string(g.d()) + "x" +
                        std::to_string(g.r()) + ", expected " + std::to_string(b.d) + "x" + std::to_string(b.r));
      if (!g.values.all_finite()) throw DataError("dump: block '" + b.name + "' " + where + " has non-finite entries");
    };
    for (std::size_t k = 0; k < n; ++k) check(train_grads[l][k], "example " + std::to_string(k));
    check(val_grads[l], "validation gradient");
  }
}

Damping Damping::per_block(double coefficient) {
  Damping d;
  d.mode = DampingMode::PerBlock;
  d.coefficient = coefficient;
  return d;
}

Damping Damping::fixed(double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("fixed damping requires lambda > 0");
  Damping d;
  d.mode = DampingMode::Fixed;
  d.lambda = lambda;
  return d;
}

double Damping::for_block(std::span<const GradientBlock> grads) const {
  const double raw = mode == DampingMode::Fixed ? lambda : damping_factor(grads, coefficient);
  return std::max(raw, floor);
}

nlohmann::ordered_json Damping::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode == DampingMode::Fixed ? "fixed" : "per-block";
  if (mode == DampingMode::Fixed)
    j["lambda"] = lambda;
  else
    j["coefficient"] = coefficient;
  j["floor"] = floor;
  return j;
}

namespace {

// NaN sorts after every number so the ordering stays strict-weak.
bool score_less(double a, double b) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return a < b;
}

bool score_greater(double a, double b) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return a > b;
}

InfluenceReport start_report(const GradientDump& dump, std::string name) {
  dump.validate();
  InfluenceReport r;
  r.estimator = std::move(name);
  r.example_ids = dump.example_ids;
  // DenseMatrix has no empty shape; an empty dump keeps a 1 x 1 placeholder.
  const std::size_t rows = std::max<std::size_t>(dump.n_examples(), 1), cols = std::max<std::size_t>(dump.n_blocks(), 1);
  r.per_block_scores = DenseMatrix(rows, cols);
  return r;
}

void finish_report(InfluenceReport& r, const GradientDump& dump) {
  const std::size_t n = dump.n_examples(), L = dump.n_blocks();
  r.scores.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) s += r.per_block_scores(k, l);
    r.scores[k] = s;
  }
  r.ranking_ascending.resize(n);
  std::iota(r.ranking_ascending.begin(), r.ranking_ascending.end(), std::size_t{0});
  std::stable_sort(r.ranking_ascending.begin(), r.ranking_ascending.end(),
                   [&](std::size_t a, std::size_t b) { return score_less(r.scores[a], r.scores[b]); });
}

DenseMatrix stack_flat(std::span<const GradientBlock> grads) {
  const std::size_t n = grads.size(), len = grads[0].d() * grads[0].r();
  DenseMatrix f(n, len);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector v = vec(grads[i].values);
    std::copy(v.begin(), v.end(), f.row(i).begin());
  }
  return f;
}

}  // namespace

InfluenceReport score_exact(const GradientDump& dump, const Damping& damping, ExactSolver solver) {
  InfluenceReport r = start_report(dump, "exact");
  r.config = {{"estimator", "exact"},
              {"solver", solver == ExactSolver::Lu ? "lu" : "cg"},
              {"damping", damping.to_json()}};
  const std::size_t n = dump.n_examples();
  for (std::size_t l = 0; l < dump.n_blocks(); ++l) {
    const auto& spec = dump.blocks[l];
    const std::size_t dim = spec.d * spec.r;
    if (dim * dim > kExactElementCap)
      throw CapacityError("exact estimator: block '" + spec.name + "' needs " + std::to_string(dim) + "^2 entries, cap is " +
                          std::to_string(kExactElementCap));
    if (n == 0) continue;
    const auto& grads = dump.train_grads[l];
    const double lambda = damping.for_block(grads);
    r.block_damping.push_back(lambda);
    const CurvatureMatrix fim = build_fim(grads);
    const DenseMatrix a = add_scaled_identity(fim.matrix.matrix(), lambda);
    r.peak_curvature_elements = std::max(r.peak_curvature_elements, 2 * a.size());
    const Vector v = vec(dump.val_grads[l].values);
    Vector w;
    if (solver == ExactSolver::Lu) {
      w = LuFactorization(a).solve(v);
    } else {
      SolveResult s = cg_solve(SpdMatrix(a), v, 10 * dim + 10, 1e-14);
      if (!s.converged)
        r.warnings.push_back("block '" + spec.name + "': CG stopped at relative residual " + std::to_string(s.residual));
      w = std::move(s.x);
    }
    for (std::size_t k = 0; k < n; ++k) r.per_block_scores(k, l) = -dot(w, vec(grads[k].values));
  }
  finish_report(r, dump);
  return r;
}

InfluenceReport score_hyperinf(const GradientDump& dump, const IterationConfig& cfg, const Damping& damping,
                               const HyperinfOptions& options) {
  const std::string name = options.flatten_first ? "hyperinf_fim" : "hyperinf";
  InfluenceReport r = start_report(dump, name);
  r.config = {{"estimator", name},
              {"inverter", options.inverter == Inverter::Schulz ? "schulz" : "exact"},
              {"curvature", options.flatten_first ? "fim" : "gfim"},
              {"max_iters", cfg.max_iters},
              {"init_scale", cfg.init_scale},
              {"order_p", cfg.order_p},
              {"damping", damping.to_json()}};
  const std::size_t n = dump.n_examples();
  if (n == 0) {
    finish_report(r, dump);
    return r;
  }
  for (std::size_t l = 0; l < dump.n_blocks(); ++l) {
    const auto& spec = dump.blocks[l];
    const auto& grads = dump.train_grads[l];
    const double lambda = damping.for_block(grads);
    r.block_damping.push_back(lambda);
    const CurvatureMatrix curv = options.flatten_first ? build_fim(grads) : build_gfim(grads);
    const DenseMatrix a = add_scaled_identity(curv.matrix.matrix(), lambda);

    DenseMatrix inverse;
    if (options.inverter == Inverter::Exact) {
      inverse = gaussian_inverse(a);
    } else {
      InverseResult res = schulz_inverse(a, cfg);
      if (!res.trace.converged) {
        const double resid = res.trace.residuals.empty() ? INFINITY : res.trace.residuals.back();
        r.warnings.push_back("block '" + spec.name + "': Schulz residual " + std::to_string(resid) + " after " +
                             std::to_string(res.trace.iters_used) + " iterations" +
                             (res.trace.diverged ? " (diverged)" : ""));
        if (res.trace.diverged) r.diverged = true;
      }
      inverse = std::move(res.inverse);
    }
    r.peak_curvature_elements = std::max(r.peak_curvature_elements, a.size() + inverse.size());

    if (options.flatten_first) {
      const Vector h = matvec(inverse, vec(dump.val_grads[l].values));
      for (std::size_t k = 0; k < n; ++k) r.per_block_scores(k, l) = -dot(h, vec(grads[k].values));
    } else {
      // h_l = v_l^T A^{-1} (r x d); score is -trace(h_l g_k).
      const DenseMatrix h = matmul_tn(dump.val_grads[l].values, inverse);
      for (std::size_t k = 0; k < n; ++k) {
        const DenseMatrix& g = grads[k].values;
        double tr = 0.0;
        for (std::size_t c = 0; c < h.rows(); ++c)
          for (std::size_t i = 0; i < h.cols(); ++i) tr += h(c, i) * g(i, c);
        r.per_block_scores(k, l) = -tr;
      }
    }
  }
  finish_report(r, dump);
  return r;
}

DenseMatrix datainf_dense_inverse(std::span<const GradientBlock> grads, double lambda) {
  if (grads.empty()) throw InvalidArgument("datainf: need at least one gradient");
  if (!(lambda > 0.0)) throw InvalidArgument("datainf: lambda must be positive");
  const std::size_t n = grads.size();
  const DenseMatrix f = stack_flat(grads);  // n x p
  // sum_i c_i g_i g_i^T = F^T diag(c) F.
  DenseMatrix weighted = f;
  for (std::size_t i = 0; i < n; ++i) {
    const double norm2sq = dot(f.row(i), f.row(i));
    const double c = 1.0 / (lambda + norm2sq);
    for (double& v : weighted.row(i)) v *= c;
  }
  DenseMatrix out = scale(matmul_tn(weighted, f), -1.0);
  out = add_scaled_identity(out, static_cast<double>(n));
  return scale(out, 1.0 / (static_cast<double>(n) * lambda));
}

InfluenceReport score_datainf(const GradientDump& dump, const Damping& damping) {
  InfluenceReport r = start_report(dump, "datainf");
  r.config = {{"estimator", "datainf"}, {"damping", damping.to_json()}};
  const std::size_t n = dump.n_examples();
  for (std::size_t l = 0; l < dump.n_blocks() && n > 0; ++l) {
    const auto& grads = dump.train_grads[l];
    const double lambda = damping.for_block(grads);
    r.block_damping.push_back(lambda);
    const DenseMatrix f = stack_flat(grads);
    const Vector v = vec(dump.val_grads[l].values);
    // w = (1/(n lambda)) (n v - sum_i c_i g_i), c_i = <g_i, v> / (lambda + ||g_i||^2).
    Vector w(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) w[j] = static_cast<double>(n) * v[j];
    for (std::size_t i = 0; i < n; ++i) {
      const auto gi = f.row(i);
      const double c = dot(gi, v) / (lambda + dot(gi, gi));
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= c * gi[j];
    }
    const double s = 1.0 / (static_cast<double>(n) * lambda);
    for (double& x : w) x *= s;
    for (std::size_t k = 0; k < n; ++k) r.per_block_scores(k, l) = -dot(w, f.row(k));
  }
  finish_report(r, dump);
  return r;
}

InfluenceReport score_lissa(const GradientDump& dump, std::size_t iters, const Damping& damping) {
  InfluenceReport r = start_report(dump, "lissa");
  r.config = {{"estimator", "lissa"}, {"iters", iters}, {"damping", damping.to_json()}};
  const std::size_t n = dump.n_examples();
  for (std::size_t l = 0; l < dump.n_blocks() && n > 0; ++l) {
    const auto& spec = dump.blocks[l];
    const auto& grads = dump.train_grads[l];
    const double lambda = damping.for_block(grads);
    r.block_damping.push_back(lambda);
    const DenseMatrix f = stack_flat(grads);
    const double inv_n = 1.0 / static_cast<double>(n);
    // (FIM + lambda I) u = (1/n) F^T (F u) + lambda u, never forming FIM.
    LinearOperator apply = [&](std::span<const double> u) {
      Vector fu(n);
      for (std::size_t i = 0; i < n; ++i) fu[i] = dot(f.row(i), u);
      Vector out(u.size());
      for (std::size_t j = 0; j < u.size(); ++j) out[j] = lambda * u[j];
      for (std::size_t i = 0; i < n; ++i) {
        const auto fi = f.row(i);
        const double c = fu[i] * inv_n;
        for (std::size_t j = 0; j < u.size(); ++j) out[j] += c * fi[j];
      }
      return out;
    };
    const Vector v = vec(dump.val_grads[l].values);
    LissaResult res = lissa_iterate(apply, v, iters);
    if (res.trace.diverged) {
      r.diverged = true;
      r.warnings.push_back("block '" + spec.name + "': LiSSA diverged (norm growth above " +
                           std::to_string(kLissaDivergenceGrowth) + "x)");
    }
    for (std::size_t k = 0; k < n; ++k) r.per_block_scores(k, l) = -dot(res.estimate, f.row(k));
  }
  finish_report(r, dump);
  return r;
}

InfluenceReport score_tracin(const GradientDump& dump) {
  InfluenceReport r = start_report(dump, "tracin");
  r.config = {{"estimator", "tracin"}};
  for (std::size_t l = 0; l < dump.n_blocks(); ++l)
    for (std::size_t k = 0; k < dump.n_examples(); ++k)
      r.per_block_scores(k, l) = -frobenius_inner(dump.val_grads[l].values, dump.train_grads[l][k].values);
  finish_report(r, dump);
  return r;
}

std::vector<std::size_t> rank_examples(const InfluenceReport& report, RankMode mode, double k_percent) {
  if (!(k_percent > 0.0) || k_percent > 100.0) throw InvalidArgument("rank_examples: k_percent must be in (0, 100]");
  const std::size_t n = report.size();
  if (n == 0) return {};
  const double want = k_percent * static_cast<double>(n) / 100.0;
  const auto count = std::min(n, static_cast<std::size_t>(std::ceil(want - 1e-9)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == RankMode::MostHelpful) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score_less(report.scores[a], report.scores[b]); });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score_greater(report.scores[a], report.scores[b]); });
  }
  order.resize(count);
  return order;
}

const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names = {"hyperinf", "hyperinf_fim", "datainf", "lissa", "tracin", "exact"};
  return names;
}

InfluenceReport run_estimator(const std::string& name, const GradientDump& dump, const EstimatorSettings& s) {
  if (name == "hyperinf") return score_hyperinf(dump, s.iteration, s.damping, {s.inverter, false});
  if (name == "hyperinf_fim") return score_hyperinf(dump, s.iteration, s.damping, {s.inverter, true});
  if (name == "datainf") return score_datainf(dump, s.damping);
  if (name == "lissa") return score_lissa(dump, s.lissa_iters, s.damping);
  if (name == "tracin") return score_tracin(dump);
  if (name == "exact") return score_exact(dump, s.damping);
  throw InvalidArgument("unknown estimator '" + name + "'");
}

}  // namespace hyperinf
