#include "hyperinf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/distributions/students_t.hpp>

namespace hyperinf {

namespace {

std::mt19937_64 stream(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void SyntheticSpec::validate() const {
  if (dims.empty() || sample_counts.empty()) throw InvalidArgument("synthetic spec: dims and sample counts must be nonempty");
  for (std::size_t d : dims)
    if (d == 0) throw InvalidArgument("synthetic spec: dimensions must be positive");
  for (std::size_t n : sample_counts)
    if (n == 0) throw InvalidArgument("synthetic spec: sample counts must be positive");
  if (!(lambda > 0.0)) throw InvalidArgument("synthetic spec: lambda must be positive");
  if (!(init_scale > 0.0)) throw InvalidArgument("synthetic spec: init scale must be positive");
  if (!(sample_scale > 0.0)) throw InvalidArgument("synthetic spec: sample scale must be positive");
  if (iters == 0) throw InvalidArgument("synthetic spec: iters must be at least 1");
}

DenseMatrix make_synthetic_samples(std::size_t d, std::size_t n, double scale, std::uint64_t seed) {
  auto rng = stream({seed, d, n});
  std::normal_distribution<double> normal(0.0, scale);
  DenseMatrix s(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s(i, j) = normal(rng);
  return s;
}

DenseMatrix synthetic_matrix(const DenseMatrix& samples, double lambda) {
  return add_scaled_identity(matmul_tn(samples, samples), lambda);
}

DenseMatrix synthetic_datainf_inverse(const DenseMatrix& samples, double lambda) {
  const std::size_t n = samples.rows(), d = samples.cols();
  const double root = std::sqrt(static_cast<double>(n));
  std::vector<GradientBlock> grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    DenseMatrix g(d, 1);
    for (std::size_t j = 0; j < d; ++j) g(j, 0) = root * samples(i, j);
    grads[i].name = "s";
    grads[i].values = std::move(g);
  }
  return datainf_dense_inverse(grads, lambda);
}

double ConvergenceCell::schulz_final_error() const {
  return schulz.per_iteration_error.empty() ? INFINITY : schulz.per_iteration_error.back();
}

std::vector<ConvergenceCell> run_convergence_test(const SyntheticSpec& spec, const CellCallback& on_cell) {
  spec.validate();
  for (std::size_t d : spec.dims)
    if (d > kMaxSyntheticDim)
      throw CapacityError("convergence test: d=" + std::to_string(d) + " exceeds the cap of " +
                          std::to_string(kMaxSyntheticDim));

  std::vector<ConvergenceCell> cells;
  for (std::size_t d : spec.dims) {
    for (std::size_t n : spec.sample_counts) {
      ConvergenceCell cell;
      cell.d = d;
      cell.n = n;
      DenseMatrix samples = make_synthetic_samples(d, n, spec.sample_scale, spec.seed);
      const DenseMatrix m = synthetic_matrix(samples, spec.lambda);
      const DenseMatrix oracle = gaussian_inverse(m);
      cell.oracle_norm = frobenius_norm(oracle);
      cell.lambda_max = power_iteration_max_eigenvalue(m, 100, spec.seed);

      IterationConfig cfg;
      cfg.max_iters = spec.iters;
      cfg.init_scale = spec.init_scale;
      cell.schulz = schulz_inverse(m, cfg, &oracle).trace;

      cell.datainf_error = frobenius_norm(subtract(oracle, synthetic_datainf_inverse(samples, spec.lambda)));
      samples = DenseMatrix();

      auto rng = stream({spec.seed, d, n, 1});
      std::normal_distribution<double> normal;
      Vector v(d);
      for (double& x : v) x = normal(rng);
      const Vector q = matvec(oracle, v);
      LinearOperator apply = [&m](std::span<const double> u) { return matvec(m, u); };
      cell.lissa = lissa_iterate(apply, v, spec.iters, &q).trace;

      if (on_cell) on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void BenchSpec::validate() const {
  if (dims.empty()) throw InvalidArgument("invert bench: dims must be nonempty");
  for (std::size_t d : dims)
    if (d == 0 || d > kMaxSyntheticDim)
      throw InvalidArgument("invert bench: d=" + std::to_string(d) + " outside [1, " + std::to_string(kMaxSyntheticDim) + "]");
  if (samples == 0 || seeds == 0 || iters == 0 || gmres_restart == 0)
    throw InvalidArgument("invert bench: samples, seeds, iters and restart must be positive");
  if (!(lambda > 0.0)) throw InvalidArgument("invert bench: lambda must be positive");
}

const std::vector<std::string>& bench_methods() {
  static const std::vector<std::string> names = {"ge", "cg", "gmres", "schulz"};
  return names;
}

const BenchRow& BenchReport::row(const std::string& method, std::size_t d) const {
  for (const auto& r : rows)
    if (r.method == method && r.d == d) return r;
  throw InvalidArgument("invert bench: no row for " + method + " at d=" + std::to_string(d));
}

BenchReport run_invert_bench(const BenchSpec& spec, const BenchCallback& on_sample) {
  spec.validate();
  using clock = std::chrono::steady_clock;
  BenchReport out;
  for (std::size_t d : spec.dims) {
    for (std::size_t run = 0; run < spec.seeds; ++run) {
      const DenseMatrix m = synthetic_matrix(make_synthetic_samples(d, spec.samples, spec.sample_scale, spec.seed + run),
                                             spec.lambda);
      auto record = [&](const std::string& method, const DenseMatrix& x, const DenseMatrix& truth, double secs) {
        BenchSample s;
        s.method = method;
        s.d = d;
        s.run = run;
        s.error = frobenius_norm(subtract(x, truth));
        s.relative_error = s.error / frobenius_norm(truth);
        s.seconds = secs;
        if (on_sample) on_sample(s);
        out.samples.push_back(s);
      };

      auto t0 = clock::now();
      const DenseMatrix ge = gaussian_inverse(m);
      record("ge", ge, ge, seconds_since(t0));

      const DenseMatrix eye = DenseMatrix::identity(d);
      t0 = clock::now();
      MultiSolveResult cg = cg_solve_columns(SpdMatrix(m), eye, spec.iters, spec.solver_tol);
      record("cg", cg.x, ge, seconds_since(t0));

      t0 = clock::now();
      MultiSolveResult gm = gmres_solve_columns(m, eye, spec.gmres_restart, spec.iters, spec.solver_tol);
      record("gmres", gm.x, ge, seconds_since(t0));

      IterationConfig cfg;
      cfg.max_iters = spec.iters;
      cfg.init_scale = spec.init_scale;
      t0 = clock::now();
      InverseResult sz = schulz_inverse(m, cfg);
      record("schulz", sz.inverse, ge, seconds_since(t0));
    }
  }

  for (std::size_t d : spec.dims) {
    for (const auto& method : bench_methods()) {
      std::vector<double> err, rel, secs;
      for (const auto& s : out.samples)
        if (s.d == d && s.method == method) {
          err.push_back(s.error);
          rel.push_back(s.relative_error);
          secs.push_back(s.seconds);
        }
      BenchRow row;
      row.method = method;
      row.d = d;
      row.runs = err.size();
      row.error_mean = mean_of(err);
      row.error_std = sample_std(err);
      row.relative_error_mean = mean_of(rel);
      row.seconds_mean = mean_of(secs);
      row.seconds_std = sample_std(secs);
      out.rows.push_back(row);
    }
  }
  return out;
}

void ToyTask::validate() const {
  if (classes < 2) throw InvalidArgument("toy task: need at least two classes");
  if (dim == 0) throw InvalidArgument("toy task: dim must be positive");
  if (n_train == 0 || n_val == 0 || n_test == 0) throw InvalidArgument("toy task: every split needs examples");
  if (!(flip_fraction >= 0.0 && flip_fraction < 1.0)) throw InvalidArgument("toy task: flip fraction must be in [0, 1)");
  if (!(class_separation >= 0.0)) throw InvalidArgument("toy task: class separation must be nonnegative");
}

ToyData make_toy_data(const ToyTask& task) {
  task.validate();
  auto rng = stream({task.seed, 0x70795ULL});
  std::normal_distribution<double> normal;
  const std::size_t d = task.dim, classes = task.classes;

  // Random unit directions, centered, then scaled to the requested norm.
  DenseMatrix means(classes, d);
  for (std::size_t c = 0; c < classes; ++c) {
    double nrm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      means(c, j) = normal(rng);
      nrm += means(c, j) * means(c, j);
    }
    nrm = std::sqrt(nrm);
    for (std::size_t j = 0; j < d; ++j) means(c, j) /= nrm;
  }
  for (std::size_t j = 0; j < d; ++j) {
    double avg = 0.0;
    for (std::size_t c = 0; c < classes; ++c) avg += means(c, j);
    avg /= static_cast<double>(classes);
    for (std::size_t c = 0; c < classes; ++c) means(c, j) -= avg;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const double nrm = norm2(means.row(c));
    if (nrm > 0.0)
      for (std::size_t j = 0; j < d; ++j) means(c, j) *= task.class_separation / nrm;
  }

  std::uniform_int_distribution<int> pick_class(0, static_cast<int>(classes) - 1);
  auto draw = [&](std::size_t n) {
    logistic::LabeledData out{DenseMatrix(n, d), std::vector<int>(n)};
    for (std::size_t k = 0; k < n; ++k) {
      const int y = pick_class(rng);
      out.y[k] = y;
      for (std::size_t j = 0; j < d; ++j) out.x(k, j) = means(static_cast<std::size_t>(y), j) + normal(rng);
    }
    return out;
  };

  ToyData data;
  data.train = draw(task.n_train);
  data.val = draw(task.n_val);
  data.test = draw(task.n_test);
  data.clean_train_labels = data.train.y;

  const auto n_flip = static_cast<std::size_t>(std::llround(task.flip_fraction * static_cast<double>(task.n_train)));
  std::vector<std::size_t> order(task.n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  data.flipped.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_flip));
  std::sort(data.flipped.begin(), data.flipped.end());
  std::uniform_int_distribution<int> shift(1, static_cast<int>(classes) - 1);
  for (std::size_t k : data.flipped)
    data.train.y[k] = (data.train.y[k] + shift(rng)) % static_cast<int>(classes);
  return data;
}

ToyModel train_toy_model(const ToyTask& task) {
  ToyModel model;
  model.data = make_toy_data(task);
  model.fit = logistic::train(model.data.train, task.classes, task.train);

  const auto& w = model.fit.w;
  const std::size_t n = task.n_train;
  GradientDump& dump = model.dump;
  dump.blocks = {{"W", w.rows(), w.cols()}};
  dump.train_grads.assign(1, {});
  dump.train_grads[0].reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    dump.train_grads[0].push_back(
        GradientBlock::ingest("W", logistic::example_gradient(w, model.data.train.x.row(k), model.data.train.y[k])));
    dump.example_ids.push_back(std::to_string(k));
  }
  dump.val_grads = {GradientBlock::ingest("W", logistic::mean_gradient(w, model.data.val))};
  return model;
}

std::vector<double> default_p_grid() {
  std::vector<double> grid;
  for (int p = 5; p <= 100; p += 5) grid.push_back(p);
  return grid;
}

double detection_ratio(const InfluenceReport& report, const std::vector<std::size_t>& flipped, double p) {
  if (flipped.empty()) throw InvalidArgument("detection ratio: no flipped examples");
  const auto top = rank_examples(report, RankMode::MostHarmful, p);
  std::size_t hits = 0;
  for (std::size_t k : top)
    if (std::binary_search(flipped.begin(), flipped.end(), k)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(flipped.size());
}

MeanInterval mean_ci95(const std::vector<double>& values) {
  MeanInterval out;
  out.mean = mean_of(values);
  out.low = out.high = out.mean;
  if (values.size() >= 2) {
    const boost::math::students_t dist(static_cast<double>(values.size() - 1));
    const double half = boost::math::quantile(dist, 0.975) * sample_std(values) / std::sqrt(static_cast<double>(values.size()));
    out.low = out.mean - half;
    out.high = out.mean + half;
  }
  return out;
}

const DetectionCurve& DetectionReport::curve(const std::string& estimator) const {
  for (const auto& c : curves)
    if (c.estimator == estimator) return c;
  throw InvalidArgument("detection report: no curve for '" + estimator + "'");
}

DetectionReport run_detection(const ToyTask& task, const std::vector<std::string>& estimators,
                              const std::vector<double>& p_grid, std::size_t seeds, const EstimatorSettings& settings) {
  task.validate();
  if (!(task.flip_fraction > 0.0)) throw InvalidArgument("detection: flip fraction must be positive");
  if (seeds == 0) throw InvalidArgument("detection: need at least one seed");
  if (p_grid.empty()) throw InvalidArgument("detection: empty p grid");

  DetectionReport rep;
  rep.p_grid = p_grid;
  for (const auto& name : estimators) rep.curves.push_back({name, {}, {}, {}, {}});

  for (std::size_t s = 0; s < seeds; ++s) {
    ToyTask t = task;
    t.seed = task.seed + s;
    rep.seeds.push_back(t.seed);
    const ToyModel model = train_toy_model(t);
    if (!model.fit.converged)
      rep.warnings.push_back("seed " + std::to_string(t.seed) + ": training stopped at gradient norm " +
                             std::to_string(model.fit.grad_norm));
    const auto& flipped = model.data.flipped;
    if (flipped.empty()) throw InvalidArgument("detection: flip fraction rounds to zero examples");

    if (s == 0) {
      const double n = static_cast<double>(t.n_train), nf = static_cast<double>(flipped.size());
      for (double p : p_grid) {
        const double count = std::min(n, std::ceil(p * n / 100.0 - 1e-9));
        rep.oracle.push_back(std::min(count, nf) / nf);
        rep.random.push_back(count / n);
      }
    }

    for (auto& curve : rep.curves) {
      const InfluenceReport r = run_estimator(curve.estimator, model.dump, settings);
      for (const auto& w : r.warnings) rep.warnings.push_back("seed " + std::to_string(t.seed) + " " + curve.estimator + ": " + w);
      std::vector<double> row;
      for (double p : p_grid) row.push_back(detection_ratio(r, flipped, p));
      curve.recall.push_back(std::move(row));
    }
  }

  for (auto& curve : rep.curves) {
    for (std::size_t i = 0; i < p_grid.size(); ++i) {
      std::vector<double> at;
      for (const auto& row : curve.recall) at.push_back(row[i]);
      const MeanInterval ci = mean_ci95(at);
      curve.mean.push_back(ci.mean);
      curve.ci_low.push_back(ci.low);
      curve.ci_high.push_back(ci.high);
    }
  }
  return rep;
}

const SelectionCell& SelectionReport::cell(const std::string& estimator, double k_percent) const {
  for (const auto& c : cells)
    if (c.estimator == estimator && c.k_percent == k_percent) return c;
  throw InvalidArgument("selection report: no cell for '" + estimator + "' at k=" + std::to_string(k_percent));
}

SelectionReport run_selection(const ToyTask& task, const std::vector<std::string>& estimators,
                              const std::vector<double>& k_grid, std::size_t seeds, const EstimatorSettings& settings) {
  task.validate();
  if (seeds == 0) throw InvalidArgument("selection: need at least one seed");
  if (k_grid.empty()) throw InvalidArgument("selection: empty k grid");
  for (double k : k_grid)
    if (!(k > 0.0 && k <= 100.0)) throw InvalidArgument("selection: k must be in (0, 100]");

  SelectionReport rep;
  rep.k_grid = k_grid;
  std::vector<std::string> columns = estimators;
  columns.push_back("random");
  for (const auto& name : columns)
    for (double k : k_grid) rep.cells.push_back({name, k, {}, {}, {}});
  rep.cells.push_back({"full", 100.0, {}, {}, {}});

  auto fit_subset = [&](const ToyModel& model, std::vector<std::size_t> idx, SelectionCell& cell) {
    if (idx.size() < task.classes) {
      cell.skipped = "subset of " + std::to_string(idx.size()) + " examples is smaller than the class count";
      cell.accuracy.push_back(NAN);
      return;
    }
    std::sort(idx.begin(), idx.end());
    const auto& train = model.data.train;
    logistic::LabeledData sub{DenseMatrix(idx.size(), train.x.cols()), {}};
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto src = train.x.row(idx[i]);
      for (std::size_t j = 0; j < src.size(); ++j) sub.x(i, j) = src[j];
      sub.y.push_back(train.y[idx[i]]);
    }
    const auto fit = logistic::train(sub, task.classes, task.train);
    cell.accuracy.push_back(logistic::accuracy(fit.w, model.data.test));
  };

  for (std::size_t s = 0; s < seeds; ++s) {
    ToyTask t = task;
    t.seed = task.seed + s;
    rep.seeds.push_back(t.seed);
    const ToyModel model = train_toy_model(t);
    const std::size_t n = t.n_train;

    std::vector<InfluenceReport> reports;
    for (const auto& name : estimators) reports.push_back(run_estimator(name, model.dump, settings));

    auto rng = stream({t.seed, 0x5e1ecULL});
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    std::size_t c = 0;
    for (std::size_t e = 0; e < estimators.size(); ++e)
      for (double k : k_grid) fit_subset(model, rank_examples(reports[e], RankMode::MostHelpful, k), rep.cells[c++]);
    for (double k : k_grid) {
      const auto count = std::min(n, static_cast<std::size_t>(std::ceil(k * static_cast<double>(n) / 100.0 - 1e-9)));
      fit_subset(model, std::vector<std::size_t>(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count)),
                 rep.cells[c++]);
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    fit_subset(model, all, rep.cells[c]);
  }

  for (auto& cell : rep.cells) {
    std::vector<double> ok;
    for (double a : cell.accuracy)
      if (!std::isnan(a)) ok.push_back(a);
    if (ok.empty()) {
      cell.summary = {NAN, NAN, NAN};
    } else {
      cell.summary = mean_ci95(ok);
    }
  }
  return rep;
}

}  // namespace hyperinf
