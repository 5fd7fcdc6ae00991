#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hyperinf/dense.hpp"
#include "hyperinf/estimators.hpp"
#include "hyperinf/hyperpower.hpp"
#include "hyperinf/logistic.hpp"

namespace hyperinf {

// Synthetic inverse problem M = sum_i s_i s_i^T + lambda I with s_i ~ N(0, sample_scale^2 I_d).
struct SyntheticSpec {
  std::vector<std::size_t> dims{512, 1024, 2048, 4096};
  std::vector<std::size_t> sample_counts{200, 800, 6400, 12800};
  double lambda = 0.01;
  double init_scale = 5e-4;
  std::size_t iters = 25;
  std::uint64_t seed = 0;
  // Standard deviation of the entries of s_i. With 1.0 the spectrum of M at
  // N = 12800 reaches ~3e4 and the 5e-4 I start no longer converges.
  double sample_scale = 0.1;

  void validate() const;
};

inline constexpr std::size_t kMaxSyntheticDim = 8192;

// N x d matrix whose rows are the s_i. Each (d, N) cell gets its own stream.
DenseMatrix make_synthetic_samples(std::size_t d, std::size_t n, double scale, std::uint64_t seed);
// S^T S + lambda I.
DenseMatrix synthetic_matrix(const DenseMatrix& samples, double lambda);
// The dense matrix DataInf would use for M^{-1}: gradients g_i = sqrt(N) s_i
// make (1/N) sum g_i g_i^T equal sum s_i s_i^T.
DenseMatrix synthetic_datainf_inverse(const DenseMatrix& samples, double lambda);

struct ConvergenceCell {
  std::size_t d = 0;
  std::size_t n = 0;
  double lambda_max = 0.0;      // power-iteration estimate for M
  double oracle_norm = 0.0;     // ||M^{-1}||_F
  ConvergenceTrace schulz;      // ||M^{-1} - X_t||_F
  double datainf_error = 0.0;   // ||M^{-1} - M_datainf^{-1}||_F
  ConvergenceTrace lissa;       // ||Q - Q_j||_2 / ||v||_2, Q = M^{-1} v

  double schulz_final_error() const;
  double schulz_final_relative() const { return schulz_final_error() / oracle_norm; }
};

using CellCallback = std::function<void(const ConvergenceCell&)>;

// Cells in dims-major order. Throws CapacityError for d > kMaxSyntheticDim.
std::vector<ConvergenceCell> run_convergence_test(const SyntheticSpec& spec, const CellCallback& on_cell = {});

struct BenchSpec {
  std::vector<std::size_t> dims{16, 64, 256, 1024};
  std::size_t samples = 12800;
  std::size_t seeds = 3;
  std::size_t iters = 20;
  std::size_t gmres_restart = 20;
  double lambda = 0.01;
  double init_scale = 5e-4;
  double sample_scale = 0.1;
  std::uint64_t seed = 0;
  // CG and GMRES stop a column early once its relative residual reaches this.
  double solver_tol = 1e-14;

  void validate() const;
};

struct BenchSample {
  std::string method;
  std::size_t d = 0;
  std::size_t run = 0;
  double error = 0.0;           // ||X - X_GE||_F
  double relative_error = 0.0;  // error / ||X_GE||_F
  double seconds = 0.0;
};

struct BenchRow {
  std::string method;
  std::size_t d = 0;
  std::size_t runs = 0;
  double error_mean = 0.0;
  double error_std = 0.0;
  double relative_error_mean = 0.0;
  double seconds_mean = 0.0;
  double seconds_std = 0.0;
};

struct BenchReport {
  std::vector<BenchSample> samples;
  std::vector<BenchRow> rows;

  const BenchRow& row(const std::string& method, std::size_t d) const;
};

// Methods, in order: "ge", "cg", "gmres", "schulz".
const std::vector<std::string>& bench_methods();

using BenchCallback = std::function<void(const BenchSample&)>;
BenchReport run_invert_bench(const BenchSpec& spec, const BenchCallback& on_sample = {});

struct ToyTask {
  std::size_t n_train = 500;
  std::size_t n_val = 100;
  std::size_t n_test = 500;
  std::size_t dim = 20;
  std::size_t classes = 2;
  double class_separation = 3.0;
  double flip_fraction = 0.2;
  std::uint64_t seed = 0;
  logistic::TrainOptions train{};

  void validate() const;
};

struct ToyData {
  logistic::LabeledData train;  // labels after flipping
  logistic::LabeledData val;
  logistic::LabeledData test;
  std::vector<int> clean_train_labels;
  std::vector<std::size_t> flipped;  // ascending
};

ToyData make_toy_data(const ToyTask& task);

struct ToyModel {
  ToyData data;
  logistic::TrainResult fit;
  // One block "W" (d x C). Validation gradient is the clean-validation mean.
  GradientDump dump;
};

ToyModel train_toy_model(const ToyTask& task);

struct DetectionCurve {
  std::string estimator;
  std::vector<std::vector<double>> recall;  // [seed][p]
  std::vector<double> mean;
  std::vector<double> ci_low;  // 95% Student-t interval over seeds
  std::vector<double> ci_high;
};

struct DetectionReport {
  std::vector<double> p_grid;
  std::vector<std::uint64_t> seeds;
  std::vector<DetectionCurve> curves;  // one per estimator, in request order
  std::vector<double> oracle;          // best achievable rt(p)
  std::vector<double> random;          // expected rt(p) of a uniform pick
  std::vector<std::string> warnings;

  const DetectionCurve& curve(const std::string& estimator) const;
};

std::vector<double> default_p_grid();

// |flipped ∩ top-p% by descending score| / |flipped|; flipped must be ascending.
double detection_ratio(const InfluenceReport& report, const std::vector<std::size_t>& flipped, double p);

struct MeanInterval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};
// Mean with a two-sided 95% t interval; a single value gives a zero-width interval.
MeanInterval mean_ci95(const std::vector<double>& values);

// Seeds task.seed, task.seed + 1, ...
DetectionReport run_detection(const ToyTask& task, const std::vector<std::string>& estimators,
                              const std::vector<double>& p_grid, std::size_t seeds,
                              const EstimatorSettings& settings = {});

struct SelectionCell {
  std::string estimator;  // an estimator name, "random" or "full"
  double k_percent = 0.0;
  std::vector<double> accuracy;  // per seed; NaN where skipped
  MeanInterval summary;
  std::string skipped;  // reason, empty when run
};

struct SelectionReport {
  std::vector<double> k_grid;
  std::vector<std::uint64_t> seeds;
  std::vector<SelectionCell> cells;

  const SelectionCell& cell(const std::string& estimator, double k_percent) const;
};

SelectionReport run_selection(const ToyTask& task, const std::vector<std::string>& estimators,
                              const std::vector<double>& k_grid, std::size_t seeds,
                              const EstimatorSettings& settings = {});

}  // namespace hyperinf
