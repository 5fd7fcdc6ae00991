#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hyperinf/dense.hpp"

// Multiclass logistic regression without bias, W in R^{d x C}, trained on the
// mean negative log-likelihood. Per-example gradients are x (p - e_y)^T.
namespace hyperinf::logistic {

struct LabeledData {
  DenseMatrix x;           // n x d
  std::vector<int> y;      // n labels in [0, C)

  std::size_t size() const noexcept { return y.size(); }
};

Vector softmax(std::span<const double> logits);
Vector probabilities(const DenseMatrix& w, std::span<const double> x);

double mean_nll(const DenseMatrix& w, const LabeledData& data);
DenseMatrix mean_gradient(const DenseMatrix& w, const LabeledData& data);
DenseMatrix example_gradient(const DenseMatrix& w, std::span<const double> x, int label);

// Analytic Hessian of the mean NLL in column-stacking vec order:
// (1/n) sum_i (diag(p_i) - p_i p_i^T) (x) x_i x_i^T, size dC x dC.
DenseMatrix hessian(const DenseMatrix& w, const DenseMatrix& x);

// (1/S) sum_s vec(g_s) vec(g_s)^T where sample s uses input x_{s mod n} and a
// label drawn from p(y | x, w). Its expectation is hessian(w, x).
DenseMatrix sampled_label_fim(const DenseMatrix& w, const DenseMatrix& x, std::size_t samples, std::uint64_t seed);

double accuracy(const DenseMatrix& w, const LabeledData& data);

struct TrainOptions {
  double learning_rate = 0.1;
  std::size_t max_steps = 5000;
  double grad_tol = 1e-4;
};

struct TrainResult {
  DenseMatrix w;
  std::size_t steps = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::vector<double> loss_history;  // loss before each step, then the final loss
};

// Full-batch gradient descent from W = 0. Stops at ||grad||_F <= grad_tol.
TrainResult train(const LabeledData& data, std::size_t classes, const TrainOptions& options = {});

}  // namespace hyperinf::logistic
