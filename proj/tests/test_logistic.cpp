#include <gtest/gtest.h>

#include <cmath>

#include "hyperinf/harness.hpp"
#include "hyperinf/logistic.hpp"
#include "oracles.hpp"

using namespace hyperinf;
using namespace hyperinf::logistic;

namespace {

LabeledData labeled_data(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed) {
  LabeledData data{oracle::random_matrix(n, d, seed), {}};
  for (std::size_t k = 0; k < n; ++k) data.y.push_back(static_cast<int>((k * 7 + seed) % classes));
  return data;
}

}  // namespace

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  const Vector p = softmax(Vector{1000.0, 1001.0, 999.0});
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  const Vector q = softmax(Vector{0.0, 1.0, -1.0});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(Logistic, GradientMatchesCentralDifferences) {
  const LabeledData data = labeled_data(30, 5, 3, 1);
  const DenseMatrix w = oracle::random_matrix(5, 3, 2, 0.5);
  const DenseMatrix g = mean_gradient(w, data);
  const double h = 1e-5;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      DenseMatrix plus = w, minus = w;
      plus(i, c) += h;
      minus(i, c) -= h;
      const double fd = (mean_nll(plus, data) - mean_nll(minus, data)) / (2 * h);
      EXPECT_NEAR(g(i, c), fd, 1e-6 * std::max(1.0, std::fabs(fd))) << i << "," << c;
    }
}

TEST(Logistic, BinaryReducesToSigmoidForm) {
  const LabeledData data = labeled_data(10, 4, 2, 3);
  const DenseMatrix w = oracle::random_matrix(4, 2, 4);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto x = data.x.row(k);
    double z = 0.0;
    for (std::size_t i = 0; i < 4; ++i) z += x[i] * (w(i, 1) - w(i, 0));
    const double p1 = 1.0 / (1.0 + std::exp(-z));
    const double y1 = data.y[k] == 1 ? 1.0 : 0.0;
    const DenseMatrix g = example_gradient(w, x, data.y[k]);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(g(i, 1), x[i] * (p1 - y1), 1e-14);
      EXPECT_NEAR(g(i, 0), -x[i] * (p1 - y1), 1e-14);
    }
  }
}

TEST(Logistic, HessianMatchesFiniteDifferencesOfGradient) {
  const LabeledData data = labeled_data(25, 3, 3, 5);
  const DenseMatrix w = oracle::random_matrix(3, 3, 6, 0.5);
  const DenseMatrix h = hessian(w, data.x);
  const double eps = 1e-6;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 3; ++i) {
      DenseMatrix plus = w, minus = w;
      plus(i, c) += eps;
      minus(i, c) -= eps;
      const Vector gp = vec(mean_gradient(plus, data)), gm = vec(mean_gradient(minus, data));
      for (std::size_t r = 0; r < 9; ++r) EXPECT_NEAR(h(r, c * 3 + i), (gp[r] - gm[r]) / (2 * eps), 1e-7);
    }
}

TEST(Logistic, SampledLabelFimApproachesHessian) {
  const DenseMatrix x = oracle::random_matrix(40, 5, 7);
  const DenseMatrix w = oracle::random_matrix(5, 3, 8, 0.5);
  const DenseMatrix h = hessian(w, x);
  const DenseMatrix f = sampled_label_fim(w, x, 100'000, 9);
  EXPECT_LE(oracle::frob_diff(f, h) / oracle::frob(h), 0.05);
}

TEST(Logistic, RejectsBadLabels) {
  LabeledData data = labeled_data(4, 2, 2, 10);
  data.y[2] = 5;
  EXPECT_THROW(mean_gradient(DenseMatrix(2, 2), data), InvalidArgument);
  EXPECT_THROW(train(data, 1), InvalidArgument);
}

TEST(Logistic, TrainingOnSeparableDataReachesHighAccuracy) {
  ToyTask task;
  task.flip_fraction = 0.0;
  const ToyModel m = train_toy_model(task);
  EXPECT_GE(accuracy(m.fit.w, m.data.val), 0.95);
  EXPECT_TRUE(m.data.flipped.empty());
}

TEST(Logistic, LossMonotoneOnDefaultTask) {
  const ToyModel m = train_toy_model(ToyTask{});
  const auto& loss = m.fit.loss_history;
  ASSERT_GT(loss.size(), 10u);
  for (std::size_t i = 1; i < loss.size(); ++i) EXPECT_LE(loss[i], loss[i - 1] + 1e-15) << i;
  EXPECT_EQ(loss.size(), m.fit.steps + 1);
}

TEST(Logistic, StopsOnGradientNorm) {
  const LabeledData data = labeled_data(50, 3, 2, 11);
  TrainOptions o;
  o.grad_tol = 1e-3;
  const TrainResult r = train(data, 2, o);
  if (r.converged) {
    EXPECT_LE(r.grad_norm, 1e-3);
  } else {
    EXPECT_EQ(r.steps, o.max_steps);
  }
  o.max_steps = 3;
  o.grad_tol = 0.0;
  const TrainResult capped = train(data, 2, o);
  EXPECT_EQ(capped.steps, 3u);
  EXPECT_FALSE(capped.converged);
}
