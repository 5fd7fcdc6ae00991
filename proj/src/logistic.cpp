#include "hyperinf/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace hyperinf::logistic {

namespace {

void check(const DenseMatrix& w, const LabeledData& data) {
  if (data.x.rows() != data.y.size()) throw ShapeError("logistic: label count does not match rows");
  if (data.x.cols() != w.rows()) throw ShapeError("logistic: input dimension does not match weights");
  for (int label : data.y)
    if (label < 0 || static_cast<std::size_t>(label) >= w.cols())
      throw InvalidArgument("logistic: label " + std::to_string(label) + " out of range");
}

}  // namespace

Vector softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double z = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - m);
    z += p[c];
  }
  for (double& v : p) v /= z;
  return p;
}

Vector probabilities(const DenseMatrix& w, std::span<const double> x) {
  if (x.size() != w.rows()) throw ShapeError("logistic: input dimension does not match weights");
  Vector logits(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t c = 0; c < w.cols(); ++c) logits[c] += x[i] * w(i, c);
  return softmax(logits);
}

double mean_nll(const DenseMatrix& w, const LabeledData& data) {
  check(w, data);
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    Vector logits(w.cols(), 0.0);
    const auto x = data.x.row(k);
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t c = 0; c < w.cols(); ++c) logits[c] += x[i] * w(i, c);
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    total += m + std::log(z) - logits[static_cast<std::size_t>(data.y[k])];
  }
  return total / static_cast<double>(data.size());
}

DenseMatrix example_gradient(const DenseMatrix& w, std::span<const double> x, int label) {
  Vector p = probabilities(w, x);
  p[static_cast<std::size_t>(label)] -= 1.0;
  DenseMatrix g(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t c = 0; c < w.cols(); ++c) g(i, c) = x[i] * p[c];
  return g;
}

DenseMatrix mean_gradient(const DenseMatrix& w, const LabeledData& data) {
  check(w, data);
  DenseMatrix g(w.rows(), w.cols());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const DenseMatrix gk = example_gradient(w, data.x.row(k), data.y[k]);
    for (std::size_t e = 0; e < g.size(); ++e) g.data()[e] += gk.data()[e];
  }
  return scale(g, 1.0 / static_cast<double>(data.size()));
}

DenseMatrix hessian(const DenseMatrix& w, const DenseMatrix& x) {
  if (x.cols() != w.rows()) throw ShapeError("logistic: input dimension does not match weights");
  const std::size_t d = w.rows(), classes = w.cols(), n = x.rows();
  DenseMatrix h(d * classes, d * classes);
  for (std::size_t k = 0; k < n; ++k) {
    const auto xk = x.row(k);
    const Vector p = probabilities(w, xk);
    for (std::size_t a = 0; a < classes; ++a)
      for (std::size_t b = 0; b < classes; ++b) {
        const double s = (a == b ? p[a] : 0.0) - p[a] * p[b];
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) h(a * d + i, b * d + j) += s * xk[i] * xk[j];
      }
  }
  return scale(h, 1.0 / static_cast<double>(n));
}

DenseMatrix sampled_label_fim(const DenseMatrix& w, const DenseMatrix& x, std::size_t samples, std::uint64_t seed) {
  if (x.cols() != w.rows()) throw ShapeError("logistic: input dimension does not match weights");
  if (samples == 0) throw InvalidArgument("logistic: need at least one sample");
  const std::size_t d = w.rows(), classes = w.cols(), n = x.rows(), p = d * classes;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> probs;
  for (std::size_t k = 0; k < n; ++k) probs.push_back(probabilities(w, x.row(k)));

  DenseMatrix acc(p, p);
  Vector g(p);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t k = s % n;
    const Vector& pk = probs[k];
    double u = unit(rng);
    std::size_t label = classes - 1;
    for (std::size_t c = 0; c < classes; ++c) {
      if (u < pk[c]) {
        label = c;
        break;
      }
      u -= pk[c];
    }
    const auto xk = x.row(k);
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = pk[c] - (c == label ? 1.0 : 0.0);
      for (std::size_t i = 0; i < d; ++i) g[c * d + i] = xk[i] * e;
    }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) acc(i, j) += g[i] * g[j];
  }
  return scale(acc, 1.0 / static_cast<double>(samples));
}

double accuracy(const DenseMatrix& w, const LabeledData& data) {
  check(w, data);
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Vector p = probabilities(w, data.x.row(k));
    const auto best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best == data.y[k]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const LabeledData& data, std::size_t classes, const TrainOptions& options) {
  if (classes < 2) throw InvalidArgument("logistic: need at least two classes");
  if (data.size() == 0) throw InvalidArgument("logistic: empty training set");
  TrainResult out;
  out.w = DenseMatrix(data.x.cols(), classes);
  for (std::size_t step = 0;; ++step) {
    const DenseMatrix g = mean_gradient(out.w, data);
    out.grad_norm = frobenius_norm(g);
    out.loss_history.push_back(mean_nll(out.w, data));
    out.steps = step;
    if (out.grad_norm <= options.grad_tol) {
      out.converged = true;
      break;
    }
    if (step == options.max_steps) break;
    for (std::size_t e = 0; e < g.size(); ++e) out.w.data()[e] -= options.learning_rate * g.data()[e];
  }
  return out;
}

}  // namespace hyperinf::logistic
