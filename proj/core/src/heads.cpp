// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fm3/error.hpp"

namespace fm3 {

HeadType head_type(const Head& head) {
  return std::holds_alternative<LogisticHead>(head) ? HeadType::logistic : HeadType::softmax;
}

std::size_t head_input_dim(const Head& head) {
  return std::visit([](const auto& h) { return h.weight.dim(0); }, head);
}

std::size_t head_num_classes(const Head& head) {
  if (const auto* s = std::get_if<SoftmaxHead>(&head)) return s->bias.size();
  return 2;
}

Head zero_head(HeadType type, std::size_t dim, std::size_t num_classes, std::size_t task_id) {
  if (type == HeadType::logistic) return LogisticHead{Tensor({dim}), 0.0, task_id};
  return SoftmaxHead{Tensor({dim, num_classes}), Tensor({num_classes}), task_id};
}

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double log1pexp(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Parameters packed as [W (d x c, row-major) | b (c)]; c = 1 for logistic.
struct Problem {
  const Tensor& x;
  std::span<const std::size_t> labels;
  HeadType type;
  std::size_t d, c;
  double l2;

  std::size_t num_params() const { return d * c + c; }

  // Objective value; fills grad when non-null.
  double evaluate(const std::vector<double>& p, std::vector<double>* grad) const {
    const std::size_t n = x.dim(0);
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    double loss = 0.0;
    std::vector<double> z(c), r(c);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.data().data() + i * d;
      for (std::size_t k = 0; k < c; ++k) z[k] = p[d * c + k];
      for (std::size_t j = 0; j < d; ++j) {
        const double xv = xi[j];
        for (std::size_t k = 0; k < c; ++k) z[k] += xv * p[j * c + k];
      }
      if (type == HeadType::logistic) {
        const double y = static_cast<double>(labels[i]);
        loss += log1pexp(z[0]) - y * z[0];
        r[0] = sigmoid(z[0]) - y;
      } else {
        const double mx = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += std::exp(z[k] - mx);
        const double lse = mx + std::log(s);
        loss += lse - z[labels[i]];
        for (std::size_t k = 0; k < c; ++k) r[k] = std::exp(z[k] - lse);
        r[labels[i]] -= 1.0;
      }
      if (grad) {
        auto& g = *grad;
        for (std::size_t j = 0; j < d; ++j) {
          const double xv = xi[j] * inv_n;
          for (std::size_t k = 0; k < c; ++k) g[j * c + k] += xv * r[k];
        }
        for (std::size_t k = 0; k < c; ++k) g[d * c + k] += r[k] * inv_n;
      }
    }
    loss *= inv_n;
    double reg = 0.0;
    for (std::size_t i = 0; i < d * c; ++i) {
      reg += p[i] * p[i];
      if (grad) (*grad)[i] += 2.0 * l2 * p[i];
    }
    return loss + l2 * reg;
  }
};

Head unpack(const std::vector<double>& p, HeadType type, std::size_t d, std::size_t c, std::size_t task_id) {
  if (type == HeadType::logistic) {
    return LogisticHead{Tensor({d}, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d))),
                        p[d], task_id};
  }
  return SoftmaxHead{
      Tensor({d, c}, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d * c))),
      Tensor({c}, std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(d * c), p.end())), task_id};
}

std::vector<double> pack(const Head& head) {
  if (const auto* l = std::get_if<LogisticHead>(&head)) {
    std::vector<double> p(l->weight.values());
    p.push_back(l->bias);
    return p;
  }
  const auto& s = std::get<SoftmaxHead>(head);
  std::vector<double> p(s.weight.values());
  p.insert(p.end(), s.bias.values().begin(), s.bias.values().end());
  return p;
}

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

HeadFit fit_head(const Tensor& embeddings, std::span<const std::size_t> labels, HeadType type,
                 std::size_t num_classes, const HeadFitOptions& options, std::size_t task_id) {
  if (embeddings.rank() != 2) throw ShapeError("fit_head: embeddings must be [n x d]");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  if (n == 0) throw std::invalid_argument("fit_head: no training examples");
  if (labels.size() != n) throw ShapeError("fit_head: label count mismatch");
  if (type == HeadType::logistic && num_classes != 2) throw std::invalid_argument("logistic head is binary");
  for (auto y : labels)
    if (y >= num_classes) throw std::out_of_range("fit_head: label " + std::to_string(y) + " out of range");

  if (type == HeadType::logistic && std::all_of(labels.begin(), labels.end(), [&](auto y) { return y == labels[0]; })) {
    const double logit = std::log((static_cast<double>(n) + 0.5) / 0.5);
    HeadFit fit{LogisticHead{Tensor({d}), labels[0] == 1 ? logit : -logit, task_id}, true, 0, 0.0, 0.0};
    fit.objective = head_objective(fit.head, embeddings, labels, options.l2);
    return fit;
  }

  const std::size_t c = type == HeadType::logistic ? 1 : num_classes;
  Problem prob{embeddings, labels, type, d, c, options.l2};

  // Smoothness bound: curvature of the loss in the logits (1/4 or 1/2) times the
  // trace of the augmented second-moment matrix, plus the ridge term.
  double trace = 1.0;
  for (double v : embeddings.data()) trace += v * v / static_cast<double>(n);
  const double curvature = type == HeadType::logistic ? 0.25 : 0.5;
  const double lipschitz = curvature * trace + 2.0 * options.l2;
  const double mu = 2.0 * options.l2;
  const double momentum = mu > 0.0 ? (std::sqrt(lipschitz / mu) - 1.0) / (std::sqrt(lipschitz / mu) + 1.0) : 0.9;
  const double step = 1.0 / lipschitz;

  std::vector<double> x(prob.num_params(), 0.0), x_prev = x, y = x, g(x.size());
  HeadFit fit;
  std::size_t it = 0;
  for (; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + momentum * (x[i] - x_prev[i]);
    prob.evaluate(y, &g);
    fit.grad_norm = norm(g);
    if (fit.grad_norm < options.tolerance) {
      x = y;
      break;
    }
    x_prev = x;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] - step * g[i];
  }
  fit.objective = prob.evaluate(x, &g);
  fit.grad_norm = norm(g);
  fit.iterations = it;
  fit.head = unpack(x, type, d, c, task_id);
  return fit;
}

double head_objective(const Head& head, const Tensor& embeddings, std::span<const std::size_t> labels, double l2) {
  const HeadType type = head_type(head);
  const std::size_t c = type == HeadType::logistic ? 1 : head_num_classes(head);
  Problem prob{embeddings, labels, type, head_input_dim(head), c, l2};
  return prob.evaluate(pack(head), nullptr);
}

Prediction predict(const Head& head, std::span<const double> embedding) {
  const std::size_t d = head_input_dim(head);
  if (embedding.size() != d) {
    throw ShapeError("predict: head expects dim " + std::to_string(d) + ", got " + std::to_string(embedding.size()));
  }
  Prediction out;
  if (const auto* l = std::get_if<LogisticHead>(&head)) {
    const double z = dot(l->weight.data().data(), embedding.data(), d) + l->bias;
    const double p1 = sigmoid(z);
    out.probabilities = {1.0 - p1, p1};
    out.label = p1 > 0.5 ? 1 : 0;
    return out;
  }
  const auto& s = std::get<SoftmaxHead>(head);
  const std::size_t c = s.bias.size();
  std::vector<double> z(s.bias.values());
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < c; ++k) z[k] += embedding[j] * s.weight[j * c + k];
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) total += (v = std::exp(v - mx));
  for (auto& v : z) v /= total;
  out.label = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  out.probabilities = std::move(z);
  return out;
}

MetricSet compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          HeadType type, std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("compute_metrics: length mismatch");
  if (labels.empty()) throw std::invalid_argument("compute_metrics: no examples");
  const std::size_t n = labels.size();
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (predictions[i] >= num_classes || labels[i] >= num_classes) throw std::out_of_range("class index out of range");
    if (predictions[i] == labels[i]) {
      ++correct;
      ++tp[labels[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[labels[i]];
    }
  }
  auto f1_of = [&](std::size_t k) {
    const double precision = tp[k] + fp[k] ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k]) : 0.0;
    const double recall = tp[k] + fn[k] ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k]) : 0.0;
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  };
  MetricSet m;
  m.n_eval = n;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  if (type == HeadType::logistic) {
    m.f1 = f1_of(1);
  } else {
    double s = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) s += f1_of(k);
    m.f1 = s / static_cast<double>(num_classes);
  }
  return m;
}

}  // namespace fm3
