// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <variant>
#include <vector>

#include "fm3/multitask.hpp"
#include "fm3/tensor.hpp"

namespace fm3 {

struct LogisticHead {
  Tensor weight;  // [d]
  double bias = 0.0;
  std::size_t task_id = 0;
};

struct SoftmaxHead {
  Tensor weight;  // [d x c]
  Tensor bias;    // [c]
  std::size_t task_id = 0;
};

using Head = std::variant<LogisticHead, SoftmaxHead>;

HeadType head_type(const Head& head);
std::size_t head_input_dim(const Head& head);
std::size_t head_num_classes(const Head& head);

/// All-zero head: uniform probabilities, predicts class 0.
Head zero_head(HeadType type, std::size_t dim, std::size_t num_classes, std::size_t task_id = 0);

struct HeadFitOptions {
  double l2 = 1e-3;
  std::size_t max_iters = 5000;
  double tolerance = 1e-6;
};

struct HeadFit {
  Head head;
  /// Logistic head trained on a single class: constant predictor.
  bool degenerate = false;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  double objective = 0.0;
};

/// Minimises mean cross-entropy + l2 * ||W||^2 (bias unpenalised) from a zero
/// start with Nesterov-accelerated full-batch gradient descent, stopping when
/// the gradient norm falls below tolerance or after max_iters.
HeadFit fit_head(const Tensor& embeddings, std::span<const std::size_t> labels, HeadType type,
                 std::size_t num_classes, const HeadFitOptions& options = {}, std::size_t task_id = 0);

/// Training objective of `head` on a dataset, as minimised by fit_head.
double head_objective(const Head& head, const Tensor& embeddings, std::span<const std::size_t> labels, double l2);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// Class probabilities; argmax ties go to the lower class index.
Prediction predict(const Head& head, std::span<const double> embedding);

struct MetricSet {
  double accuracy = 0.0;
  /// Positive-class F1 for binary heads, macro-F1 otherwise.
  double f1 = 0.0;
  std::size_t n_eval = 0;
};

MetricSet compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          HeadType type, std::size_t num_classes);

}  // namespace fm3
