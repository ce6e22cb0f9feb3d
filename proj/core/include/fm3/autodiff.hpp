// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation in execution order, so recording order is a
// valid topological order and backward() is a single reverse sweep. Values
// are checked for NaN/Inf as they are recorded.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "fm3/tensor.hpp"

namespace fm3 {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf owning a copy of `value`; never receives gradient.
  Var constant(Tensor value);
  /// Leaf owning a copy of `value` that accumulates gradient.
  Var parameter(Tensor value);
  /// Leaf referring to caller-owned storage, which must outlive the tape.
  Var external(const Tensor& value, bool requires_grad);

  const Tensor& value(Var v) const { return value(v.id); }
  const Tensor& value(std::size_t id) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() root with respect to `v` (zeros when unreached).
  Tensor grad(Var v) const;
  /// Mutable gradient slot used by backward rules; allocated on first touch.
  Tensor& grad_slot(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].grad_allocated; }

  /// Seeds d(root)/d(root) = 1 and propagates to every requiring leaf.
  void backward(Var root);

  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, Backward rule,
             std::uint64_t flops = 0);

  std::size_t size() const { return nodes_.size(); }
  /// Multiply-accumulate count of all recorded matrix products.
  std::uint64_t flops() const { return flops_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool grad_allocated = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Backward rule;
  };

  std::vector<Node> nodes_;
  std::uint64_t flops_ = 0;
};

// Operations. Every op records a backward rule when any input requires grad.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// x[n x m] + b[m] broadcast over rows.
Var add_bias(Var x, Var b);
Var tanh(Var a);
Var relu(Var a);
Var reshape(Var a, Shape shape);
Var sum(Var a);
Var mean(Var a);
/// Row sums of a matrix, shape [n].
Var sum_cols(Var a);
Var concat_cols(std::span<const Var> parts);
/// Row `index` of a matrix as a [1 x d] matrix.
Var select_row(Var table, std::size_t index);
/// For each token list, the mean of the selected table rows -> [n x d].
/// Rows of x in the given order (repeats allowed).
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var gather_mean(Var table, std::span<const std::vector<std::uint32_t>> tokens);
/// Row-wise layer normalization with learned gain and bias, each [h].
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Divides each row by its L2 norm. Zero rows are an error.
Var l2_normalize_rows(Var x);
/// Row-wise cosine similarity of two equally shaped matrices -> [n].
Var cosine_rows(Var a, Var b);
/// Cosine similarity of two vectors, as a scalar.
Var cosine_similarity(Var u, Var v);
/// Mean over rows of -log softmax(logits)[label], max-subtracted.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
/// Mean logistic loss for logits [n] and labels in {0, 1}.
Var binary_cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels);

}  // namespace fm3
