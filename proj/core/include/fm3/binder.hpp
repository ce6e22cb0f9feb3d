// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unordered_map>

#include "fm3/autodiff.hpp"

namespace fm3 {

/// Maps model-owned tensors onto tape leaves, once per tensor.
///
/// Bound tensors are referenced, not copied, so they must stay alive and
/// unmodified for the lifetime of the tape.
class ParamBinder {
 public:
  explicit ParamBinder(Tape& tape) : tape_(tape) {}

  Var operator()(const Tensor& t, bool trainable) {
    auto it = vars_.find(&t);
    if (it != vars_.end()) return it->second;
    Var v = tape_.external(t, trainable);
    vars_.emplace(&t, v);
    return v;
  }

  /// Gradient accumulated for `t` by the last backward pass (zeros if unbound).
  Tensor grad(const Tensor& t) const {
    auto it = vars_.find(&t);
    if (it == vars_.end()) return Tensor(t.shape());
    return tape_.grad(it->second);
  }

  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  std::unordered_map<const Tensor*, Var> vars_;
};

}  // namespace fm3
