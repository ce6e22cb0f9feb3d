// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fm3/tensor.hpp"

namespace fm3 {

/// Warmup, hold, then per-step exponential decay.
///
///   lr(t) = peak * t / warmup                 for t < warmup
///         = peak                              for warmup <= t <= hold_end
///         = peak * decay_rate^(t - hold_end)  afterwards
///
/// where hold_end = max(warmup, floor(constant_until_frac * total_steps)).
struct LrSchedule {
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 5000;
  double constant_until_frac = 0.8;
  double decay_rate = 0.99995;
  std::int64_t total_steps = 500000;

  std::int64_t hold_end() const;
  void validate() const;
};

double lr_at_step(const LrSchedule& sched, std::int64_t step);

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// One entry per parameter tensor.
  std::vector<double> weight_decay;

  /// Zero moments shaped like `params`.
  static AdamWState init(std::span<Tensor* const> params, std::vector<double> weight_decay,
                         double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
};

/// One bias-corrected Adam update followed by decoupled weight decay.
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamWState& state,
                double lr);

/// Rescales all gradients in place when their joint L2 norm exceeds max_norm.
/// Returns the joint norm after clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm = 1.0);

double global_norm(std::span<const Tensor> grads);

}  // namespace fm3
