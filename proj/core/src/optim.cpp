// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fm3/error.hpp"

namespace fm3 {

std::int64_t LrSchedule::hold_end() const {
  const auto frac_end = static_cast<std::int64_t>(std::floor(constant_until_frac * static_cast<double>(total_steps)));
  return std::max(warmup_steps, frac_end);
}

void LrSchedule::validate() const {
  if (peak_lr < 0.0) throw ConfigError("peak_lr must be non-negative");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (!(constant_until_frac > 0.0 && constant_until_frac <= 1.0)) {
    throw ConfigError("constant_until_frac must lie in (0, 1]");
  }
  if (!(decay_rate > 0.0 && decay_rate < 1.0)) throw ConfigError("decay_rate must lie in (0, 1)");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
}

double lr_at_step(const LrSchedule& sched, std::int64_t step) {
  if (step < 0 || step > sched.total_steps) {
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " +
                            std::to_string(sched.total_steps) + "]");
  }
  if (step < sched.warmup_steps) {
    return sched.peak_lr * static_cast<double>(step) / static_cast<double>(sched.warmup_steps);
  }
  const std::int64_t hold = sched.hold_end();
  if (step <= hold) return sched.peak_lr;
  return sched.peak_lr * std::pow(sched.decay_rate, static_cast<double>(step - hold));
}

AdamWState AdamWState::init(std::span<Tensor* const> params, std::vector<double> weight_decay,
                            double beta1, double beta2, double epsilon) {
  if (weight_decay.size() != params.size()) {
    throw ShapeError("AdamW: one weight-decay value per parameter required");
  }
  AdamWState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.weight_decay = std::move(weight_decay);
  for (const Tensor* p : params) {
    s.first_moment.emplace_back(p->shape());
    s.second_moment.emplace_back(p->shape());
  }
  return s;
}

void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamWState& state,
                double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("AdamW: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() || params[k]->shape() != state.first_moment[k].shape()) {
      throw ShapeError("AdamW: shape mismatch for parameter " + std::to_string(k));
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    const double decay = lr * state.weight_decay[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
      p[i] -= decay * p[i];
    }
  }
}

double global_norm(std::span<const Tensor> grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.data()) v *= f;
    return global_norm(grads);
  }
  return norm;
}

}  // namespace fm3
