// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>

#include "fm3/autodiff.hpp"

namespace fm3 {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
};

/// Builds a scalar on the given tape from one Var per input tensor.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients with central differences at `point`.
///
/// Per coordinate the error is |analytic - numeric| / max(|analytic|, |numeric|),
/// except that differences below `abs_tol` count as zero.
GradCheckResult grad_check(const ScalarFunction& f, std::span<const Tensor> point,
                           double step = 1e-5, double abs_tol = 1e-8);

}  // namespace fm3
