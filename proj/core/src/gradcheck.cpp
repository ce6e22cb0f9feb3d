// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fm3/error.hpp"

namespace fm3 {

namespace {

double evaluate(const ScalarFunction& f, std::span<const Tensor> point) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const auto& t : point) vars.push_back(tape.constant(t));
  const double v = f(tape, vars).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, std::span<const Tensor> point, double step,
                           double abs_tol) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : point) vars.push_back(tape.parameter(t));
  Var out = f(tape, vars);
  if (!std::isfinite(out.value().item())) throw NumericError("grad_check: function value is not finite");
  tape.backward(out);

  GradCheckResult result;
  std::vector<Tensor> probe(point.begin(), point.end());
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + step;
      const double up = evaluate(f, probe);
      probe[k][i] = orig - step;
      const double down = evaluate(f, probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double diff = std::abs(analytic[i] - numeric);
      result.max_abs_error = std::max(result.max_abs_error, diff);
      if (diff > abs_tol) {
        const double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
        result.max_rel_error = std::max(result.max_rel_error, diff / denom);
      }
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace fm3
