// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "fm3/autodiff.hpp"
#include "fm3/tensor.hpp"

namespace fm3 {

/// Adapter slots per encoder layer: after the block nonlinearity and after the
/// residual sum.
inline constexpr std::size_t kAdapterPositions = 2;

/// Weights of one bottleneck adapter (h = hidden dim, b = bottleneck dim).
struct AdapterParams {
  Tensor down_weight;  // [h x b]
  Tensor down_bias;    // [b]
  Tensor up_weight;    // [b x h]
  Tensor up_bias;      // [h]
  Tensor ln_gain;      // [h]
  Tensor ln_bias;      // [h]
};

/// The same bundle recorded on a tape.
struct AdapterVars {
  Var down_weight;
  Var down_bias;
  Var up_weight;
  Var up_bias;
  Var ln_gain;
  Var ln_bias;
};

/// x + up(tanh(down(layernorm(x)))), applied row-wise.
Var apply_adapter(Var x, const AdapterVars& a);

/// Binds a materialized adapter as constants on `tape`.
AdapterVars bind_adapter(Tape& tape, const AdapterParams& p);

}  // namespace fm3
