// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/adapter.hpp"

namespace fm3 {

Var apply_adapter(Var x, const AdapterVars& a) {
  Var normed = layer_norm(x, a.ln_gain, a.ln_bias);
  Var down = tanh(add_bias(matmul(normed, a.down_weight), a.down_bias));
  Var up = add_bias(matmul(down, a.up_weight), a.up_bias);
  return add(x, up);
}

AdapterVars bind_adapter(Tape& tape, const AdapterParams& p) {
  return AdapterVars{tape.external(p.down_weight, false), tape.external(p.down_bias, false),
                     tape.external(p.up_weight, false),   tape.external(p.up_bias, false),
                     tape.external(p.ln_gain, false),     tape.external(p.ln_bias, false)};
}

}  // namespace fm3
