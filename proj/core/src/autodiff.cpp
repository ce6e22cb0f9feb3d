// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fm3/error.hpp"

namespace fm3 {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  return record("constant", std::move(value), {}, nullptr);
}

Var Tape::parameter(Tensor value) {
  Var v = record("parameter", std::move(value), {}, nullptr);
  nodes_[v.id].requires_grad = true;
  return v;
}

Var Tape::external(const Tensor& value, bool requires_grad) {
  Node node;
  node.value = Tensor(Shape{0});
  node.external = &value;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad_allocated) return n.grad;
  return Tensor(value(v.id).shape());
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_allocated) {
    n.grad = Tensor(value(id).shape());
    n.grad_allocated = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward root belongs to another tape");
  if (value(root.id).size() != 1) {
    throw ShapeError("backward root must be a scalar, got " + shape_string(value(root.id).shape()));
  }
  for (auto& n : nodes_) {
    if (n.grad_allocated) std::fill(n.grad.data().begin(), n.grad.data().end(), 0.0);
  }
  grad_slot(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.rule && n.requires_grad && n.grad_allocated) n.rule(*this, i);
  }
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 Backward rule, std::uint64_t flops) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [&](std::size_t i) { return nodes_[i].requires_grad; });
  if (node.requires_grad) node.rule = std::move(rule);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  flops_ += flops;
  return Var{this, nodes_.size() - 1};
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("operands on different tapes");
  return *a.tape;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// out[m x n] (+)= a[m x k] * b[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out,
          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* br = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> out,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gr = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* br = b.data() + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
      out[i * k + p] += s;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> out,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gr = g.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* o = out.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * gr[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  require_rank(x, 2, "matmul");
  require_rank(w, 2, "matmul");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_string(x.shape()) + " x " +
                     shape_string(w.shape()));
  }
  Tensor out({m, n});
  gemm(x.data(), w.data(), out.data(), m, k, n);
  return tape.record(
      "matmul", std::move(out), {a.id, b.id},
      [ai = a.id, bi = b.id, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_slot(self);
        if (t.requires_grad(ai)) gemm_nt(g.data(), t.value(bi).data(), t.grad_slot(ai).data(), m, k, n);
        if (t.requires_grad(bi)) gemm_tn(t.value(ai).data(), g.data(), t.grad_slot(bi).data(), m, k, n);
      },
      static_cast<std::uint64_t>(m) * k * n);
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  return a.tape->record("transpose", std::move(y), {a.id}, [ai = a.id, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return tape.record("add", std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    for (std::size_t in : {ai, bi}) {
      if (!t.requires_grad(in)) continue;
      Tensor& gi = t.grad_slot(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return tape.record("sub", std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad_slot(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_slot(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return tape.record("mul", std::move(y), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad_slot(ai);
      const Tensor& bv = t.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_slot(bi);
      const Tensor& av = t.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= s;
  return a.tape->record("scale", std::move(y), {a.id}, [ai = a.id, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v += s;
  return a.tape->record("add_scalar", std::move(y), {a.id}, [ai = a.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var add_bias(Var x, Var b) {
  Tape& tape = same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require_rank(xv, 2, "add_bias");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  if (bv.size() != m) {
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " vs input " + shape_string(xv.shape()));
  }
  Tensor y = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] += bv[j];
  return tape.record("add_bias", std::move(y), {x.id, b.id}, [xi = x.id, bi = b.id, n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad_slot(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad_slot(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
    }
  });
}

Var tanh(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return a.tape->record("tanh", std::move(y), {a.id}, [ai = a.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
}

Var relu(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return a.tape->record("relu", std::move(y), {a.id}, [ai = a.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    const Tensor& xv = t.value(ai);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) ga[i] += g[i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(y), {a.id}, [ai = a.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a.id}, [ai = a.id](Tape& t, std::size_t self) {
    const double g = t.grad_slot(self)[0];
    Tensor& ga = t.grad_slot(ai);
    for (auto& v : ga.data()) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_cols(Var a) {
  const Tensor& x = a.value();
  require_rank(x, 2, "sum_cols");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += x[i * m + j];
    y[i] = s;
  }
  return a.tape->record("sum_cols", std::move(y), {a.id}, [ai = a.id, n, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& ga = t.grad_slot(ai);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  Tape& tape = *parts.front().tape;
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape != &tape) throw std::invalid_argument("operands on different tapes");
    const Tensor& v = p.value();
    require_rank(v, 2, "concat_cols");
    if (v.dim(0) != n) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(v.dim(1));
    ids.push_back(p.id);
    total += v.dim(1);
  }
  Tensor y({n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(v.data().data() + i * widths[k], widths[k], y.data().data() + i * total + offset);
    offset += widths[k];
  }
  return tape.record("concat_cols", std::move(y), ids, [ids, widths, n, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gk = t.grad_slot(ids[k]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gk[i * widths[k] + j] += g[i * total + offset + j];
      }
      offset += widths[k];
    }
  });
}

Var select_row(Var table, std::size_t index) {
  const Tensor& x = table.value();
  require_rank(x, 2, "select_row");
  if (index >= x.dim(0)) {
    throw std::out_of_range("select_row: index " + std::to_string(index) + " of " + std::to_string(x.dim(0)));
  }
  const std::size_t d = x.dim(1);
  Tensor y({1, d});
  std::copy_n(x.data().data() + index * d, d, y.data().data());
  return table.tape->record("select_row", std::move(y), {table.id}, [ti = table.id, index, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& gt = t.grad_slot(ti);
    for (std::size_t j = 0; j < d; ++j) gt[index * d + j] += g[j];
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& v = x.value();
  require_rank(v, 2, "gather_rows");
  const std::size_t n = v.dim(0), d = v.dim(1);
  Tensor y({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " of " + std::to_string(n));
    std::copy_n(v.data().data() + rows[i] * d, d, y.data().data() + i * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape->record("gather_rows", std::move(y), {x.id}, [xi = x.id, idx = std::move(idx), d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_slot(self);
    Tensor& gx = t.grad_slot(xi);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gx[idx[i] * d + j] += g[i * d + j];
  });
}

Var gather_mean(Var table, std::span<const std::vector<std::uint32_t>> tokens) {
  const Tensor& x = table.value();
  require_rank(x, 2, "gather_mean");
  const std::size_t vocab = x.dim(0), d = x.dim(1), n = tokens.size();
  Tensor y({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i].empty()) throw ShapeError("gather_mean: empty token sequence");
    const double w = 1.0 / static_cast<double>(tokens[i].size());
    double* out = y.data().data() + i * d;
    for (std::uint32_t tok : tokens[i]) {
      if (tok >= vocab) throw std::out_of_range("token id " + std::to_string(tok) + " outside vocabulary");
      const double* r = x.data().data() + static_cast<std::size_t>(tok) * d;
      for (std::size_t j = 0; j < d; ++j) out[j] += w * r[j];
    }
  }
  std::vector<std::vector<std::uint32_t>> copy;
  if (table.tape->requires_grad(table.id)) copy.assign(tokens.begin(), tokens.end());
  return table.tape->record(
      "gather_mean", std::move(y), {table.id},
      [ti = table.id, toks = std::move(copy), d](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_slot(self);
        Tensor& gt = t.grad_slot(ti);
        for (std::size_t i = 0; i < toks.size(); ++i) {
          const double w = 1.0 / static_cast<double>(toks[i].size());
          for (std::uint32_t tok : toks[i])
            for (std::size_t j = 0; j < d; ++j) gt[tok * d + j] += w * g[i * d + j];
        }
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layer_norm");
  const std::size_t n = xv.dim(0), h = xv.dim(1);
  if (gain.value().size() != h || bias.value().size() != h) throw ShapeError("layer_norm: parameter size mismatch");
  Tensor y({n, h});
  std::vector<double> xhat(n * h), rstd(n);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = xv.data().data() + i * h;
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += r[j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(h);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < h; ++j) {
      xhat[i * h + j] = (r[j] - mu) * rstd[i];
      y[i * h + j] = gv[j] * xhat[i * h + j] + bv[j];
    }
  }
  return tape.record(
      "layer_norm", std::move(y), {x.id, gain.id, bias.id},
      [xi = x.id, gi = gain.id, bi = bias.id, n, h, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t,
                                                                                                      std::size_t self) {
        const Tensor& g = t.grad_slot(self);
        const Tensor& gv = t.value(gi);
        if (t.requires_grad(gi)) {
          Tensor& gg = t.grad_slot(gi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < h; ++j) gg[j] += g[i * h + j] * xhat[i * h + j];
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_slot(bi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < h; ++j) gb[j] += g[i * h + j];
        }
        if (t.requires_grad(xi)) {
          Tensor& gx = t.grad_slot(xi);
          std::vector<double> dxhat(h);
          for (std::size_t i = 0; i < n; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < h; ++j) {
              dxhat[j] = g[i * h + j] * gv[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[i * h + j];
            }
            m1 /= static_cast<double>(h);
            m2 /= static_cast<double>(h);
            for (std::size_t j = 0; j < h; ++j)
              gx[i * h + j] += rstd[i] * (dxhat[j] - m1 - xhat[i * h + j] * m2);
          }
        }
      });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "l2_normalize_rows");
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({n, d});
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv[i * d + j] * xv[i * d + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = xv[i * d + j] / norms[i];
  }
  return x.tape->record("l2_normalize_rows", std::move(y), {x.id},
                        [xi = x.id, n, d, norms = std::move(norms)](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad_slot(self);
                          const Tensor& yv = t.value(self);
                          Tensor& gx = t.grad_slot(xi);
                          for (std::size_t i = 0; i < n; ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < d; ++j) dot += yv[i * d + j] * g[i * d + j];
                            for (std::size_t j = 0; j < d; ++j)
                              gx[i * d + j] += (g[i * d + j] - yv[i * d + j] * dot) / norms[i];
                          }
                        });
}

Var cosine_rows(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "cosine_rows");
  return sum_cols(mul(l2_normalize_rows(a), l2_normalize_rows(b)));
}

Var cosine_similarity(Var u, Var v) {
  const Tensor& uv = u.value();
  const Tensor& vv = v.value();
  require_rank(uv, 1, "cosine_similarity");
  require_same_shape(uv, vv, "cosine_similarity");
  const std::size_t d = uv.size();
  return sum(cosine_rows(reshape(u, {1, d}), reshape(v, {1, d})));
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax_cross_entropy");
  const std::size_t n = z.dim(0), c = z.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count mismatch");
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) throw std::out_of_range("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(c) + ")");
    const double* r = z.data().data() + i * c;
    const double mx = *std::max_element(r, r + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(r[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(r[j] - lse);
    loss += lse - r[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return logits.tape->record(
      "softmax_cross_entropy", Tensor::scalar(loss), {logits.id},
      [li = logits.id, n, c, probs = std::move(probs), lab = std::move(lab)](Tape& t, std::size_t self) {
        const double g = t.grad_slot(self)[0] / static_cast<double>(n);
        Tensor& gl = t.grad_slot(li);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += g * probs[i * c + j];
          gl[i * c + lab[i]] -= g;
        }
      });
}

Var binary_cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  const std::size_t n = z.size();
  if (labels.size() != n) throw ShapeError("binary_cross_entropy: label count mismatch");
  if (n == 0) throw ShapeError("binary_cross_entropy: empty batch");
  double loss = 0.0;
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 1) throw std::out_of_range("binary label must be 0 or 1");
    const double x = z[i];
    const double y = static_cast<double>(labels[i]);
    loss += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - y * x;
    const double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    resid[i] = p - y;
  }
  loss /= static_cast<double>(n);
  return logits.tape->record("binary_cross_entropy", Tensor::scalar(loss), {logits.id},
                             [li = logits.id, n, resid = std::move(resid)](Tape& t, std::size_t self) {
                               const double g = t.grad_slot(self)[0] / static_cast<double>(n);
                               Tensor& gl = t.grad_slot(li);
                               for (std::size_t i = 0; i < n; ++i) gl[i] += g * resid[i];
                             });
}

}  // namespace fm3
