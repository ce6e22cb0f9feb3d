// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "fm3/autodiff.hpp"
#include "fm3/digest.hpp"
#include "fm3/error.hpp"
#include "fm3/gradcheck.hpp"
#include "fm3/optim.hpp"
#include "support.hpp"

using namespace fm3;
using fm3::testing::random_tensor;

namespace {

void require_gradients(const ScalarFunction& f, std::vector<Tensor> point) {
  const GradCheckResult r = grad_check(f, point);
  CHECK(r.coordinates > 0);
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6.0);
  CHECK(m.reshaped({3, 2}).at(2, 1) == 6.0);
  CHECK_THROWS(m.reshaped({4, 2}));
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS(m.item());
  Tensor bad({2}, 0.0);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + trial % 4, k = 2 + trial % 3, m = 1 + trial % 5;
    Tensor a = random_tensor({n, k}, rng), b = random_tensor({k, m}, rng);
    Tape tape;
    Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
        CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-14));
      }
    }
  }
  Tape tape;
  CHECK_THROWS_AS(matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), ShapeError);
}

TEST_CASE("softmax cross-entropy and logistic loss match closed forms") {
  Tape tape;
  const std::size_t label[] = {2};
  Var ce = softmax_cross_entropy(tape.constant(Tensor::matrix({{1, 2, 3}})), label);
  CHECK(ce.value().item() == doctest::Approx(std::log(1.0 + std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-14));

  // Max-subtraction keeps huge logits finite.
  Var big = softmax_cross_entropy(tape.constant(Tensor::matrix({{1000, 0, -1000}})), std::vector<std::size_t>{0});
  CHECK(big.value().item() == doctest::Approx(0.0));
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor::matrix({{1, 2}})), std::vector<std::size_t>{2}),
                  std::out_of_range);

  const std::size_t y[] = {1, 0};
  Var bce = binary_cross_entropy_with_logits(tape.constant(Tensor::vector({0.5, 2.0})), y);
  const double expect = 0.5 * (std::log1p(std::exp(-0.5)) + std::log1p(std::exp(2.0)));
  CHECK(bce.value().item() == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("cosine similarity") {
  Tape tape;
  Var u = tape.constant(Tensor::vector({1, 0}));
  Var v = tape.constant(Tensor::vector({1, 1}));
  CHECK(cosine_similarity(u, v).value().item() == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(cosine_similarity(u, scale(u, -3.0)).value().item() == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_similarity(u, tape.constant(Tensor::vector({0, 0}))), NumericError);

  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Tape t;
    const double c =
        cosine_similarity(t.constant(random_tensor({5}, rng)), t.constant(random_tensor({5}, rng))).value().item();
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("layer norm matches a direct computation") {
  Rng rng(4);
  Tensor x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
  Tape tape;
  Tensor y = layer_norm(tape.constant(x), tape.constant(g), tape.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i) {
    double mu = 0.0, var = 0.0;
    for (double v : x.row(i)) mu += v / 6.0;
    for (double v : x.row(i)) var += (v - mu) * (v - mu) / 6.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(y.at(i, j) == doctest::Approx(g[j] * (x.at(i, j) - mu) / std::sqrt(var + 1e-5) + b[j]).epsilon(1e-13));
    }
  }
}

TEST_CASE("gradient accumulates over repeated uses") {
  Tape tape;
  Var x = tape.parameter(Tensor::vector({1.5, -2.0}));
  tape.backward(sum(mul(x, x)));
  const Tensor g = tape.grad(x);
  CHECK(g[0] == 3.0);
  CHECK(g[1] == -4.0);
}

TEST_CASE("non-finite values are rejected when recorded") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({std::numeric_limits<double>::max()}));
  CHECK_THROWS_AS(mul(x, x), NumericError);
}

TEST_CASE("every op passes a finite-difference check") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({4}, rng), gain = random_tensor({4}, rng);
    require_gradients([](Tape&, std::span<const Var> v) { return sum(tanh(matmul(v[0], v[1]))); }, {a, b});
    require_gradients([](Tape&, std::span<const Var> v) { return sum(mul(sub(v[0], v[1]), add(v[0], v[1]))); },
                      {a, c});
    require_gradients([](Tape&, std::span<const Var> v) { return mean(tanh(add_bias(v[0], v[1]))); }, {a, bias});
    require_gradients(
        [](Tape&, std::span<const Var> v) { return sum(tanh(layer_norm(v[0], v[1], v[2]))); }, {a, gain, bias});
    require_gradients([](Tape&, std::span<const Var> v) { return sum(sum_cols(tanh(transpose(v[0])))); }, {a});
    require_gradients([](Tape&, std::span<const Var> v) { return sum(tanh(l2_normalize_rows(v[0]))); }, {a});
    require_gradients([](Tape&, std::span<const Var> v) { return sum(cosine_rows(v[0], v[1])); }, {a, c});
    require_gradients(
        [](Tape&, std::span<const Var> v) {
          const Var parts[] = {v[0], scale(v[1], 0.5)};
          return sum(tanh(concat_cols(parts)));
        },
        {a, c});
    require_gradients(
        [](Tape&, std::span<const Var> v) {
          const std::size_t rows[] = {2, 0, 2};
          return sum(tanh(add_scalar(gather_rows(v[0], rows), 0.3)));
        },
        {a});
    require_gradients([](Tape&, std::span<const Var> v) { return sum(tanh(select_row(v[0], 1))); }, {a});
    require_gradients(
        [](Tape&, std::span<const Var> v) {
          const std::vector<std::vector<std::uint32_t>> tokens{{0, 2, 2}, {1}};
          return sum(tanh(gather_mean(v[0], tokens)));
        },
        {a});
    require_gradients(
        [](Tape&, std::span<const Var> v) {
          const std::size_t labels[] = {0, 3, 1};
          return softmax_cross_entropy(v[0], labels);
        },
        {a});
    require_gradients(
        [](Tape&, std::span<const Var> v) {
          const std::size_t labels[] = {0, 1, 1, 0};
          return binary_cross_entropy_with_logits(reshape(select_row(v[0], 0), {4}), labels);
        },
        {a});
  }
}

TEST_CASE("grad_check rejects non-finite functions") {
  auto f = [](Tape& tape, std::span<const Var>) { return tape.constant(Tensor::scalar(std::nan(""))); };
  CHECK_THROWS_AS(grad_check(f, std::vector<Tensor>{Tensor::vector({1.0})}), NumericError);
}

TEST_CASE("learning-rate schedule phases") {
  LrSchedule s{1e-3, 10, 0.8, 0.5, 100};
  CHECK(lr_at_step(s, 0) == 0.0);
  CHECK(lr_at_step(s, 5) == doctest::Approx(5e-4));
  CHECK(lr_at_step(s, 10) == 1e-3);
  CHECK(lr_at_step(s, 80) == 1e-3);
  CHECK(lr_at_step(s, 81) == doctest::Approx(5e-4));
  CHECK(lr_at_step(s, 83) == doctest::Approx(1.25e-4));
  CHECK_THROWS_AS(lr_at_step(s, 101), std::out_of_range);
  CHECK_THROWS_AS(lr_at_step(s, -1), std::out_of_range);
}

TEST_CASE("learning-rate schedule is continuous at both boundaries") {
  LrSchedule s{1e-3, 5000, 0.8, 0.99995, 500000};
  const std::int64_t w = s.warmup_steps, h = s.hold_end();
  CHECK(h == 400000);
  // Steps on either side of each boundary differ by at most one step's increment.
  CHECK(std::abs(lr_at_step(s, w) - lr_at_step(s, w - 1)) <= s.peak_lr / static_cast<double>(w) + 1e-18);
  CHECK(std::abs(lr_at_step(s, h + 1) - lr_at_step(s, h)) <= s.peak_lr * (1.0 - s.decay_rate) + 1e-18);
  for (std::int64_t t = 1; t <= s.total_steps; t += 997) CHECK(lr_at_step(s, t) <= s.peak_lr);
}

TEST_CASE("AdamW single step matches the update rule") {
  Tensor p = Tensor::vector({1.0, -2.0, 0.5});
  const Tensor g = Tensor::vector({0.3, -0.1, 0.0});
  Tensor* params[] = {&p};
  AdamWState st = AdamWState::init(params, {0.1});
  const double lr = 0.01;
  adamw_step(params, std::vector<Tensor>{g}, st, lr);
  const double start[] = {1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    const double m = 0.1 * g[i] / (1.0 - 0.9), v = 0.001 * g[i] * g[i] / (1.0 - 0.999);
    double expect = start[i] - lr * m / (std::sqrt(v) + 1e-8);
    expect -= lr * 0.1 * expect;
    CHECK(p[i] == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(st.step == 1);
}

TEST_CASE("AdamW is bit-reproducible") {
  auto run = [] {
    Rng rng(9);
    Tensor p = random_tensor({4, 3}, rng);
    Tensor* params[] = {&p};
    AdamWState st = AdamWState::init(params, {0.1});
    for (int s = 0; s < 20; ++s) adamw_step(params, std::vector<Tensor>{random_tensor({4, 3}, rng)}, st, 1e-2);
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("AdamW rejects mismatched shapes") {
  Tensor p({2});
  Tensor* params[] = {&p};
  AdamWState st = AdamWState::init(params, {0.0});
  CHECK_THROWS_AS(adamw_step(params, std::vector<Tensor>{Tensor({3})}, st, 1e-3), ShapeError);
}

TEST_CASE("global-norm clipping") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> g{random_tensor({3, 3}, rng, 2.0), random_tensor({5}, rng, 2.0)};
    const double before = global_norm(g);
    std::vector<Tensor> once = g;
    const double after = clip_global_norm(once, 1.0);
    CHECK(after <= 1.0 + 1e-12);
    if (before <= 1.0) CHECK(once == g);
    std::vector<Tensor> twice = once;
    clip_global_norm(twice, 1.0);
    CHECK(twice == once);
  }
}

TEST_CASE("SHA-256 reference vectors") {
  auto hex = [](const std::string& s) {
    return to_hex(sha256({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
  };
  CHECK(hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 inc;
  inc.update({reinterpret_cast<const std::uint8_t*>("ab"), 2});
  inc.update({reinterpret_cast<const std::uint8_t*>("c"), 1});
  CHECK(to_hex(inc.finish()) == hex("abc"));
}

TEST_CASE("tensor digest depends on names, shapes and values") {
  std::map<std::string, Tensor> a{{"w", Tensor::vector({1, 2})}};
  auto b = a;
  CHECK(digest_tensors(a) == digest_tensors(b));
  b["w"][1] = std::nextafter(2.0, 3.0);
  CHECK(digest_tensors(a) != digest_tensors(b));
  std::map<std::string, Tensor> c{{"w", Tensor::vector({1, 2}).reshaped({1, 2})}};
  CHECK(digest_tensors(a) != digest_tensors(c));
  std::map<std::string, Tensor> d{{"v", Tensor::vector({1, 2})}};
  CHECK(digest_tensors(a) != digest_tensors(d));
}
