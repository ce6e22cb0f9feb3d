// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "fm3/adapter.hpp"
#include "fm3/binder.hpp"
#include "fm3/encoders.hpp"
#include "fm3/error.hpp"
#include "fm3/gradcheck.hpp"
#include "support.hpp"

using namespace fm3;
using fm3::testing::random_tensor;

namespace {

Payload text_payload(std::vector<std::uint32_t> tokens) { return Payload{std::move(tokens), {}}; }

Payload image_payload(Rng& rng) {
  Payload p;
  std::normal_distribution<double> d(0.0, 1.0);
  for (std::size_t i = 0; i < kGridSize; ++i) p.image.push_back(d(rng));
  return p;
}

AdapterParams random_adapter(std::size_t h, std::size_t b, Rng& rng) {
  return AdapterParams{random_tensor({h, b}, rng, 0.3), random_tensor({b}, rng, 0.3), random_tensor({b, h}, rng, 0.3),
                       random_tensor({h}, rng, 0.3),    random_tensor({h}, rng, 0.3), random_tensor({h}, rng, 0.3)};
}

std::size_t brute_force_count(const Encoder& e) {
  std::size_t n = 0;
  for (const auto& [name, t] : e.weights().tensors) {
    std::size_t s = 1;
    for (auto x : t.shape()) s *= x;
    n += s;
  }
  return n;
}

}  // namespace

TEST_CASE("identical specs give identical weights") {
  for (auto spec : {EncoderSpec::text(SizeClass::base), EncoderSpec::vision(SizeClass::small)}) {
    Encoder a(spec), b(spec);
    CHECK(a.weights().content_digest == b.weights().content_digest);
    CHECK(a.weights().tensors == b.weights().tensors);
    CHECK(a.weights().content_digest == a.weights().recompute());
  }
  EncoderSpec other = EncoderSpec::text(SizeClass::base);
  other.weight_seed += 1;
  CHECK(Encoder(other).weights().content_digest != Encoder(EncoderSpec::text(SizeClass::base)).weights().content_digest);
}

TEST_CASE("parameter counts and size-class ratios") {
  for (auto spec : {EncoderSpec::text(SizeClass::base), EncoderSpec::text(SizeClass::small),
                    EncoderSpec::vision(SizeClass::base), EncoderSpec::vision(SizeClass::small)}) {
    Encoder e(spec);
    CHECK(e.parameter_count() == brute_force_count(e));
    CHECK(encoder_parameter_count(spec) == brute_force_count(e));
  }
  const double text = static_cast<double>(encoder_parameter_count(EncoderSpec::text(SizeClass::small))) /
                      static_cast<double>(encoder_parameter_count(EncoderSpec::text(SizeClass::base)));
  const double vision = static_cast<double>(encoder_parameter_count(EncoderSpec::vision(SizeClass::small))) /
                        static_cast<double>(encoder_parameter_count(EncoderSpec::vision(SizeClass::base)));
  // Small variants have 57% fewer (text) and 78% fewer (vision) parameters.
  CHECK(std::abs(text - 0.43) <= 0.03);
  CHECK(std::abs(vision - 0.22) <= 0.03);
}

TEST_CASE("invalid specs are rejected") {
  EncoderSpec s = EncoderSpec::text(SizeClass::base);
  s.hidden_dim = 0;
  CHECK_THROWS_AS(Encoder{s}, ConfigError);
  s = EncoderSpec::text(SizeClass::base);
  s.modality = Modality::multimodal;
  CHECK_THROWS_AS(Encoder{s}, ConfigError);
}

TEST_CASE("encode is pure and has the declared output dimension") {
  Encoder text(EncoderSpec::text(SizeClass::base));
  Encoder vision(EncoderSpec::vision(SizeClass::base));
  Rng rng(1);
  const Payload t = text_payload({3, 17, 4000, 17});
  const Payload im = image_payload(rng);
  CHECK(text.encode(t).vector.size() == 64);
  CHECK(vision.encode(im).vector.size() == 96);
  CHECK(text.encode(t).vector == text.encode(t).vector);
  CHECK(vision.encode(im).vector == vision.encode(im).vector);
  CHECK(text.encode(t).modality == Modality::text);
}

TEST_CASE("zero up-projection adapters leave the encoder unchanged") {
  Encoder enc(EncoderSpec::vision(SizeClass::small));
  Rng rng(2);
  const std::size_t h = enc.spec().hidden_dim;
  std::vector<AdapterParams> adapters;
  for (std::size_t s = 0; s < enc.spec().num_sites(); ++s) {
    AdapterParams a = random_adapter(h, 5, rng);
    a.up_weight = Tensor({5, h});
    a.up_bias = Tensor({h});
    adapters.push_back(a);
  }
  for (int i = 0; i < 5; ++i) {
    const Payload p = image_payload(rng);
    CHECK(enc.encode(p, adapters).vector == enc.encode(p).vector);
  }
}

TEST_CASE("adapter identity holds for arbitrary inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    AdapterParams a = random_adapter(7, 3, rng);
    a.up_weight = Tensor({3, 7});
    a.up_bias = Tensor({7});
    Tape tape;
    Tensor x = random_tensor({4, 7}, rng, 5.0);
    CHECK(apply_adapter(tape.constant(x), bind_adapter(tape, a)).value() == x);
  }
}

TEST_CASE("nonzero adapters change the output") {
  Encoder enc(EncoderSpec::text(SizeClass::small));
  Rng rng(4);
  std::vector<AdapterParams> adapters;
  for (std::size_t s = 0; s < enc.spec().num_sites(); ++s) adapters.push_back(random_adapter(28, 4, rng));
  const Payload p = text_payload({1, 2, 3});
  CHECK(max_abs_diff(enc.encode(p, adapters).vector, enc.encode(p).vector) > 1e-6);
}

TEST_CASE("adapter and input errors") {
  Encoder enc(EncoderSpec::text(SizeClass::small));
  Rng rng(5);
  std::vector<AdapterParams> one{random_adapter(28, 4, rng)};
  CHECK_THROWS_AS(enc.encode(text_payload({1}), one), ShapeError);
  Encoder vision(EncoderSpec::vision(SizeClass::small));
  Payload bad;
  bad.image.assign(10, 0.0);
  CHECK_THROWS_AS(vision.encode(bad), ShapeError);
  CHECK_THROWS_AS(enc.encode(text_payload({kDefaultVocab})), std::out_of_range);
}

TEST_CASE("gradients reach adapters but not frozen weights") {
  Encoder enc(EncoderSpec::vision(SizeClass::small));
  Rng rng(6);
  std::vector<Payload> data{image_payload(rng), image_payload(rng)};
  std::vector<const Payload*> batch{&data[0], &data[1]};
  std::vector<AdapterParams> params;
  for (std::size_t s = 0; s < enc.spec().num_sites(); ++s) params.push_back(random_adapter(44, 4, rng));

  Tape tape;
  ParamBinder bind(tape);
  std::vector<AdapterVars> vars;
  for (const auto& p : params) {
    vars.push_back(AdapterVars{bind(p.down_weight, true), bind(p.down_bias, true), bind(p.up_weight, true),
                               bind(p.up_bias, true), bind(p.ln_gain, true), bind(p.ln_bias, true)});
  }
  Var out = enc.forward(bind, batch, vars);
  tape.backward(sum(tanh(out)));
  double adapter_grad = 0.0;
  for (const auto& p : params) adapter_grad += std::abs(bind.grad(p.up_weight)[0]) + std::abs(bind.grad(p.down_weight)[0]);
  CHECK(adapter_grad > 0.0);
  for (const auto& [name, t] : enc.weights().tensors) {
    CHECK(bind.grad(t) == Tensor(t.shape()));
  }
  CHECK(enc.weights().recompute() == enc.weights().content_digest);
}

TEST_CASE("adapter application passes a finite-difference check") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const AdapterParams a = random_adapter(6, 3, rng);
    std::vector<Tensor> point{random_tensor({3, 6}, rng), a.down_weight, a.down_bias, a.up_weight,
                              a.up_bias,                  a.ln_gain,     a.ln_bias};
    auto f = [](Tape&, std::span<const Var> v) {
      return sum(tanh(apply_adapter(v[0], AdapterVars{v[1], v[2], v[3], v[4], v[5], v[6]})));
    };
    CHECK(grad_check(f, point).max_rel_error < 1e-4);
  }
}

TEST_CASE("fusion concatenates text then image") {
  Embedding t{Tensor::vector({1, 2, 3, 4}), Modality::text, std::nullopt};
  Embedding i{Tensor::vector({5, 6, 7, 8, 9, 10}), Modality::image, std::nullopt};
  Embedding f = fuse_multimodal(t, i);
  CHECK(f.vector.size() == 10);
  CHECK(f.modality == Modality::multimodal);
  for (std::size_t k = 0; k < 4; ++k) CHECK(f.vector[k] == t.vector[k]);
  for (std::size_t k = 0; k < 6; ++k) CHECK(f.vector[4 + k] == i.vector[k]);
  CHECK_THROWS_AS(fuse_multimodal(t, t), std::invalid_argument);
  CHECK_THROWS_AS(fuse_multimodal(i, t), std::invalid_argument);
}
