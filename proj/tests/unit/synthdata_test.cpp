// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fm3/error.hpp"
#include "fm3/heads.hpp"
#include "fm3/synthdata.hpp"

using namespace fm3;

namespace {

constexpr SynthKind kAllKinds[] = {SynthKind::text_binary,           SynthKind::text_multiclass,
                                   SynthKind::vision_multiclass,     SynthKind::visionlang_entailment,
                                   SynthKind::visionlang_qa,         SynthKind::multilingual_text};

SynthTaskConfig config_for(SynthKind kind, std::uint64_t seed = 9, double noise = 0.0) {
  SynthTaskConfig c;
  c.kind = kind;
  c.name = to_string(kind);
  c.num_classes = default_num_classes(kind);
  c.examples_per_class = 20;
  c.eval_per_class = 10;
  c.noise_level = noise;
  c.num_languages = kind == SynthKind::multilingual_text ? 2 : 1;
  c.rng_seed = seed;
  return c;
}

std::size_t argmax_latent(const SynthExample& e, std::size_t classes) {
  std::vector<double> score(classes, 0.0);
  for (std::size_t i = 0; i < e.latent.size(); ++i) score[i % classes] += e.latent[i];
  return static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
}

Tensor latents(const std::vector<SynthExample>& pool) {
  Tensor x({pool.size(), pool.front().latent.size()});
  for (std::size_t i = 0; i < pool.size(); ++i) std::copy(pool[i].latent.begin(), pool[i].latent.end(), x.row(i).begin());
  return x;
}

}  // namespace

TEST_CASE("generation is reproducible per seed") {
  for (auto kind : kAllKinds) {
    const SynthTask a = SynthTask::generate(config_for(kind));
    const SynthTask b = SynthTask::generate(config_for(kind));
    const SynthTask c = SynthTask::generate(config_for(kind, 10));
    CHECK(a.train_examples() == b.train_examples());
    CHECK(a.eval_examples() == b.eval_examples());
    CHECK(a.train_examples() != c.train_examples());
  }
}

TEST_CASE("pools are disjoint, balanced and carry the declared modalities") {
  for (auto kind : kAllKinds) {
    const SynthTask t = SynthTask::generate(config_for(kind));
    std::set<std::uint64_t> train_ids;
    for (const auto& e : t.train_examples()) train_ids.insert(e.example_id);
    CHECK(train_ids.size() == t.train().size());
    for (const auto& e : t.eval_examples()) CHECK(train_ids.count(e.example_id) == 0);
    const ModalitySet m = modalities_of(kind);
    std::vector<std::size_t> counts(t.config().num_classes, 0);
    for (const auto& e : t.train_examples()) {
      CHECK(e.inputs.has_text() == m.text);
      CHECK(e.inputs.has_image() == m.image);
      ++counts[e.label];
    }
    for (auto n : counts) CHECK(n == 20);
  }
}

TEST_CASE("noiseless labels are a fixed rule of the latent factors") {
  for (auto kind : kAllKinds) {
    const SynthTask t = SynthTask::generate(config_for(kind));
    const std::size_t c = t.config().num_classes;
    for (const auto& e : t.train()) {
      CHECK(e.example.label == e.clean_label);
      CHECK(argmax_latent(e, c) == e.clean_label);
    }
    // A linear head on the oracle latent factors is perfect on held-out data.
    std::vector<std::size_t> y;
    for (const auto& e : t.train()) y.push_back(e.example.label);
    const HeadFit fit = fit_head(latents(t.train()), y, c == 2 ? HeadType::logistic : HeadType::softmax, c,
                                 {1e-6, 5000, 1e-8});
    const Tensor xe = latents(t.eval());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < t.eval().size(); ++i) correct += predict(fit.head, xe.row(i)).label == t.eval()[i].example.label;
    CHECK(correct == t.eval().size());
  }
}

TEST_CASE("vision-language labels need both modalities") {
  for (auto kind : {SynthKind::visionlang_entailment, SynthKind::visionlang_qa}) {
    SynthTaskConfig cfg = config_for(kind);
    cfg.examples_per_class = 60;
    const SynthTask t = SynthTask::generate(cfg);
    const std::size_t c = cfg.num_classes;
    auto image_class = [&](const SynthExample& e) {
      return static_cast<std::size_t>(std::max_element(e.latent.begin() + static_cast<std::ptrdiff_t>(c), e.latent.end()) -
                                      (e.latent.begin() + static_cast<std::ptrdiff_t>(c)));
    };
    std::size_t text_disagrees = 0, image_disagrees = 0;
    for (const auto& e : t.train()) {
      text_disagrees += e.text_class != e.clean_label;
      image_disagrees += image_class(e) != e.clean_label;
    }
    CHECK(text_disagrees > t.train().size() / 10);
    CHECK(image_disagrees > t.train().size() / 10);
  }
}

TEST_CASE("label noise flips an exact share per class") {
  const SynthTask t = SynthTask::generate(config_for(SynthKind::text_multiclass, 3, 0.25));
  std::vector<std::size_t> flipped(4, 0), counts(4, 0);
  for (const auto& e : t.train()) {
    flipped[e.clean_label] += e.example.label != e.clean_label;
    ++counts[e.example.label];
  }
  for (auto f : flipped) CHECK(f == 5);
  for (auto n : counts) CHECK(std::abs(static_cast<int>(n) - 20) <= 2);
}

TEST_CASE("invalid generator settings are rejected") {
  SynthTaskConfig c = config_for(SynthKind::text_binary);
  c.examples_per_class = 0;
  CHECK_THROWS_AS(SynthTask::generate(c), ConfigError);
  c = config_for(SynthKind::text_binary);
  c.noise_level = 1.0;
  CHECK_THROWS_AS(SynthTask::generate(c), ConfigError);
}

TEST_CASE("multilingual rendering keeps the latent example") {
  const SynthTask t = SynthTask::generate(config_for(SynthKind::multilingual_text));
  const auto m0 = t.motif_tokens(1, 0), m1 = t.motif_tokens(1, 1);
  std::set<std::uint32_t> vocab0(m0.begin(), m0.end());
  for (auto tok : m1) CHECK(vocab0.count(tok) == 0);
  for (const auto& e : t.train()) {
    const LabeledExample l0 = t.render_multilingual(e, 0), l1 = t.render_multilingual(e, 1);
    CHECK(l0.label == l1.label);
    CHECK(l0.example_id == l1.example_id);
    CHECK(l1.language == 1);
    CHECK(l0.inputs.tokens.size() == l1.inputs.tokens.size());
    for (std::size_t i = 0; i < e.text_template.size(); ++i) {
      if (e.text_template[i] >= 0) {
        const auto slot = static_cast<std::size_t>(e.text_template[i]);
        CHECK(l0.inputs.tokens[i] == t.motif_tokens(e.text_class, 0)[slot]);
        CHECK(l1.inputs.tokens[i] == t.motif_tokens(e.text_class, 1)[slot]);
      }
    }
  }
  CHECK_THROWS_AS(t.render_multilingual(t.train().front(), 2), std::out_of_range);
}

TEST_CASE("pools survive an export and import round trip") {
  const SynthTask t = SynthTask::generate(config_for(SynthKind::visionlang_qa));
  std::stringstream ss;
  export_pool(ss, t.train_examples(), "qa", "train");
  const auto back = import_pool(ss);
  REQUIRE(back.size() == t.train().size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].task == "qa");
    CHECK(back[i].split == "train");
    CHECK(back[i].example == t.train_examples()[i]);
  }
}
