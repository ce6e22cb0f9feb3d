// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fm3/error.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

namespace {

constexpr std::size_t kLanguageBlock = kDefaultVocab / kMaxLanguages;

// Signal strengths. Text signal is the fraction of motif tokens; image
// signal is blob amplitude against unit-variance-scale background noise.
constexpr double kTextDensity = 0.25;
constexpr double kStrongTextDensity = 0.45;
constexpr double kWeakTextDensity = 0.12;
constexpr double kBlobAmplitude = 1.0;
constexpr double kStrongBlobAmplitude = 1.6;
constexpr double kWeakBlobAmplitude = 0.6;
constexpr double kBackgroundNoise = 0.6;
constexpr double kBlobSigma = 1.0;
constexpr double kBlobJitter = 0.75;
constexpr double kStrongLatent = 1.5;
constexpr double kWeakLatent = 0.5;

bool is_visionlang(SynthKind k) { return k == SynthKind::visionlang_entailment || k == SynthKind::visionlang_qa; }

}  // namespace

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::text_binary: return "text_binary";
    case SynthKind::text_multiclass: return "text_multiclass";
    case SynthKind::vision_multiclass: return "vision_multiclass";
    case SynthKind::visionlang_entailment: return "visionlang_entailment";
    case SynthKind::visionlang_qa: return "visionlang_qa";
    case SynthKind::multilingual_text: return "multilingual_text";
  }
  return "?";
}

SynthKind synth_kind_from_string(const std::string& s) {
  for (auto k : {SynthKind::text_binary, SynthKind::text_multiclass, SynthKind::vision_multiclass,
                 SynthKind::visionlang_entailment, SynthKind::visionlang_qa, SynthKind::multilingual_text}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown task kind '" + s + "'");
}

ModalitySet modalities_of(SynthKind k) {
  switch (k) {
    case SynthKind::vision_multiclass: return {false, true};
    case SynthKind::visionlang_entailment:
    case SynthKind::visionlang_qa: return {true, true};
    default: return {true, false};
  }
}

std::size_t default_num_classes(SynthKind k) {
  switch (k) {
    case SynthKind::text_binary:
    case SynthKind::multilingual_text: return 2;
    case SynthKind::visionlang_entailment: return 3;
    default: return 4;
  }
}

void SynthTaskConfig::validate() const {
  if (examples_per_class < 1) throw ConfigError(name + ": examples_per_class must be at least 1");
  if (eval_per_class < 1) throw ConfigError(name + ": eval_per_class must be at least 1");
  if (num_classes < 2) throw ConfigError(name + ": at least two classes required");
  if (kind == SynthKind::text_binary && num_classes != 2) throw ConfigError(name + ": text_binary has two classes");
  if (num_classes * kMotifTokens + kFillerTokens > kLanguageBlock) throw ConfigError(name + ": too many classes");
  if (!(noise_level >= 0.0 && noise_level < 1.0)) throw ConfigError(name + ": noise_level must lie in [0, 1)");
  if (num_languages < 1 || num_languages > kMaxLanguages) {
    throw ConfigError(name + ": num_languages must lie in [1, " + std::to_string(kMaxLanguages) + "]");
  }
  if (kind != SynthKind::multilingual_text && num_languages != 1) {
    throw ConfigError(name + ": only multilingual_text tasks have several languages");
  }
}

namespace {

struct Latents {
  std::size_t text_class = 0;
  std::size_t image_class = 0;
  double text_density = kTextDensity;
  double blob_amplitude = kBlobAmplitude;
  double text_strength = 1.0;
  double image_strength = 1.0;
};

Latents draw_latents(SynthKind kind, std::size_t label, std::size_t classes, Rng& rng) {
  Latents z;
  z.text_class = z.image_class = label;
  std::uniform_int_distribution<std::size_t> any_class(0, classes - 1);
  std::bernoulli_distribution coin(0.5);
  if (kind == SynthKind::visionlang_entailment) {
    // The text cue's strength decides whether the text or the image class wins.
    const bool strong = coin(rng);
    z.text_density = strong ? kStrongTextDensity : kWeakTextDensity;
    z.text_strength = strong ? kStrongLatent : kWeakLatent;
    if (strong) {
      z.image_class = any_class(rng);
    } else {
      z.text_class = any_class(rng);
    }
  } else if (kind == SynthKind::visionlang_qa) {
    // The image cue's strength decides whether the image or the text class wins.
    const bool strong = coin(rng);
    z.blob_amplitude = strong ? kStrongBlobAmplitude : kWeakBlobAmplitude;
    z.image_strength = strong ? kStrongLatent : kWeakLatent;
    if (strong) {
      z.text_class = any_class(rng);
    } else {
      z.image_class = any_class(rng);
    }
  }
  return z;
}

std::vector<double> render_image(std::size_t cls, std::size_t classes, double amplitude, double phase, Rng& rng) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(cls) / static_cast<double>(classes) + phase;
  std::uniform_real_distribution<double> jitter(-kBlobJitter, kBlobJitter);
  const double cx = 3.5 + 2.5 * std::cos(angle) + jitter(rng);
  const double cy = 3.5 + 2.5 * std::sin(angle) + jitter(rng);
  constexpr double color[kGridChannels] = {1.0, 0.6, 0.3};
  std::normal_distribution<double> noise(0.0, kBackgroundNoise);
  std::vector<double> img(kGridSize);
  for (std::size_t y = 0; y < kGridHeight; ++y) {
    for (std::size_t x = 0; x < kGridWidth; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double blob = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * kBlobSigma * kBlobSigma));
      for (std::size_t c = 0; c < kGridChannels; ++c) {
        img[(y * kGridWidth + x) * kGridChannels + c] = blob * color[c] + noise(rng);
      }
    }
  }
  return img;
}

std::vector<std::int32_t> draw_template(double density, Rng& rng) {
  std::bernoulli_distribution motif(density);
  std::uniform_int_distribution<std::int32_t> which_motif(0, static_cast<std::int32_t>(kMotifTokens) - 1);
  std::uniform_int_distribution<std::int32_t> which_filler(0, static_cast<std::int32_t>(kFillerTokens) - 1);
  std::vector<std::int32_t> t(kSeqLen);
  for (auto& slot : t) slot = motif(rng) ? which_motif(rng) : -(which_filler(rng) + 1);
  return t;
}

}  // namespace

SynthTask SynthTask::generate(const SynthTaskConfig& cfg) {
  cfg.validate();
  SynthTask task;
  task.cfg_ = cfg;
  Rng rng(cfg.rng_seed);
  const std::size_t classes = cfg.num_classes;

  for (std::size_t lang = 0; lang < cfg.num_languages; ++lang) {
    std::vector<std::uint32_t> block(kLanguageBlock);
    std::iota(block.begin(), block.end(), static_cast<std::uint32_t>(lang * kLanguageBlock));
    std::shuffle(block.begin(), block.end(), rng);
    task.motif_.emplace_back(block.begin(), block.begin() + static_cast<std::ptrdiff_t>(classes * kMotifTokens));
    task.filler_.emplace_back(block.begin() + static_cast<std::ptrdiff_t>(classes * kMotifTokens),
                              block.begin() + static_cast<std::ptrdiff_t>(classes * kMotifTokens + kFillerTokens));
  }
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const ModalitySet mods = modalities_of(cfg.kind);
  std::uniform_int_distribution<std::size_t> any_language(0, cfg.num_languages - 1);

  std::uint64_t next_id = static_cast<std::uint64_t>(cfg.task_id) << 32;
  auto make_pool = [&](std::size_t per_class) {
    std::vector<SynthExample> pool;
    pool.reserve(per_class * classes);
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t label = 0; label < classes; ++label) {
        const Latents z = draw_latents(cfg.kind, label, classes, rng);
        SynthExample ex;
        ex.clean_label = label;
        ex.text_class = z.text_class;
        ex.example.example_id = next_id++;
        ex.example.task_id = cfg.task_id;
        ex.example.label = label;
        if (is_visionlang(cfg.kind)) {
          ex.latent.assign(2 * classes, 0.0);
          ex.latent[z.text_class] = z.text_strength;
          ex.latent[classes + z.image_class] = z.image_strength;
        } else {
          ex.latent.assign(classes, 0.0);
          ex.latent[label] = 1.0;
        }
        if (mods.text) {
          ex.text_template = draw_template(z.text_density, rng);
          ex.example.language = any_language(rng);
        }
        if (mods.image) ex.example.inputs.image = render_image(z.image_class, classes, z.blob_amplitude, phase, rng);
        pool.push_back(std::move(ex));
      }
    }
    // Label noise: flip an exact share of each class, cycling the new label
    // through the other classes.
    if (cfg.noise_level > 0.0) {
      const auto flips = static_cast<std::size_t>(std::llround(cfg.noise_level * static_cast<double>(per_class)));
      for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < pool.size(); ++i)
          if (pool[i].clean_label == c) members.push_back(i);
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t j = 0; j < flips; ++j) {
          pool[members[j]].example.label = (c + 1 + (j + c) % (classes - 1)) % classes;
        }
      }
    }
    for (auto& ex : pool)
      if (mods.text) ex.example.inputs.tokens = task.render_tokens(ex, ex.example.language);
    return pool;
  };
  task.train_ = make_pool(cfg.examples_per_class);
  task.eval_ = make_pool(cfg.eval_per_class);
  return task;
}

std::vector<std::uint32_t> SynthTask::render_tokens(const SynthExample& ex, std::size_t language) const {
  const auto& motif = motif_.at(language);
  const auto& filler = filler_.at(language);
  std::vector<std::uint32_t> tokens;
  tokens.reserve(ex.text_template.size());
  for (auto slot : ex.text_template) {
    tokens.push_back(slot >= 0 ? motif[ex.text_class * kMotifTokens + static_cast<std::size_t>(slot)]
                               : filler[static_cast<std::size_t>(-slot - 1)]);
  }
  return tokens;
}

LabeledExample SynthTask::render_multilingual(const SynthExample& example, std::size_t language_index) const {
  if (cfg_.kind != SynthKind::multilingual_text) throw std::invalid_argument("task is not multilingual");
  if (language_index >= cfg_.num_languages) {
    throw std::out_of_range("language " + std::to_string(language_index) + " of " + std::to_string(cfg_.num_languages));
  }
  LabeledExample out = example.example;
  out.language = language_index;
  out.inputs.tokens = render_tokens(example, language_index);
  return out;
}

std::vector<std::uint32_t> SynthTask::motif_tokens(std::size_t cls, std::size_t language) const {
  const auto& m = motif_.at(language);
  return std::vector<std::uint32_t>(m.begin() + static_cast<std::ptrdiff_t>(cls * kMotifTokens),
                                    m.begin() + static_cast<std::ptrdiff_t>((cls + 1) * kMotifTokens));
}

std::vector<LabeledExample> SynthTask::train_examples() const {
  std::vector<LabeledExample> out;
  out.reserve(train_.size());
  for (const auto& e : train_) out.push_back(e.example);
  return out;
}

std::vector<LabeledExample> SynthTask::eval_examples() const {
  std::vector<LabeledExample> out;
  out.reserve(eval_.size());
  for (const auto& e : eval_) out.push_back(e.example);
  return out;
}

TaskSpec SynthTask::spec() const {
  TaskSpec s;
  s.task_id = cfg_.task_id;
  s.name = cfg_.name;
  s.modalities = modalities_of(cfg_.kind);
  s.num_classes = cfg_.num_classes;
  s.head_type = cfg_.num_classes == 2 ? HeadType::logistic : HeadType::softmax;
  s.datasets.push_back({cfg_.name, train_.size()});
  if (s.modalities.text && !s.modalities.image) {
    for (std::size_t c = 0; c < cfg_.num_classes; ++c) s.class_names.push_back(motif_tokens(c, 0));
  }
  return s;
}

void export_pool(std::ostream& out, const std::vector<LabeledExample>& pool, const std::string& task_name,
                 const std::string& split) {
  for (const auto& e : pool) {
    nlohmann::json j;
    j["id"] = e.example_id;
    j["task"] = task_name;
    j["split"] = split;
    j["label"] = e.label;
    j["language"] = e.language;
    j["text"] = e.inputs.tokens;
    j["image"] = e.inputs.image;
    out << j.dump() << '\n';
  }
}

std::vector<ImportedExample> import_pool(std::istream& in) {
  std::vector<ImportedExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ImportedExample ex;
      ex.task = j.at("task").get<std::string>();
      ex.split = j.at("split").get<std::string>();
      ex.example.example_id = j.at("id").get<std::uint64_t>();
      ex.example.label = j.at("label").get<std::size_t>();
      ex.example.language = j.at("language").get<std::size_t>();
      ex.example.inputs.tokens = j.at("text").get<std::vector<std::uint32_t>>();
      ex.example.inputs.image = j.at("image").get<std::vector<double>>();
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("pool record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fm3
