// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic synthetic tasks mirroring language-only, vision-only,
// vision-language and multilingual classification.
//
// Text payloads are token sequences in which class "motif" tokens are mixed
// with filler; images are Gaussian blobs on the 8x8x3 grid over background
// noise. Vision-language labels combine both modalities: one modality carries
// a strength cue deciding whether its own class or the other modality's class
// is the answer, so neither modality alone determines the label while the
// label stays a linear function of the latent factors.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fm3/contrastive.hpp"
#include "fm3/multitask.hpp"

namespace fm3 {

enum class SynthKind {
  text_binary,
  text_multiclass,
  vision_multiclass,
  visionlang_entailment,
  visionlang_qa,
  multilingual_text,
};

std::string to_string(SynthKind k);
SynthKind synth_kind_from_string(const std::string& s);
ModalitySet modalities_of(SynthKind k);
/// Default class count per kind (binary text, 3-way entailment, 4 otherwise).
std::size_t default_num_classes(SynthKind k);

inline constexpr std::size_t kMaxLanguages = 8;
inline constexpr std::size_t kSeqLen = 24;
inline constexpr std::size_t kMotifTokens = 4;
inline constexpr std::size_t kFillerTokens = 256;

struct SynthTaskConfig {
  SynthKind kind = SynthKind::text_binary;
  std::string name = "task";
  std::size_t task_id = 0;
  std::size_t num_classes = 2;
  std::size_t examples_per_class = 128;
  std::size_t eval_per_class = 50;
  double noise_level = 0.0;
  std::size_t num_languages = 1;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct SynthExample {
  LabeledExample example;
  /// Label-defining factors; the clean label is argmax of the two halves summed
  /// (vision-language) or of the one-hot class code (other kinds).
  std::vector<double> latent;
  /// Per token position: motif index (>= 0) or -(filler index + 1).
  std::vector<std::int32_t> text_template;
  /// Class whose motif fills the motif slots.
  std::size_t text_class = 0;
  std::size_t clean_label = 0;
};

class SynthTask {
 public:
  /// Builds train and eval pools. Reproducible per config.rng_seed.
  static SynthTask generate(const SynthTaskConfig& cfg);

  const SynthTaskConfig& config() const { return cfg_; }
  const std::vector<SynthExample>& train() const { return train_; }
  const std::vector<SynthExample>& eval() const { return eval_; }
  std::vector<LabeledExample> train_examples() const;
  std::vector<LabeledExample> eval_examples() const;

  /// Registry entry for this task (one dataset named after the task).
  TaskSpec spec() const;

  /// Same latent example with tokens drawn from another language's vocabulary.
  LabeledExample render_multilingual(const SynthExample& example, std::size_t language_index) const;

  /// Motif token ids of a class in a language.
  std::vector<std::uint32_t> motif_tokens(std::size_t cls, std::size_t language) const;

 private:
  std::vector<std::uint32_t> render_tokens(const SynthExample& ex, std::size_t language) const;

  SynthTaskConfig cfg_;
  // Per language: motif[class * kMotifTokens + m], filler[f].
  std::vector<std::vector<std::uint32_t>> motif_;
  std::vector<std::vector<std::uint32_t>> filler_;
  std::vector<SynthExample> train_;
  std::vector<SynthExample> eval_;
};

/// One JSON object per line: id, task, split, label, language, text, image.
void export_pool(std::ostream& out, const std::vector<LabeledExample>& pool, const std::string& task_name,
                 const std::string& split);
struct ImportedExample {
  std::string task;
  std::string split;
  LabeledExample example;
};
std::vector<ImportedExample> import_pool(std::istream& in);

}  // namespace fm3
