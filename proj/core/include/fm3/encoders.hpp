// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

// Frozen stand-in modality encoders.
//
// Each encoder is a residual stack: an input stage (mean-pooled token
// embeddings for text, a linear map of the flattened feature grid for images)
// followed by num_layers blocks
//
//   z = tanh(layernorm(h W + b));  z = adapter(l, 0)(z);
//   h = h + z;                     h = adapter(l, 1)(h)
//
// and a linear output map. Adapter sites are addressed by (layer, position).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fm3/adapter.hpp"
#include "fm3/binder.hpp"
#include "fm3/digest.hpp"

namespace fm3 {

enum class Modality { text, image, multimodal };
enum class SizeClass { base, small };

std::string to_string(Modality m);
std::string to_string(SizeClass s);
Modality modality_from_string(const std::string& s);
SizeClass size_class_from_string(const std::string& s);

struct EncoderSpec {
  Modality modality = Modality::text;
  /// Vocabulary size (text) or flattened grid length (image).
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_layers = 0;
  std::size_t output_dim = 0;
  std::uint64_t weight_seed = 0;
  SizeClass size_class = SizeClass::base;

  static EncoderSpec text(SizeClass size);
  static EncoderSpec vision(SizeClass size);

  void validate() const;
  std::size_t num_sites() const { return num_layers * kAdapterPositions; }
  bool operator==(const EncoderSpec&) const = default;
};

/// Image grid geometry shared by the vision encoder and the data generators.
inline constexpr std::size_t kGridHeight = 8;
inline constexpr std::size_t kGridWidth = 8;
inline constexpr std::size_t kGridChannels = 3;
inline constexpr std::size_t kGridSize = kGridHeight * kGridWidth * kGridChannels;
inline constexpr std::size_t kDefaultVocab = 8192;

/// Raw model input for one example; an absent modality is left empty.
struct Payload {
  std::vector<std::uint32_t> tokens;
  std::vector<double> image;

  bool has_text() const { return !tokens.empty(); }
  bool has_image() const { return !image.empty(); }
  bool operator==(const Payload&) const = default;
};

struct Embedding {
  Tensor vector;
  Modality modality = Modality::text;
  std::optional<std::size_t> task_id;
};

struct FrozenWeights {
  std::map<std::string, Tensor> tensors;
  Digest content_digest{};

  Digest recompute() const { return digest_tensors(tensors); }
  std::size_t parameter_count() const;
};

class Encoder {
 public:
  /// Deterministically initialises weights from spec.weight_seed.
  explicit Encoder(EncoderSpec spec);

  const EncoderSpec& spec() const { return spec_; }
  const FrozenWeights& weights() const { return weights_; }
  /// Mutable access for the direct fine-tuning ablation and checkpoint loading.
  FrozenWeights& mutable_weights() { return weights_; }
  std::size_t parameter_count() const { return weights_.parameter_count(); }

  /// Batched forward pass -> [n x output_dim]. `adapters` is empty or holds
  /// one entry per site, indexed layer * kAdapterPositions + position.
  /// With `trainable` the encoder weights receive gradients.
  Var forward(ParamBinder& bind, std::span<const Payload* const> batch, std::span<const AdapterVars> adapters,
              bool trainable = false) const;

  /// Single-example convenience wrapper around forward().
  Embedding encode(const Payload& input, std::span<const AdapterParams> adapters = {}) const;

 private:
  EncoderSpec spec_;
  FrozenWeights weights_;
};

/// Parameter count implied by a spec, without building weights.
std::size_t encoder_parameter_count(const EncoderSpec& spec);

/// Concatenates a text and an image embedding, text first.
Embedding fuse_multimodal(const Embedding& text_emb, const Embedding& image_emb);

}  // namespace fm3
