// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/encoders.hpp"

#include <cmath>

#include "fm3/error.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::multimodal: return "multimodal";
  }
  return "?";
}

std::string to_string(SizeClass s) { return s == SizeClass::base ? "base" : "small"; }

Modality modality_from_string(const std::string& s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  if (s == "multimodal") return Modality::multimodal;
  throw ConfigError("unknown modality '" + s + "'");
}

SizeClass size_class_from_string(const std::string& s) {
  if (s == "base") return SizeClass::base;
  if (s == "small") return SizeClass::small;
  throw ConfigError("unknown size class '" + s + "'");
}

// Small variants are sized so that parameter counts land near 43% (text) and
// 22% (vision) of the base variants.
EncoderSpec EncoderSpec::text(SizeClass size) {
  EncoderSpec s;
  s.modality = Modality::text;
  s.input_dim = kDefaultVocab;
  s.size_class = size;
  if (size == SizeClass::base) {
    s.hidden_dim = 64;
    s.num_layers = 4;
    s.output_dim = 64;
    s.weight_seed = 0x7E47'0001;
  } else {
    s.hidden_dim = 28;
    s.num_layers = 2;
    s.output_dim = 28;
    s.weight_seed = 0x7E47'0002;
  }
  return s;
}

EncoderSpec EncoderSpec::vision(SizeClass size) {
  EncoderSpec s;
  s.modality = Modality::image;
  s.input_dim = kGridSize;
  s.size_class = size;
  if (size == SizeClass::base) {
    s.hidden_dim = 96;
    s.num_layers = 4;
    s.output_dim = 96;
    s.weight_seed = 0x1A6E'0001;
  } else {
    s.hidden_dim = 44;
    s.num_layers = 2;
    s.output_dim = 44;
    s.weight_seed = 0x1A6E'0002;
  }
  return s;
}

void EncoderSpec::validate() const {
  if (modality == Modality::multimodal) throw ConfigError("an encoder is either text or image");
  if (input_dim == 0 || hidden_dim == 0 || num_layers == 0 || output_dim == 0) {
    throw ConfigError(to_string(modality) + " encoder: dimensions must be positive");
  }
}

std::size_t FrozenWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

std::size_t encoder_parameter_count(const EncoderSpec& spec) {
  const std::size_t h = spec.hidden_dim;
  std::size_t n = spec.input_dim * h;
  if (spec.modality == Modality::image) n += h;
  n += spec.num_layers * (h * h + 3 * h);
  n += h * spec.output_dim + spec.output_dim;
  return n;
}

namespace {

std::string layer_name(std::size_t l, const char* part) { return "layer" + std::to_string(l) + "." + part; }

// Stand-in for a pretrained image front end: each hidden unit is a Gaussian
// spatial receptive field with random centre, width and channel mix, scaled to
// unit column norm.
Tensor receptive_fields(std::size_t hidden, Rng& rng) {
  std::uniform_real_distribution<double> centre(0.0, static_cast<double>(kGridWidth - 1));
  std::uniform_real_distribution<double> width(0.8, 1.8);
  std::normal_distribution<double> mix(0.0, 1.0);
  Tensor w({kGridSize, hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    const double cx = centre(rng), cy = centre(rng), sigma = width(rng);
    double channel[kGridChannels];
    for (auto& c : channel) c = mix(rng);
    double norm = 0.0;
    for (std::size_t y = 0; y < kGridHeight; ++y) {
      for (std::size_t x = 0; x < kGridWidth; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < kGridChannels; ++c) {
          const double v = g * channel[c];
          w.at((y * kGridWidth + x) * kGridChannels + c, j) = v;
          norm += v * v;
        }
      }
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (std::size_t i = 0; i < kGridSize; ++i) w.at(i, j) *= inv;
  }
  return w;
}

}  // namespace

Encoder::Encoder(EncoderSpec spec) : spec_(spec) {
  spec_.validate();
  Rng rng(spec_.weight_seed);
  const std::size_t h = spec_.hidden_dim;
  auto& w = weights_.tensors;
  if (spec_.modality == Modality::text) {
    w["embed"] = gaussian({spec_.input_dim, h}, 1.0, rng);
  } else {
    w["input.weight"] = spec_.input_dim == kGridSize
                            ? receptive_fields(h, rng)
                            : gaussian({spec_.input_dim, h}, 1.0 / std::sqrt(static_cast<double>(spec_.input_dim)), rng);
    w["input.bias"] = Tensor({h}, 0.0);
  }
  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    w[layer_name(l, "weight")] = gaussian({h, h}, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    w[layer_name(l, "bias")] = Tensor({h}, 0.0);
    w[layer_name(l, "ln_gain")] = Tensor({h}, 1.0);
    w[layer_name(l, "ln_bias")] = Tensor({h}, 0.0);
  }
  w["output.weight"] = gaussian({h, spec_.output_dim}, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  w["output.bias"] = Tensor({spec_.output_dim}, 0.0);
  weights_.content_digest = weights_.recompute();
}

Var Encoder::forward(ParamBinder& bind, std::span<const Payload* const> batch, std::span<const AdapterVars> adapters,
                     bool trainable) const {
  if (batch.empty()) throw ShapeError("encoder forward on an empty batch");
  if (!adapters.empty() && adapters.size() != spec_.num_sites()) {
    throw ShapeError(to_string(spec_.modality) + " encoder: expected " + std::to_string(spec_.num_sites()) +
                     " adapters, got " + std::to_string(adapters.size()));
  }
  Tape& tape = bind.tape();
  const auto& w = weights_.tensors;
  auto param = [&](const std::string& name) { return bind(w.at(name), trainable); };

  Var h;
  if (spec_.modality == Modality::text) {
    std::vector<std::vector<std::uint32_t>> tokens;
    tokens.reserve(batch.size());
    for (const Payload* p : batch) {
      if (!p->has_text()) throw ShapeError("text encoder: example has no tokens");
      tokens.push_back(p->tokens);
    }
    h = gather_mean(param("embed"), tokens);
  } else {
    Tensor x({batch.size(), spec_.input_dim});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i]->image.size() != spec_.input_dim) {
        throw ShapeError("image encoder: expected " + std::to_string(spec_.input_dim) + " features, got " +
                         std::to_string(batch[i]->image.size()));
      }
      std::copy(batch[i]->image.begin(), batch[i]->image.end(), x.row(i).begin());
    }
    h = add_bias(matmul(tape.constant(std::move(x)), param("input.weight")), param("input.bias"));
  }

  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    Var z = add_bias(matmul(h, param(layer_name(l, "weight"))), param(layer_name(l, "bias")));
    z = tanh(layer_norm(z, param(layer_name(l, "ln_gain")), param(layer_name(l, "ln_bias"))));
    if (!adapters.empty()) z = apply_adapter(z, adapters[l * kAdapterPositions]);
    h = add(h, z);
    if (!adapters.empty()) h = apply_adapter(h, adapters[l * kAdapterPositions + 1]);
  }
  return add_bias(matmul(h, param("output.weight")), param("output.bias"));
}

Embedding Encoder::encode(const Payload& input, std::span<const AdapterParams> adapters) const {
  Tape tape;
  ParamBinder bind(tape);
  std::vector<AdapterVars> vars;
  vars.reserve(adapters.size());
  for (const auto& a : adapters) vars.push_back(bind_adapter(tape, a));
  const Payload* batch[] = {&input};
  Var out = forward(bind, batch, vars);
  return Embedding{out.value().reshaped({spec_.output_dim}), spec_.modality, std::nullopt};
}

Embedding fuse_multimodal(const Embedding& text_emb, const Embedding& image_emb) {
  if (text_emb.modality != Modality::text || image_emb.modality != Modality::image) {
    throw std::invalid_argument("fuse_multimodal needs one text and one image embedding, got " +
                                to_string(text_emb.modality) + " and " + to_string(image_emb.modality));
  }
  std::vector<double> v(text_emb.vector.values());
  v.insert(v.end(), image_emb.vector.values().begin(), image_emb.vector.values().end());
  return Embedding{Tensor::vector(std::move(v)), Modality::multimodal, text_emb.task_id};
}

}  // namespace fm3
