// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/hypernet.hpp"

#include <algorithm>
#include <cmath>

#include "fm3/error.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

namespace {

constexpr std::array<const char*, 6> kBlockNames = {"down_weight", "down_bias", "up_weight",
                                                    "up_bias",     "ln_gain",   "ln_bias"};

}  // namespace

void HyperNetDims::validate() const {
  if (cond_dim == 0 || hidden_width == 0 || adapter_hidden == 0 || num_tasks == 0 || num_layers == 0 ||
      num_positions == 0) {
    throw ConfigError("hypernetwork dimensions must be positive");
  }
  if (bottleneck == 0 || bottleneck >= adapter_hidden) {
    throw ConfigError("adapter bottleneck must satisfy 0 < b < h (b=" + std::to_string(bottleneck) +
                      ", h=" + std::to_string(adapter_hidden) + ")");
  }
}

std::array<std::size_t, 6> adapter_block_sizes(std::size_t h, std::size_t b) {
  return {h * b, b, b * h, h, h, h};
}

std::size_t hypernet_parameter_count(const HyperNetDims& d) {
  std::size_t n = (d.num_tasks + d.num_layers + d.num_positions) * d.cond_dim;
  n += 3 * d.cond_dim * d.hidden_width + d.hidden_width;
  for (auto block : adapter_block_sizes(d.adapter_hidden, d.bottleneck)) n += (d.hidden_width + 1) * block;
  return n;
}

HyperNetwork::HyperNetwork(HyperNetDims dims, std::uint64_t seed) : dims_(dims) {
  dims_.validate();
  Rng rng(seed);
  const std::size_t c = dims_.cond_dim, w = dims_.hidden_width, h = dims_.adapter_hidden;
  task_table_ = gaussian({dims_.num_tasks, c}, 0.02, rng);
  layer_table_ = gaussian({dims_.num_layers, c}, 0.02, rng);
  position_table_ = gaussian({dims_.num_positions, c}, 0.02, rng);
  hidden_weight_ = gaussian({3 * c, w}, 1.0 / std::sqrt(3.0 * static_cast<double>(c)), rng);
  hidden_bias_ = Tensor({w});
  const auto sizes = adapter_block_sizes(h, dims_.bottleneck);
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    head_weight_[k] = Tensor({w, sizes[k]});
    head_bias_[k] = Tensor({sizes[k]});
  }
  // Down projection starts as a random map that varies with the condition;
  // the up projection starts at zero so every adapter begins as the identity.
  head_weight_[0] = gaussian({w, sizes[0]}, 0.1 / std::sqrt(static_cast<double>(h)), rng);
  head_bias_[0] = gaussian({sizes[0]}, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  head_bias_[4] = Tensor({h}, 1.0);
}

void HyperNetwork::check_ids(std::size_t task, std::size_t layer, std::size_t position) const {
  if (task >= dims_.num_tasks) throw std::out_of_range("unregistered task id " + std::to_string(task));
  if (layer >= dims_.num_layers) throw std::out_of_range("unregistered layer id " + std::to_string(layer));
  if (position >= dims_.num_positions) throw std::out_of_range("unregistered adapter position " + std::to_string(position));
}

AdapterVars HyperNetwork::generate(ParamBinder& bind, std::size_t task, std::size_t layer, std::size_t position,
                                   bool trainable) const {
  check_ids(task, layer, position);
  const Var parts[] = {select_row(bind(task_table_, trainable), task),
                       select_row(bind(layer_table_, trainable), layer),
                       select_row(bind(position_table_, trainable), position)};
  Var cond = concat_cols(parts);
  Var hidden = tanh(add_bias(matmul(cond, bind(hidden_weight_, trainable)), bind(hidden_bias_, trainable)));
  const std::size_t h = dims_.adapter_hidden, b = dims_.bottleneck;
  const std::array<Shape, 6> shapes = {Shape{h, b}, Shape{b}, Shape{b, h}, Shape{h}, Shape{h}, Shape{h}};
  std::array<Var, 6> out;
  for (std::size_t k = 0; k < 6; ++k) {
    Var flat = add_bias(matmul(hidden, bind(head_weight_[k], trainable)), bind(head_bias_[k], trainable));
    out[k] = reshape(flat, shapes[k]);
  }
  return AdapterVars{out[0], out[1], out[2], out[3], out[4], out[5]};
}

AdapterParams HyperNetwork::generate_adapters(std::size_t task, std::size_t layer, std::size_t position) const {
  Tape tape;
  ParamBinder bind(tape);
  AdapterVars v = generate(bind, task, layer, position, false);
  return AdapterParams{v.down_weight.value(), v.down_bias.value(), v.up_weight.value(),
                       v.up_bias.value(),     v.ln_gain.value(),   v.ln_bias.value()};
}

std::map<std::string, Tensor*> HyperNetwork::parameters() {
  std::map<std::string, Tensor*> p{{"task_embedding", &task_table_},
                                   {"layer_embedding", &layer_table_},
                                   {"position_embedding", &position_table_},
                                   {"hidden.weight", &hidden_weight_},
                                   {"hidden.bias", &hidden_bias_}};
  for (std::size_t k = 0; k < 6; ++k) {
    p[std::string("head.") + kBlockNames[k] + ".weight"] = &head_weight_[k];
    p[std::string("head.") + kBlockNames[k] + ".bias"] = &head_bias_[k];
  }
  return p;
}

std::map<std::string, const Tensor*> HyperNetwork::parameters() const {
  std::map<std::string, const Tensor*> out;
  for (const auto& [k, v] : const_cast<HyperNetwork*>(this)->parameters()) out[k] = v;
  return out;
}

std::size_t HyperNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : parameters()) n += v->size();
  return n;
}

ProjectionHeads::ProjectionHeads(std::size_t text_dim, std::size_t image_dim, std::size_t shared_dim,
                                 std::uint64_t seed)
    : shared_dim_(shared_dim) {
  if (text_dim == 0 || image_dim == 0 || shared_dim == 0) throw ConfigError("projection dims must be positive");
  Rng rng(seed);
  auto init = [&](std::size_t d_in) {
    if (d_in == shared_dim) {
      Tensor eye({d_in, shared_dim});
      for (std::size_t i = 0; i < d_in; ++i) eye.at(i, i) = 1.0;
      return eye;
    }
    return gaussian({d_in, shared_dim}, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  };
  weight_[0] = init(text_dim);
  weight_[1] = init(image_dim);
  // The fused map starts as the average of the two unimodal maps.
  Tensor fused({text_dim + image_dim, shared_dim});
  const double s = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < text_dim; ++i)
    for (std::size_t j = 0; j < shared_dim; ++j) fused.at(i, j) = s * weight_[0].at(i, j);
  for (std::size_t i = 0; i < image_dim; ++i)
    for (std::size_t j = 0; j < shared_dim; ++j) fused.at(text_dim + i, j) = s * weight_[1].at(i, j);
  weight_[2] = std::move(fused);
  for (auto& b : bias_) b = Tensor({shared_dim});
}

std::size_t ProjectionHeads::index(Modality m) const {
  switch (m) {
    case Modality::text: return 0;
    case Modality::image: return 1;
    case Modality::multimodal: return 2;
  }
  return 0;
}

std::size_t ProjectionHeads::input_dim(Modality m) const { return weight_[index(m)].dim(0); }

Var ProjectionHeads::project(ParamBinder& bind, Var embedding, Modality modality, bool trainable) const {
  const std::size_t k = index(modality);
  if (embedding.value().cols() != weight_[k].dim(0)) {
    throw ShapeError(to_string(modality) + " projection expects dim " + std::to_string(weight_[k].dim(0)) +
                     ", got " + std::to_string(embedding.value().cols()));
  }
  return add_bias(matmul(embedding, bind(weight_[k], trainable)), bind(bias_[k], trainable));
}

Tensor ProjectionHeads::project(const Embedding& embedding) const {
  Tape tape;
  ParamBinder bind(tape);
  const std::size_t d = embedding.vector.size();
  Var x = tape.constant(embedding.vector.reshaped({1, d}));
  return project(bind, x, embedding.modality, false).value().reshaped({shared_dim_});
}

std::map<std::string, Tensor*> ProjectionHeads::parameters() {
  return {{"text.weight", &weight_[0]},  {"text.bias", &bias_[0]},
          {"image.weight", &weight_[1]}, {"image.bias", &bias_[1]},
          {"multimodal.weight", &weight_[2]}, {"multimodal.bias", &bias_[2]}};
}

std::map<std::string, const Tensor*> ProjectionHeads::parameters() const {
  std::map<std::string, const Tensor*> out;
  for (const auto& [k, v] : const_cast<ProjectionHeads*>(this)->parameters()) out[k] = v;
  return out;
}

std::size_t ProjectionHeads::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : parameters()) n += v->size();
  return n;
}

std::size_t projection_parameter_count(std::size_t text_dim, std::size_t image_dim, std::size_t shared_dim) {
  return (text_dim + image_dim + (text_dim + image_dim)) * shared_dim + 3 * shared_dim;
}

HyperNetDims hypernet_dims(const ModelLayout& layout, const HypernetSizing& sizing, Modality modality) {
  const EncoderSpec& enc = modality == Modality::text ? layout.text : layout.vision;
  HyperNetDims d;
  d.cond_dim = layout.cond_dim;
  d.hidden_width = sizing.hidden_width;
  d.bottleneck = sizing.bottleneck;
  d.adapter_hidden = enc.hidden_dim;
  d.num_tasks = layout.num_tasks;
  d.num_layers = enc.num_layers;
  d.num_positions = kAdapterPositions;
  return d;
}

BudgetReport budget_report(const ModelLayout& layout, const HypernetSizing& sizing) {
  const std::size_t encoders = encoder_parameter_count(layout.text) + encoder_parameter_count(layout.vision);
  const std::size_t proj = projection_parameter_count(layout.text.output_dim, layout.vision.output_dim, layout.shared_dim);
  BudgetReport r;
  if (layout.hypernet_enabled) {
    r.trainable_param_count = proj + hypernet_parameter_count(hypernet_dims(layout, sizing, Modality::text)) +
                              hypernet_parameter_count(hypernet_dims(layout, sizing, Modality::image));
    r.frozen_param_count = encoders;
  } else {
    r.trainable_param_count = proj + encoders;
    r.frozen_param_count = 0;
  }
  r.fraction = static_cast<double>(r.trainable_param_count) /
               static_cast<double>(r.trainable_param_count + r.frozen_param_count);
  return r;
}

HypernetSizing configure_budget(const ModelLayout& layout, double target_fraction) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0)) {
    throw ConfigError("budget fraction must lie in (0, 1)");
  }
  if (!layout.hypernet_enabled) throw ConfigError("budget applies only when hypernetworks are enabled");
  const std::size_t max_b = std::min(layout.text.hidden_dim, layout.vision.hidden_dim) - 1;
  for (std::size_t b = max_b; b >= 1; --b) {
    for (std::size_t w = layout.max_width; w >= layout.min_width && w >= 1; --w) {
      HypernetSizing s{b, w};
      if (budget_report(layout, s).fraction <= target_fraction) return s;
    }
  }
  throw ConfigError("no hypernetwork configuration fits a trainable fraction of " + std::to_string(target_fraction));
}

}  // namespace fm3
