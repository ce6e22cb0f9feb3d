// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

// Shared hypernetwork that emits adapter weights for every
// (task, layer, position) site of one encoder, the projection heads that map
// embeddings into the shared contrastive space, and the trainable-parameter
// budget arithmetic.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fm3/adapter.hpp"
#include "fm3/binder.hpp"
#include "fm3/encoders.hpp"

namespace fm3 {

struct HyperNetDims {
  std::size_t cond_dim = 16;       // width of each of the three condition embeddings
  std::size_t hidden_width = 8;    // generator hidden layer
  std::size_t bottleneck = 8;      // adapter bottleneck b
  std::size_t adapter_hidden = 0;  // encoder hidden dim h
  std::size_t num_tasks = 1;
  std::size_t num_layers = 1;
  std::size_t num_positions = kAdapterPositions;

  void validate() const;
};

/// Element counts of the six generated blocks, in AdapterParams field order.
std::array<std::size_t, 6> adapter_block_sizes(std::size_t hidden, std::size_t bottleneck);
std::size_t hypernet_parameter_count(const HyperNetDims& dims);

class HyperNetwork {
 public:
  HyperNetwork(HyperNetDims dims, std::uint64_t seed);

  const HyperNetDims& dims() const { return dims_; }

  /// Records generation of one site's adapter on the binder's tape.
  AdapterVars generate(ParamBinder& bind, std::size_t task, std::size_t layer, std::size_t position,
                       bool trainable) const;
  /// Materialized adapter for one site.
  AdapterParams generate_adapters(std::size_t task, std::size_t layer, std::size_t position) const;

  /// Every parameter tensor by name (condition tables included).
  std::map<std::string, Tensor*> parameters();
  std::map<std::string, const Tensor*> parameters() const;
  std::size_t parameter_count() const;

 private:
  void check_ids(std::size_t task, std::size_t layer, std::size_t position) const;

  HyperNetDims dims_;
  Tensor task_table_;      // [tasks x cond]
  Tensor layer_table_;     // [layers x cond]
  Tensor position_table_;  // [positions x cond]
  Tensor hidden_weight_;   // [3*cond x width]
  Tensor hidden_bias_;     // [width]
  std::array<Tensor, 6> head_weight_;  // [width x block]
  std::array<Tensor, 6> head_bias_;    // [block]
};

/// Linear maps from each modality's embedding into the shared space.
class ProjectionHeads {
 public:
  ProjectionHeads() = default;
  ProjectionHeads(std::size_t text_dim, std::size_t image_dim, std::size_t shared_dim, std::uint64_t seed);

  std::size_t shared_dim() const { return shared_dim_; }
  std::size_t input_dim(Modality m) const;

  Var project(ParamBinder& bind, Var embedding, Modality modality, bool trainable) const;
  /// Single-embedding form.
  Tensor project(const Embedding& embedding) const;

  std::map<std::string, Tensor*> parameters();
  std::map<std::string, const Tensor*> parameters() const;
  std::size_t parameter_count() const;

 private:
  std::size_t index(Modality m) const;

  std::size_t shared_dim_ = 0;
  std::array<Tensor, 3> weight_;  // text, image, multimodal: [d_in x shared]
  std::array<Tensor, 3> bias_;
};

std::size_t projection_parameter_count(std::size_t text_dim, std::size_t image_dim, std::size_t shared_dim);

/// Everything needed to count parameters without building a model.
struct ModelLayout {
  EncoderSpec text;
  EncoderSpec vision;
  std::size_t num_tasks = 1;
  std::size_t cond_dim = 16;
  std::size_t shared_dim = 64;
  bool hypernet_enabled = true;
  std::size_t min_width = 8;
  std::size_t max_width = 64;
};

struct HypernetSizing {
  std::size_t bottleneck = 0;
  std::size_t hidden_width = 0;
};

struct BudgetReport {
  std::size_t trainable_param_count = 0;
  std::size_t frozen_param_count = 0;
  double fraction = 0.0;
};

/// Dims for the text (modality text) or vision hypernetwork of a layout.
HyperNetDims hypernet_dims(const ModelLayout& layout, const HypernetSizing& sizing, Modality modality);

/// Trainable/frozen split implied by a layout. With hypernetworks disabled the
/// encoders move to the trainable side.
BudgetReport budget_report(const ModelLayout& layout, const HypernetSizing& sizing);

/// Largest bottleneck, then largest generator width, whose trainable fraction
/// stays within target_fraction. Throws ConfigError when nothing fits.
HypernetSizing configure_budget(const ModelLayout& layout, double target_fraction);

}  // namespace fm3
