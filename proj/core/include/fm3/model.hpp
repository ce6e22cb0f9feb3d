// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fm3/config.hpp"
#include "fm3/contrastive.hpp"
#include "fm3/encoders.hpp"
#include "fm3/heads.hpp"
#include "fm3/hypernet.hpp"

namespace fm3 {

struct TrainableParam {
  std::string name;
  Tensor* tensor = nullptr;
  double weight_decay = 0.0;
};

/// Adapter weights of every encoder site for one task.
struct AdapterSet {
  std::vector<AdapterParams> text;
  std::vector<AdapterParams> image;
};

/// Frozen encoders, per-modality hypernetworks, projections and task heads.
class Model {
 public:
  explicit Model(const RunConfig& cfg);

  const ModelLayout& layout() const { return layout_; }
  const HypernetSizing& sizing() const { return sizing_; }
  bool hypernet_enabled() const { return layout_.hypernet_enabled; }
  std::size_t num_tasks() const { return modalities_.size(); }
  const ModalitySet& modalities(std::size_t task) const { return modalities_.at(task); }

  const Encoder& encoder(Modality m) const;
  /// Null when hypernetworks are disabled.
  const HyperNetwork* hypernet(Modality m) const;
  const ProjectionHeads& projections() const { return projections_; }

  AdapterSet materialize(std::size_t task) const;

  /// Shared-space embeddings [n x shared_dim] on the binder's tape. With
  /// `trainable` the stage-(ii) parameters receive gradient. A cache replaces
  /// adapter generation (inference only).
  Var embed(ParamBinder& bind, std::size_t task, std::span<const Payload* const> batch, bool trainable,
            const AdapterSet* cache = nullptr) const;

  /// Inference path: L2-normalized shared-space features [n x shared_dim].
  Tensor features(std::size_t task, std::span<const Payload* const> batch, const AdapterSet* cache = nullptr) const;
  Tensor features(std::size_t task, std::span<const LabeledExample> examples, const AdapterSet* cache = nullptr) const;

  /// Stage-(ii) parameters with their weight-decay group.
  std::vector<TrainableParam> trainable(const OptimizerConfig& opt);

  /// Stage-(ii) tensors by qualified name; encoder weights appear only when
  /// they are trainable. Heads are kept separately.
  std::map<std::string, const Tensor*> stored_tensors() const;
  std::map<std::string, Tensor*> stored_tensors();

  std::map<std::size_t, Head>& heads() { return heads_; }
  const std::map<std::size_t, Head>& heads() const { return heads_; }

  Prediction predict(std::size_t task, const Payload& input, const AdapterSet* cache = nullptr) const;

  /// Digest of the current encoder weights (recomputed, not cached).
  Digest encoder_digest(Modality m) const;
  /// Trainable/frozen split from the instantiated tensors.
  BudgetReport budget() const;

 private:
  Encoder& mutable_encoder(Modality m);

  ModelLayout layout_;
  HypernetSizing sizing_;
  std::vector<ModalitySet> modalities_;
  Encoder text_;
  Encoder vision_;
  std::optional<HyperNetwork> text_hyper_;
  std::optional<HyperNetwork> vision_hyper_;
  ProjectionHeads projections_;
  std::map<std::size_t, Head> heads_;
};

ModelLayout layout_of(const RunConfig& cfg);

}  // namespace fm3
