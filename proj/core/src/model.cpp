// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/model.hpp"

#include <array>
#include <stdexcept>
#include <utility>

#include "fm3/error.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

ModelLayout layout_of(const RunConfig& cfg) {
  ModelLayout l;
  l.text = cfg.text_encoder;
  l.vision = cfg.vision_encoder;
  l.num_tasks = std::max<std::size_t>(cfg.tasks.size(), 1);
  l.cond_dim = cfg.hypernet.cond_dim;
  l.shared_dim = cfg.shared_dim;
  l.hypernet_enabled = cfg.hypernet.enabled;
  l.min_width = cfg.hypernet.min_width;
  l.max_width = cfg.hypernet.max_width;
  return l;
}

Model::Model(const RunConfig& cfg)
    : layout_(layout_of(cfg)), text_(cfg.text_encoder), vision_(cfg.vision_encoder) {
  for (const auto& t : cfg.tasks) modalities_.push_back(t.modalities);
  if (modalities_.empty()) modalities_.push_back(ModalitySet{true, true});
  if (layout_.hypernet_enabled) {
    sizing_ = configure_budget(layout_, cfg.hypernet.budget_fraction);
    text_hyper_.emplace(hypernet_dims(layout_, sizing_, Modality::text), derive_seed(cfg.global_seed, {1}));
    vision_hyper_.emplace(hypernet_dims(layout_, sizing_, Modality::image), derive_seed(cfg.global_seed, {2}));
  }
  projections_ = ProjectionHeads(cfg.text_encoder.output_dim, cfg.vision_encoder.output_dim, cfg.shared_dim,
                                 derive_seed(cfg.global_seed, {3}));
}

const Encoder& Model::encoder(Modality m) const {
  if (m == Modality::text) return text_;
  if (m == Modality::image) return vision_;
  throw std::invalid_argument("no encoder for modality " + to_string(m));
}

Encoder& Model::mutable_encoder(Modality m) { return const_cast<Encoder&>(std::as_const(*this).encoder(m)); }

const HyperNetwork* Model::hypernet(Modality m) const {
  if (m == Modality::text) return text_hyper_ ? &*text_hyper_ : nullptr;
  if (m == Modality::image) return vision_hyper_ ? &*vision_hyper_ : nullptr;
  throw std::invalid_argument("no hypernetwork for modality " + to_string(m));
}

AdapterSet Model::materialize(std::size_t task) const {
  AdapterSet out;
  if (!hypernet_enabled()) return out;
  if (task >= num_tasks()) throw std::out_of_range("task id " + std::to_string(task) + " not registered");
  const ModalitySet& mods = modalities_[task];
  auto fill = [&](const Encoder& enc, const HyperNetwork& hn, std::vector<AdapterParams>& dst) {
    for (std::size_t l = 0; l < enc.spec().num_layers; ++l)
      for (std::size_t p = 0; p < kAdapterPositions; ++p) dst.push_back(hn.generate_adapters(task, l, p));
  };
  if (mods.text) fill(text_, *text_hyper_, out.text);
  if (mods.image) fill(vision_, *vision_hyper_, out.image);
  return out;
}

namespace {

std::vector<AdapterVars> generated(ParamBinder& bind, const Encoder& enc, const HyperNetwork& hn, std::size_t task,
                                   bool trainable) {
  std::vector<AdapterVars> out;
  out.reserve(enc.spec().num_sites());
  for (std::size_t l = 0; l < enc.spec().num_layers; ++l)
    for (std::size_t p = 0; p < kAdapterPositions; ++p) out.push_back(hn.generate(bind, task, l, p, trainable));
  return out;
}

std::vector<AdapterVars> bound(ParamBinder& bind, const std::vector<AdapterParams>& params) {
  std::vector<AdapterVars> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(bind_adapter(bind.tape(), p));
  return out;
}

Var embed_impl(const Model& m, ParamBinder& bind, std::size_t task, std::span<const Payload* const> batch,
               bool trainable, const AdapterSet* cache) {
  if (task >= m.num_tasks()) throw std::out_of_range("task id " + std::to_string(task) + " not registered");
  const ModalitySet& mods = m.modalities(task);
  const bool tune_encoders = trainable && !m.hypernet_enabled();
  auto run = [&](Modality mod, const std::vector<AdapterParams>* cached) {
    const Encoder& enc = m.encoder(mod);
    std::vector<AdapterVars> adapters;
    if (cached != nullptr) {
      adapters = bound(bind, *cached);
    } else if (const HyperNetwork* hn = m.hypernet(mod)) {
      adapters = generated(bind, enc, *hn, task, trainable);
    }
    return enc.forward(bind, batch, adapters, tune_encoders);
  };
  const bool use_cache = cache != nullptr && m.hypernet_enabled();
  if (mods.text && mods.image) {
    std::array<Var, 2> parts{run(Modality::text, use_cache ? &cache->text : nullptr),
                             run(Modality::image, use_cache ? &cache->image : nullptr)};
    return m.projections().project(bind, concat_cols(parts), Modality::multimodal, trainable);
  }
  const Modality mod = mods.text ? Modality::text : Modality::image;
  const std::vector<AdapterParams>* cached = use_cache ? (mods.text ? &cache->text : &cache->image) : nullptr;
  return m.projections().project(bind, run(mod, cached), mod, trainable);
}

}  // namespace

Var Model::embed(ParamBinder& bind, std::size_t task, std::span<const Payload* const> batch, bool trainable,
                 const AdapterSet* cache) const {
  if (trainable && cache != nullptr) throw std::invalid_argument("adapter cache is for inference only");
  return embed_impl(*this, bind, task, batch, trainable, cache);
}

Tensor Model::features(std::size_t task, std::span<const Payload* const> batch, const AdapterSet* cache) const {
  Tape tape;
  ParamBinder bind(tape);
  return l2_normalize_rows(embed_impl(*this, bind, task, batch, false, cache)).value();
}

Tensor Model::features(std::size_t task, std::span<const LabeledExample> examples, const AdapterSet* cache) const {
  std::vector<const Payload*> batch;
  batch.reserve(examples.size());
  for (const auto& e : examples) batch.push_back(&e.inputs);
  return features(task, batch, cache);
}

std::vector<TrainableParam> Model::trainable(const OptimizerConfig& opt) {
  std::vector<TrainableParam> out;
  if (hypernet_enabled()) {
    for (auto& [name, t] : text_hyper_->parameters()) out.push_back({"hypernet.text." + name, t, opt.hypernet_weight_decay});
    for (auto& [name, t] : vision_hyper_->parameters())
      out.push_back({"hypernet.image." + name, t, opt.hypernet_weight_decay});
  } else {
    for (auto& [name, t] : text_.mutable_weights().tensors) out.push_back({"encoder.text." + name, &t, opt.weight_decay});
    for (auto& [name, t] : vision_.mutable_weights().tensors) out.push_back({"encoder.image." + name, &t, opt.weight_decay});
  }
  for (auto& [name, t] : projections_.parameters()) out.push_back({"projection." + name, t, opt.weight_decay});
  return out;
}

std::map<std::string, Tensor*> Model::stored_tensors() {
  std::map<std::string, Tensor*> out;
  for (const auto& p : trainable(OptimizerConfig{})) out[p.name] = p.tensor;
  return out;
}

std::map<std::string, const Tensor*> Model::stored_tensors() const {
  std::map<std::string, const Tensor*> out;
  for (const auto& [k, v] : const_cast<Model*>(this)->stored_tensors()) out[k] = v;
  return out;
}

Prediction Model::predict(std::size_t task, const Payload& input, const AdapterSet* cache) const {
  auto it = heads_.find(task);
  if (it == heads_.end()) throw std::out_of_range("no head trained for task " + std::to_string(task));
  const Payload* p = &input;
  const Tensor f = features(task, std::span<const Payload* const>(&p, 1), cache);
  return fm3::predict(it->second, f.data());
}

Digest Model::encoder_digest(Modality m) const { return encoder(m).weights().recompute(); }

BudgetReport Model::budget() const {
  BudgetReport r;
  const std::size_t enc = text_.parameter_count() + vision_.parameter_count();
  std::size_t hyper = 0;
  if (text_hyper_) hyper += text_hyper_->parameter_count();
  if (vision_hyper_) hyper += vision_hyper_->parameter_count();
  r.trainable_param_count = hyper + projections_.parameter_count() + (hypernet_enabled() ? 0 : enc);
  r.frozen_param_count = hypernet_enabled() ? enc : 0;
  r.fraction = static_cast<double>(r.trainable_param_count) /
               static_cast<double>(r.trainable_param_count + r.frozen_param_count);
  return r;
}

}  // namespace fm3
