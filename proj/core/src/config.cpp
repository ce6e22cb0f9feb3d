// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fm3/error.hpp"

namespace fm3 {

using nlohmann::json;

LrSchedule OptimizerConfig::schedule(std::int64_t steps) const {
  LrSchedule s;
  s.peak_lr = peak_lr;
  s.total_steps = steps;
  s.constant_until_frac = constant_until_frac;
  s.decay_rate = decay_rate;
  s.warmup_steps = total_steps > 0 ? static_cast<std::int64_t>(std::llround(static_cast<double>(warmup_steps) *
                                                                             static_cast<double>(steps) /
                                                                             static_cast<double>(total_steps)))
                                   : 0;
  return s;
}

TaskConfig make_task(SynthKind kind, const std::string& name, std::uint64_t seed, double noise, std::size_t languages) {
  TaskConfig t;
  t.name = name;
  t.kind = kind;
  t.modalities = modalities_of(kind);
  t.classes = default_num_classes(kind);
  t.head = t.classes == 2 ? HeadType::logistic : HeadType::softmax;
  DatasetConfig d;
  d.name = name;
  d.seed = seed;
  d.noise = noise;
  d.languages = kind == SynthKind::multilingual_text ? std::max<std::size_t>(languages, 2) : 1;
  t.datasets.push_back(d);
  return t;
}

RunConfig RunConfig::with_default_suite() {
  RunConfig c;
  c.tasks.push_back(make_task(SynthKind::text_binary, "text_binary", 101));
  c.tasks.push_back(make_task(SynthKind::text_multiclass, "text_multiclass", 102));
  c.tasks.push_back(make_task(SynthKind::vision_multiclass, "vision_multiclass", 103));
  c.tasks.push_back(make_task(SynthKind::visionlang_entailment, "visionlang_entailment", 104));
  c.tasks.push_back(make_task(SynthKind::visionlang_qa, "visionlang_qa", 105));
  c.tasks.push_back(make_task(SynthKind::multilingual_text, "multilingual_text", 106, 0.0, 2));
  return c;
}

void RunConfig::validate() const {
  text_encoder.validate();
  vision_encoder.validate();
  if (text_encoder.modality != Modality::text) throw ConfigError("encoders.text must be a text encoder");
  if (vision_encoder.modality != Modality::image) throw ConfigError("encoders.vision must be an image encoder");
  if (vision_encoder.input_dim != kGridSize) throw ConfigError("vision encoder input_dim must be " + std::to_string(kGridSize));
  if (text_encoder.input_dim < kDefaultVocab) {
    throw ConfigError("text encoder vocabulary must cover " + std::to_string(kDefaultVocab) + " token ids");
  }
  if (hypernet.enabled && !(hypernet.budget_fraction > 0.0 && hypernet.budget_fraction < 1.0)) {
    throw ConfigError("hypernet.budget_fraction must lie in (0, 1)");
  }
  if (hypernet.min_width == 0 || hypernet.min_width > hypernet.max_width) throw ConfigError("bad hypernet width range");
  if (shared_dim == 0) throw ConfigError("projection.shared_dim must be positive");
  if (contrastive.R < 1) throw ConfigError("contrastive.R must be at least 1");
  if (!(contrastive.scale > 0.0)) throw ConfigError("contrastive.scale must be positive");
  if (!(optimizer.clip_norm > 0.0)) throw ConfigError("optimizer.clip_norm must be positive");
  optimizer.schedule(optimizer.total_steps).validate();
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (shots.empty()) throw ConfigError("shots must not be empty");
  if (episodes_per_setting < 1) throw ConfigError("episodes_per_setting must be at least 1");
  std::set<std::string> names;
  for (const auto& t : tasks) {
    if (t.name.empty()) throw ConfigError("task without a name");
    if (!names.insert(t.name).second) throw ConfigError("duplicate task '" + t.name + "'");
    if (t.datasets.empty()) throw ConfigError("task '" + t.name + "' has no datasets");
    if (!(t.modalities == modalities_of(t.kind))) {
      throw ConfigError("task '" + t.name + "': modalities do not match kind " + to_string(t.kind));
    }
    if (t.head == HeadType::logistic && t.classes != 2) throw ConfigError("task '" + t.name + "': logistic head needs 2 classes");
    for (const auto& d : t.datasets) {
      SynthTaskConfig sc;
      sc.kind = t.kind;
      sc.name = t.name + "/" + d.name;
      sc.num_classes = t.classes;
      sc.examples_per_class = d.examples_per_class;
      sc.eval_per_class = d.eval_per_class;
      sc.noise_level = d.noise;
      sc.num_languages = d.languages;
      sc.validate();
    }
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + " has the wrong type");
  }
}

json encoder_to_json(const EncoderSpec& s) {
  return json{{"size_class", to_string(s.size_class)}, {"input_dim", s.input_dim},   {"hidden_dim", s.hidden_dim},
              {"num_layers", s.num_layers},             {"output_dim", s.output_dim}, {"weight_seed", s.weight_seed}};
}

EncoderSpec encoder_from_json(const json& j, Modality modality, const std::string& section) {
  check_keys(j, {"size_class", "input_dim", "hidden_dim", "num_layers", "output_dim", "weight_seed"}, section);
  std::string size = "base";
  read(j, "size_class", size, section);
  const SizeClass sc = size_class_from_string(size);
  EncoderSpec s = modality == Modality::text ? EncoderSpec::text(sc) : EncoderSpec::vision(sc);
  read(j, "input_dim", s.input_dim, section);
  read(j, "hidden_dim", s.hidden_dim, section);
  read(j, "num_layers", s.num_layers, section);
  read(j, "output_dim", s.output_dim, section);
  read(j, "weight_seed", s.weight_seed, section);
  return s;
}

std::vector<std::string> modality_names(const ModalitySet& m) {
  std::vector<std::string> out;
  if (m.text) out.emplace_back("text");
  if (m.image) out.emplace_back("image");
  return out;
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.global_seed;
  j["encoders"] = {{"text", encoder_to_json(c.text_encoder)}, {"vision", encoder_to_json(c.vision_encoder)}};
  j["hypernet"] = {{"enabled", c.hypernet.enabled},
                   {"budget_fraction", c.hypernet.budget_fraction},
                   {"cond_dim", c.hypernet.cond_dim},
                   {"min_width", c.hypernet.min_width},
                   {"max_width", c.hypernet.max_width}};
  j["projection"] = {{"shared_dim", c.shared_dim}};
  j["contrastive"] = {{"R", c.contrastive.R},
                      {"loss", c.contrastive.loss == LossKind::mnr ? "mnr" : "explicit"},
                      {"scale", c.contrastive.scale},
                      {"margin", c.contrastive.margin},
                      {"steps", c.contrastive.steps}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"peak_lr", o.peak_lr},
                    {"warmup_steps", o.warmup_steps},
                    {"total_steps", o.total_steps},
                    {"constant_until_frac", o.constant_until_frac},
                    {"decay_rate", o.decay_rate},
                    {"clip_norm", o.clip_norm},
                    {"weight_decay", o.weight_decay},
                    {"hypernet_weight_decay", o.hypernet_weight_decay},
                    {"beta1", o.beta1},
                    {"beta2", o.beta2},
                    {"epsilon", o.epsilon}};
  j["heads"] = {{"l2", c.heads.l2}, {"max_iters", c.heads.max_iters}, {"tolerance", c.heads.tolerance}};
  j["batch_size"] = c.batch_size;
  j["shots"] = c.shots;
  j["episodes_per_setting"] = c.episodes_per_setting;
  j["workers"] = c.workers;
  json tasks = json::array();
  for (const auto& t : c.tasks) {
    json tj{{"name", t.name},
            {"kind", to_string(t.kind)},
            {"modalities", modality_names(t.modalities)},
            {"head", to_string(t.head)},
            {"classes", t.classes}};
    if (t.weight) tj["weight"] = *t.weight;
    json ds = json::array();
    for (const auto& d : t.datasets) {
      ds.push_back({{"name", d.name},
                    {"seed", d.seed},
                    {"examples_per_class", d.examples_per_class},
                    {"eval_per_class", d.eval_per_class},
                    {"noise", d.noise},
                    {"languages", d.languages}});
    }
    tj["datasets"] = std::move(ds);
    tasks.push_back(std::move(tj));
  }
  j["tasks"] = std::move(tasks);
  return j;
}

RunConfig config_from_json(const json& j) {
  check_keys(j, {"seed", "encoders", "hypernet", "projection", "contrastive", "optimizer", "heads", "batch_size", "shots",
                 "episodes_per_setting", "workers", "tasks"},
             "config");
  RunConfig c;
  read(j, "seed", c.global_seed, "config");
  if (auto it = j.find("encoders"); it != j.end()) {
    check_keys(*it, {"text", "vision"}, "encoders");
    if (it->contains("text")) c.text_encoder = encoder_from_json(it->at("text"), Modality::text, "encoders.text");
    if (it->contains("vision")) c.vision_encoder = encoder_from_json(it->at("vision"), Modality::image, "encoders.vision");
  }
  if (auto it = j.find("hypernet"); it != j.end()) {
    check_keys(*it, {"enabled", "budget_fraction", "cond_dim", "min_width", "max_width"}, "hypernet");
    read(*it, "enabled", c.hypernet.enabled, "hypernet");
    read(*it, "budget_fraction", c.hypernet.budget_fraction, "hypernet");
    read(*it, "cond_dim", c.hypernet.cond_dim, "hypernet");
    read(*it, "min_width", c.hypernet.min_width, "hypernet");
    read(*it, "max_width", c.hypernet.max_width, "hypernet");
  }
  if (auto it = j.find("projection"); it != j.end()) {
    check_keys(*it, {"shared_dim"}, "projection");
    read(*it, "shared_dim", c.shared_dim, "projection");
  }
  if (auto it = j.find("contrastive"); it != j.end()) {
    check_keys(*it, {"R", "loss", "scale", "margin", "steps"}, "contrastive");
    read(*it, "R", c.contrastive.R, "contrastive");
    std::string loss = "mnr";
    read(*it, "loss", loss, "contrastive");
    if (loss == "mnr") {
      c.contrastive.loss = LossKind::mnr;
    } else if (loss == "explicit") {
      c.contrastive.loss = LossKind::explicit_pairs;
    } else {
      throw ConfigError("contrastive.loss must be 'mnr' or 'explicit'");
    }
    read(*it, "scale", c.contrastive.scale, "contrastive");
    read(*it, "margin", c.contrastive.margin, "contrastive");
    read(*it, "steps", c.contrastive.steps, "contrastive");
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    check_keys(*it, {"peak_lr", "warmup_steps", "total_steps", "constant_until_frac", "decay_rate", "clip_norm",
                     "weight_decay", "hypernet_weight_decay", "beta1", "beta2", "epsilon"},
               "optimizer");
    auto& o = c.optimizer;
    read(*it, "peak_lr", o.peak_lr, "optimizer");
    read(*it, "warmup_steps", o.warmup_steps, "optimizer");
    read(*it, "total_steps", o.total_steps, "optimizer");
    read(*it, "constant_until_frac", o.constant_until_frac, "optimizer");
    read(*it, "decay_rate", o.decay_rate, "optimizer");
    read(*it, "clip_norm", o.clip_norm, "optimizer");
    read(*it, "weight_decay", o.weight_decay, "optimizer");
    read(*it, "hypernet_weight_decay", o.hypernet_weight_decay, "optimizer");
    read(*it, "beta1", o.beta1, "optimizer");
    read(*it, "beta2", o.beta2, "optimizer");
    read(*it, "epsilon", o.epsilon, "optimizer");
  }
  if (auto it = j.find("heads"); it != j.end()) {
    check_keys(*it, {"l2", "max_iters", "tolerance"}, "heads");
    read(*it, "l2", c.heads.l2, "heads");
    read(*it, "max_iters", c.heads.max_iters, "heads");
    read(*it, "tolerance", c.heads.tolerance, "heads");
  }
  read(j, "batch_size", c.batch_size, "config");
  read(j, "shots", c.shots, "config");
  read(j, "episodes_per_setting", c.episodes_per_setting, "config");
  read(j, "workers", c.workers, "config");
  if (auto it = j.find("tasks"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("tasks must be an array");
    for (const auto& tj : *it) {
      check_keys(tj, {"name", "kind", "modalities", "head", "classes", "weight", "datasets"}, "tasks[]");
      TaskConfig t;
      read(tj, "name", t.name, "tasks[]");
      std::string kind;
      read(tj, "kind", kind, "tasks[]");
      if (kind.empty()) throw ConfigError("task '" + t.name + "' has no kind");
      t.kind = synth_kind_from_string(kind);
      t.modalities = modalities_of(t.kind);
      t.classes = default_num_classes(t.kind);
      read(tj, "classes", t.classes, "tasks[]");
      t.head = t.classes == 2 ? HeadType::logistic : HeadType::softmax;
      if (tj.contains("modalities")) {
        std::vector<std::string> mods;
        read(tj, "modalities", mods, "tasks[]");
        ModalitySet m;
        for (const auto& s : mods) {
          const Modality mod = modality_from_string(s);
          if (mod == Modality::text) m.text = true;
          else if (mod == Modality::image) m.image = true;
          else throw ConfigError("task modalities are 'text' and/or 'image'");
        }
        t.modalities = m;
      }
      if (tj.contains("head")) {
        std::string head;
        read(tj, "head", head, "tasks[]");
        t.head = head_type_from_string(head);
      }
      if (tj.contains("weight")) {
        double w = 0.0;
        read(tj, "weight", w, "tasks[]");
        t.weight = w;
      }
      if (!tj.contains("datasets") || !tj.at("datasets").is_array()) {
        throw ConfigError("task '" + t.name + "' needs a datasets array");
      }
      for (const auto& dj : tj.at("datasets")) {
        check_keys(dj, {"name", "seed", "examples_per_class", "eval_per_class", "noise", "languages"}, "datasets[]");
        DatasetConfig d;
        d.name = t.name;
        read(dj, "name", d.name, "datasets[]");
        read(dj, "seed", d.seed, "datasets[]");
        read(dj, "examples_per_class", d.examples_per_class, "datasets[]");
        read(dj, "eval_per_class", d.eval_per_class, "datasets[]");
        read(dj, "noise", d.noise, "datasets[]");
        read(dj, "languages", d.languages, "datasets[]");
        t.datasets.push_back(std::move(d));
      }
      c.tasks.push_back(std::move(t));
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace fm3
