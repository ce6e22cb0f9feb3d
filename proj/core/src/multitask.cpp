// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/multitask.hpp"

#include <numeric>

#include "fm3/error.hpp"

namespace fm3 {

std::string to_string(HeadType h) { return h == HeadType::logistic ? "logistic" : "softmax"; }

HeadType head_type_from_string(const std::string& s) {
  if (s == "logistic") return HeadType::logistic;
  if (s == "softmax") return HeadType::softmax;
  throw ConfigError("unknown head type '" + s + "'");
}

Modality ModalitySet::embedding_modality() const {
  if (text && image) return Modality::multimodal;
  if (text) return Modality::text;
  if (image) return Modality::image;
  throw ConfigError("task declares no modality");
}

std::size_t TaskRegistry::register_task(TaskSpec spec) {
  if (find(spec.name)) throw ConfigError("duplicate task '" + spec.name + "'");
  if (spec.datasets.empty()) throw ConfigError("task '" + spec.name + "' has no datasets");
  if (!spec.modalities.text && !spec.modalities.image) throw ConfigError("task '" + spec.name + "' has no modality");
  if (spec.head_type == HeadType::logistic && spec.num_classes != 2) {
    throw ConfigError("logistic head requires exactly 2 classes (task '" + spec.name + "')");
  }
  if (spec.num_classes < 2) throw ConfigError("task '" + spec.name + "' needs at least 2 classes");
  if (spec.weight && *spec.weight < 0.0) throw ConfigError("negative sampling weight for '" + spec.name + "'");
  spec.task_id = tasks_.size();
  tasks_.push_back(std::move(spec));
  renormalize();
  return tasks_.back().task_id;
}

std::optional<std::size_t> TaskRegistry::find(const std::string& name) const {
  for (const auto& t : tasks_)
    if (t.name == name) return t.task_id;
  return std::nullopt;
}

void TaskRegistry::renormalize() {
  std::vector<double> raw;
  raw.reserve(tasks_.size());
  for (const auto& t : tasks_) {
    if (t.weight) {
      raw.push_back(*t.weight);
    } else {
      std::size_t n = 0;
      for (const auto& d : t.datasets) n += d.size;
      raw.push_back(static_cast<double>(n));
    }
  }
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("task sampling weights sum to zero");
  for (std::size_t i = 0; i < tasks_.size(); ++i) tasks_[i].sampling_prob = raw[i] / total;
}

std::size_t TaskRegistry::sample_task(Rng& rng) const {
  if (tasks_.empty()) throw std::logic_error("sample_task on an empty registry");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (const auto& t : tasks_) {
    if (t.sampling_prob <= 0.0) continue;
    last_positive = t.task_id;
    acc += t.sampling_prob;
    if (u < acc) return t.task_id;
  }
  return last_positive;
}

std::size_t sample_dataset(const TaskSpec& task, Rng& rng) {
  if (task.datasets.size() == 1) return 0;
  return std::uniform_int_distribution<std::size_t>(0, task.datasets.size() - 1)(rng);
}

Batch fill_batch(std::span<const LabeledExample> dataset, std::size_t batch_size, Rng& rng, std::size_t task_id,
                 std::size_t dataset_id) {
  if (dataset.empty()) throw std::invalid_argument("fill_batch on an empty dataset");
  Batch batch{task_id, dataset_id, {}};
  batch.examples.reserve(batch_size);
  if (dataset.size() < batch_size) {
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    for (std::size_t i = 0; i < batch_size; ++i) batch.examples.push_back(dataset[pick(rng)]);
  } else {
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      batch.examples.push_back(dataset[idx[i]]);
    }
  }
  return batch;
}

}  // namespace fm3
