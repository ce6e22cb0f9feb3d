// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fm3/contrastive.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

enum class HeadType { logistic, softmax };

std::string to_string(HeadType h);
HeadType head_type_from_string(const std::string& s);

struct ModalitySet {
  bool text = false;
  bool image = false;

  /// Modality of the embedding this set produces (multimodal when both).
  Modality embedding_modality() const;
  bool operator==(const ModalitySet&) const = default;
};

struct DatasetRef {
  std::string name;
  std::size_t size = 0;
};

struct TaskSpec {
  std::size_t task_id = 0;
  std::string name;
  ModalitySet modalities;
  HeadType head_type = HeadType::softmax;
  std::size_t num_classes = 2;
  std::vector<DatasetRef> datasets;
  /// Unnormalised sampling weight; when absent the total dataset size is used.
  std::optional<double> weight;
  /// Normalised over the registry; maintained by TaskRegistry.
  double sampling_prob = 0.0;
  /// Optional token sequence naming each class (enables prototype zero-shot).
  std::vector<std::vector<std::uint32_t>> class_names;
};

class TaskRegistry {
 public:
  /// Adds a task and renormalises sampling probabilities. Returns its id.
  std::size_t register_task(TaskSpec spec);

  std::size_t size() const { return tasks_.size(); }
  bool empty() const { return tasks_.empty(); }
  const TaskSpec& task(std::size_t id) const { return tasks_.at(id); }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  std::optional<std::size_t> find(const std::string& name) const;

  std::size_t sample_task(Rng& rng) const;

 private:
  void renormalize();

  std::vector<TaskSpec> tasks_;
};

/// Uniform draw over the task's datasets.
std::size_t sample_dataset(const TaskSpec& task, Rng& rng);

struct Batch {
  std::size_t task_id = 0;
  std::size_t dataset_id = 0;
  std::vector<LabeledExample> examples;
};

/// Samples batch_size examples, with replacement only when the dataset is
/// smaller than the batch.
Batch fill_batch(std::span<const LabeledExample> dataset, std::size_t batch_size, Rng& rng,
                 std::size_t task_id = 0, std::size_t dataset_id = 0);

}  // namespace fm3
