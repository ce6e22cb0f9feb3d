// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fm3/encoders.hpp"
#include "fm3/multitask.hpp"
#include "fm3/optim.hpp"
#include "fm3/synthdata.hpp"

namespace fm3 {

enum class LossKind { mnr, explicit_pairs };

struct HypernetConfig {
  bool enabled = true;
  double budget_fraction = 0.10;
  std::size_t cond_dim = 16;
  std::size_t min_width = 8;
  std::size_t max_width = 64;
  bool operator==(const HypernetConfig&) const = default;
};

struct ContrastiveConfig {
  std::size_t R = 20;
  LossKind loss = LossKind::mnr;
  double scale = 20.0;
  double margin = 0.0;
  /// Optimisation steps of the per-episode contrastive stage.
  std::size_t steps = 60;
  bool operator==(const ContrastiveConfig&) const = default;
};

struct OptimizerConfig {
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 20;
  std::int64_t total_steps = 2000;
  double constant_until_frac = 0.8;
  double decay_rate = 0.99995;
  double clip_norm = 1.0;
  double weight_decay = 0.1;
  double hypernet_weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Schedule for a stage of `steps` steps; warmup scales with the stage length.
  LrSchedule schedule(std::int64_t steps) const;
  bool operator==(const OptimizerConfig&) const = default;
};

struct HeadConfig {
  double l2 = 1e-3;
  std::size_t max_iters = 5000;
  double tolerance = 1e-6;
  bool operator==(const HeadConfig&) const = default;
};

struct DatasetConfig {
  std::string name;
  std::uint64_t seed = 1;
  std::size_t examples_per_class = 128;
  std::size_t eval_per_class = 50;
  double noise = 0.0;
  std::size_t languages = 1;
  bool operator==(const DatasetConfig&) const = default;
};

struct TaskConfig {
  std::string name;
  SynthKind kind = SynthKind::text_binary;
  ModalitySet modalities;
  HeadType head = HeadType::logistic;
  std::size_t classes = 2;
  std::optional<double> weight;
  std::vector<DatasetConfig> datasets;
  bool operator==(const TaskConfig&) const = default;
};

struct RunConfig {
  EncoderSpec text_encoder = EncoderSpec::text(SizeClass::base);
  EncoderSpec vision_encoder = EncoderSpec::vision(SizeClass::base);
  HypernetConfig hypernet;
  std::size_t shared_dim = 64;
  ContrastiveConfig contrastive;
  OptimizerConfig optimizer;
  HeadConfig heads;
  std::size_t batch_size = 32;
  std::vector<std::size_t> shots{0, 4, 16, 64};
  std::size_t episodes_per_setting = 20;
  /// Parallel episode workers; 0 means one per hardware thread.
  std::size_t workers = 1;
  std::uint64_t global_seed = 7;
  std::vector<TaskConfig> tasks;

  /// Defaults plus one noiseless task of each synthetic kind.
  static RunConfig with_default_suite();

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Strict conversion: unknown keys and wrongly typed values raise ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

/// Task config for one synthetic kind with a single dataset.
TaskConfig make_task(SynthKind kind, const std::string& name, std::uint64_t seed, double noise = 0.0,
                     std::size_t languages = 1);

}  // namespace fm3
