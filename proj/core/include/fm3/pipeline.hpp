// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fm3/config.hpp"
#include "fm3/model.hpp"
#include "fm3/multitask.hpp"
#include "fm3/synthdata.hpp"

namespace fm3 {

/// Generated pools for one configured task; train/eval are unions over datasets.
struct TaskData {
  TaskSpec spec;
  std::vector<SynthTask> datasets;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> eval;
};

struct Suite {
  TaskRegistry registry;
  std::vector<TaskData> tasks;

  static Suite build(const RunConfig& cfg);
  std::size_t task_index(const std::string& name) const;
};

/// Draws k examples per class without replacement.
std::vector<LabeledExample> sample_support(std::span<const LabeledExample> pool, std::size_t num_classes, std::size_t k,
                                           Rng& rng);

struct StageResult {
  bool skipped = false;
  std::string skip_reason;
  std::size_t steps = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
};

/// Contrastive fine-tuning of the stage-(ii) parameters on one labeled set.
/// `steps` defaults to config.contrastive.steps.
StageResult run_contrastive_stage(const RunConfig& cfg, Model& model, std::size_t task,
                                  std::span<const LabeledExample> examples, std::uint64_t seed,
                                  std::optional<std::size_t> steps = std::nullopt);

/// Joint stage over several tasks; each step samples one task by registry
/// probability and mines pairs from that task's examples only.
StageResult run_multitask_stage(const RunConfig& cfg, Model& model, const TaskRegistry& registry,
                                std::span<const std::vector<LabeledExample>> per_task, std::size_t steps,
                                std::uint64_t seed);

/// Fits and installs the task head on frozen features of the support set.
HeadFit run_head_stage(const RunConfig& cfg, Model& model, const TaskSpec& task,
                       std::span<const LabeledExample> support);

enum class Protocol { joint, per_task };
std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct EpisodeOptions {
  Protocol protocol = Protocol::joint;
  bool skip_contrastive = false;
  std::string mode = "default";
};

struct EpisodeResult {
  std::size_t task_id = 0;
  std::string task;
  std::size_t k = 0;
  std::size_t episode = 0;
  std::uint64_t seed = 0;
  MetricSet metrics;
  double train_seconds = 0.0;
  double infer_seconds = 0.0;
  bool contrastive_skipped = false;
  /// "" when a head was fit; "prototype" or "chance" for k = 0.
  std::string zero_shot;
  std::string protocol = "joint";
  std::string mode = "default";
};

std::uint64_t episode_seed(const RunConfig& cfg, std::optional<std::size_t> task, std::size_t k, std::size_t episode);

/// One per-task episode starting from `init`.
EpisodeResult evaluate_episode(const RunConfig& cfg, const Suite& suite, const Model& init, std::size_t task,
                               std::size_t k, std::size_t episode, const EpisodeOptions& options = {});

/// One joint episode: k-shot supports for every task, a shared contrastive
/// stage, then one head per task.
std::vector<EpisodeResult> evaluate_joint_episode(const RunConfig& cfg, const Suite& suite, const Model& init,
                                                  std::size_t k, std::size_t episode,
                                                  const EpisodeOptions& options = {});

/// Cross-lingual episode: contrastive stage on the support rendered in
/// languages 0 and 1, head fit on language 0, evaluation on language 1.
EpisodeResult evaluate_cross_lingual(const RunConfig& cfg, const Suite& suite, const Model& init, std::size_t task,
                                     std::size_t k, std::size_t episode);

using ResultSink = std::function<void(const EpisodeResult&)>;

/// Every (task, k, episode) cell, in that order regardless of worker count.
std::vector<EpisodeResult> run_sweep(const RunConfig& cfg, const Suite& suite, const Model& init,
                                     std::span<const std::size_t> tasks, std::span<const std::size_t> shots,
                                     std::size_t episodes, const EpisodeOptions& options = {});

enum class Ablation { no_hypernet, budget_5pct, small_text, small_vision, small_both };
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
RunConfig ablated_config(const RunConfig& cfg, Ablation a);

struct AblationRow {
  std::string task;
  double baseline_mean = 0.0;
  double ablation_mean = 0.0;
  double baseline_median = 0.0;
  double ablation_median = 0.0;
  double delta = 0.0;  // ablation_mean - baseline_mean
};

struct AblationReport {
  Ablation mode = Ablation::no_hypernet;
  std::size_t k = 0;
  std::size_t episodes = 0;
  BudgetReport baseline_budget;
  BudgetReport ablation_budget;
  std::vector<AblationRow> rows;
  std::vector<EpisodeResult> baseline_results;
  std::vector<EpisodeResult> ablation_results;
};

AblationReport run_ablation(const RunConfig& cfg, Ablation mode, std::size_t k, std::size_t episodes,
                            const EpisodeOptions& options = {});

struct BenchStats {
  std::size_t samples = 0;
  std::size_t repetitions = 0;
  std::size_t warmup = 0;
  double mean_seconds = 0.0;
  double median_seconds = 0.0;
  double p95_seconds = 0.0;
  double total_seconds = 0.0;
  std::uint64_t flops_per_sample = 0;
  std::size_t tape_nodes_per_sample = 0;
};

/// Per-sample latency of the full predict path over `pool`. Adapters are
/// materialized once before timing. Statistics are over repetitions.
BenchStats bench_inference(const Model& model, std::size_t task, std::span<const LabeledExample> pool,
                           std::size_t repetitions, std::size_t warmup = 1);

std::size_t resolve_workers(std::size_t configured);

}  // namespace fm3
