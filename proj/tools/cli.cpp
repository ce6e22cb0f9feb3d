// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fm3/checkpoint.hpp"
#include "fm3/error.hpp"
#include "fm3/pipeline.hpp"
#include "fm3/records.hpp"

namespace fm3 {

namespace {

using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run config (JSON); defaults to the built-in six-task suite");
  cmd->add_option("--seed", c.seed, "Override the global seed");
  cmd->add_option("--workers", c.workers, "Parallel episode workers (0 = hardware threads)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig::with_default_suite() : load_config(c.config);
  if (c.seed) cfg.global_seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (cfg.tasks.empty()) throw ConfigError("config defines no tasks");
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> task_ids(const Suite& suite, const std::vector<std::string>& names) {
  std::vector<std::size_t> ids;
  if (names.empty()) {
    ids.resize(suite.tasks.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
  }
  for (const auto& n : names) ids.push_back(suite.task_index(n));
  return ids;
}

json budget_json(const BudgetReport& b) {
  return json{{"trainable", b.trainable_param_count}, {"frozen", b.frozen_param_count}, {"fraction", b.fraction}};
}

struct TrainArgs {
  Common common;
  std::optional<std::size_t> steps;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  const Suite suite = Suite::build(cfg);
  Model model(cfg);
  const Digest text_before = model.encoder_digest(Modality::text);
  const Digest image_before = model.encoder_digest(Modality::image);
  std::vector<std::vector<LabeledExample>> pools;
  for (const auto& t : suite.tasks) pools.push_back(t.train);
  const std::size_t steps = a.steps.value_or(static_cast<std::size_t>(cfg.optimizer.total_steps));
  const StageResult stage =
      run_multitask_stage(cfg, model, suite.registry, pools, steps, derive_seed(cfg.global_seed, {0x7a}));
  json summary{{"steps", stage.steps},
               {"first_loss", stage.first_loss},
               {"last_loss", stage.last_loss},
               {"budget", budget_json(model.budget())},
               {"encoders_changed",
                model.encoder_digest(Modality::text) != text_before || model.encoder_digest(Modality::image) != image_before}};
  json tasks = json::object();
  for (const auto& t : suite.tasks) {
    run_head_stage(cfg, model, t.spec, t.train);
    const AdapterSet cache = model.materialize(t.spec.task_id);
    const Tensor x = model.features(t.spec.task_id, t.eval, &cache);
    std::vector<std::size_t> preds, labels;
    for (std::size_t i = 0; i < t.eval.size(); ++i) {
      preds.push_back(predict(model.heads().at(t.spec.task_id), x.row(i)).label);
      labels.push_back(t.eval[i].label);
    }
    const MetricSet m = compute_metrics(preds, labels, t.spec.head_type, t.spec.num_classes);
    tasks[t.spec.name] = {{"accuracy", m.accuracy}, {"f1", m.f1}, {"n_eval", m.n_eval}};
  }
  summary["eval"] = tasks;
  save_checkpoint(model, cfg, a.out);
  summary["checkpoint"] = a.out;
  out << summary.dump() << '\n';
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::vector<std::size_t> shots;
  std::optional<std::size_t> episodes;
  std::vector<std::string> tasks;
  std::string protocol = "joint";
  bool skip_contrastive = false;
  bool timings = false;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::optional<LoadedCheckpoint> ckpt;
  RunConfig cfg;
  if (!a.checkpoint.empty()) {
    if (!a.common.config.empty()) throw ConfigError("--config and --checkpoint are mutually exclusive");
    ckpt.emplace(load_checkpoint(a.checkpoint));
    cfg = ckpt->config;
    if (a.common.seed) cfg.global_seed = *a.common.seed;
    if (a.common.workers) cfg.workers = *a.common.workers;
  } else {
    cfg = resolve(a.common);
  }
  const Suite suite = Suite::build(cfg);
  const std::vector<std::size_t> shots = a.shots.empty() ? cfg.shots : a.shots;
  const std::size_t episodes = a.episodes.value_or(cfg.episodes_per_setting);
  EpisodeOptions opts;
  opts.protocol = protocol_from_string(a.protocol);
  opts.skip_contrastive = a.skip_contrastive;
  const Model init = ckpt ? ckpt->model : Model(cfg);
  const auto results = run_sweep(cfg, suite, init, task_ids(suite, a.tasks), shots, episodes, opts);
  if (a.out.empty() || a.out == "-") {
    write_records(out, results, a.timings);
  } else {
    std::ofstream file(a.out, std::ios::app);
    if (!file) throw std::runtime_error("cannot open '" + a.out + "'");
    write_records(file, results, a.timings);
  }
  return kExitOk;
}

struct AblateArgs {
  Common common;
  std::string mode;
  std::size_t k = 64;
  std::optional<std::size_t> episodes;
  std::string protocol = "joint";
  std::string out;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a.common);
  const Ablation mode = ablation_from_string(a.mode);
  if (std::find(cfg.shots.begin(), cfg.shots.end(), a.k) == cfg.shots.end()) cfg.shots.push_back(a.k);
  EpisodeOptions opts;
  opts.protocol = protocol_from_string(a.protocol);
  const AblationReport rep = run_ablation(cfg, mode, a.k, a.episodes.value_or(cfg.episodes_per_setting), opts);
  char buf[160];
  out << "ablation " << to_string(mode) << ", k=" << rep.k << ", " << rep.episodes << " episodes\n";
  std::snprintf(buf, sizeof buf, "trainable fraction: default %.4f, %s %.4f\n", rep.baseline_budget.fraction,
                to_string(mode).c_str(), rep.ablation_budget.fraction);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s\n", "task", "default", to_string(mode).c_str(), "delta");
  out << buf;
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%-24s %10.2f %10.2f %+10.2f\n", r.task.c_str(), 100.0 * r.baseline_mean,
                  100.0 * r.ablation_mean, 100.0 * r.delta);
    out << buf;
  }
  if (!a.out.empty()) {
    std::ofstream file(a.out, std::ios::app);
    if (!file) throw std::runtime_error("cannot open '" + a.out + "'");
    write_records(file, rep.baseline_results);
    write_records(file, rep.ablation_results);
  }
  return kExitOk;
}

struct BenchArgs {
  Common common;
  std::string checkpoint;
  std::string task;
  std::size_t repetitions = 10;
  std::size_t warmup = 1;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  std::optional<LoadedCheckpoint> ckpt;
  if (!a.checkpoint.empty()) ckpt.emplace(load_checkpoint(a.checkpoint));
  const RunConfig cfg = ckpt ? ckpt->config : resolve(a.common);
  const Suite suite = Suite::build(cfg);
  const std::size_t task = a.task.empty() ? 0 : suite.task_index(a.task);
  Model model = ckpt ? ckpt->model : Model(cfg);
  const TaskData& data = suite.tasks[task];
  if (!model.heads().contains(task)) run_head_stage(cfg, model, data.spec, data.train);
  const BenchStats s = bench_inference(model, task, data.eval, a.repetitions, a.warmup);
  json j{{"task", data.spec.name},
         {"samples", s.samples},
         {"repetitions", s.repetitions},
         {"warmup", s.warmup},
         {"mean_seconds", s.mean_seconds},
         {"median_seconds", s.median_seconds},
         {"p95_seconds", s.p95_seconds},
         {"total_seconds", s.total_seconds},
         {"flops_per_sample", s.flops_per_sample},
         {"tape_nodes_per_sample", s.tape_nodes_per_sample},
         {"text_encoder", to_string(cfg.text_encoder.size_class)},
         {"vision_encoder", to_string(cfg.vision_encoder.size_class)}};
  out << j.dump() << '\n';
  return kExitOk;
}

struct ReportArgs {
  std::string records;
  std::string metric = "accuracy";
  std::string svg;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::ifstream in(a.records);
  if (!in) throw ConfigError("cannot open records file '" + a.records + "'");
  const ReportTable t = aggregate(read_records(in), a.metric);
  out << format_table(t);
  if (!a.svg.empty()) {
    std::ofstream svg(a.svg);
    if (!svg) throw std::runtime_error("cannot write '" + a.svg + "'");
    svg << render_svg(t);
  }
  return kExitOk;
}

struct GenArgs {
  Common common;
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve(a.common);
  const Suite suite = Suite::build(cfg);
  std::filesystem::create_directories(a.out);
  for (const auto& t : suite.tasks) {
    for (const auto& [split, pool] : {std::pair{"train", &t.train}, std::pair{"eval", &t.eval}}) {
      const auto path = std::filesystem::path(a.out) / (t.spec.name + "." + split + ".ndjson");
      std::ofstream file(path);
      if (!file) throw std::runtime_error("cannot write '" + path.string() + "'");
      export_pool(file, *pool, t.spec.name, split);
      out << path.string() << ' ' << pool->size() << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot multimodal multitask pipeline", "fm3"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Joint contrastive stage, heads on the full pools, checkpoint");
  add_common(c_train, train.common);
  c_train->add_option("--steps", train.steps, "Contrastive steps (default optimizer.total_steps)");
  c_train->add_option("--out", train.out, "Checkpoint path")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "k-shot episode sweep; writes one metric record per line");
  add_common(c_eval, eval.common);
  c_eval->add_option("--checkpoint", eval.checkpoint, "Start every episode from this checkpoint");
  c_eval->add_option("--shots", eval.shots, "Comma-separated k values")->delimiter(',');
  c_eval->add_option("--episodes", eval.episodes, "Episodes per (task, k)");
  c_eval->add_option("--tasks", eval.tasks, "Comma-separated task names")->delimiter(',');
  c_eval->add_option("--protocol", eval.protocol, "joint or per_task")->check(CLI::IsMember({"joint", "per_task"}));
  c_eval->add_flag("--skip-contrastive", eval.skip_contrastive, "Fit heads on untuned embeddings");
  c_eval->add_flag("--timings", eval.timings, "Include wall-clock durations in records");
  c_eval->add_option("--out", eval.out, "Append records to this file (default stdout)");

  AblateArgs ablate;
  auto* c_ablate = app.add_subcommand("ablate", "Default vs ablated configuration, per-task deltas");
  add_common(c_ablate, ablate.common);
  c_ablate->add_option("--mode", ablate.mode, "no_hypernet|budget_5pct|small_text|small_vision|small_both")->required();
  c_ablate->add_option("--shots", ablate.k, "k for the comparison (default 64)");
  c_ablate->add_option("--episodes", ablate.episodes, "Episodes per task");
  c_ablate->add_option("--protocol", ablate.protocol, "joint or per_task")->check(CLI::IsMember({"joint", "per_task"}));
  c_ablate->add_option("--out", ablate.out, "Append both record sets to this file");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Per-sample inference latency");
  add_common(c_bench, bench.common);
  c_bench->add_option("--checkpoint", bench.checkpoint, "Benchmark a trained checkpoint");
  c_bench->add_option("--task", bench.task, "Task name (default: first task)");
  c_bench->add_option("--repetitions", bench.repetitions, "Timed passes over the eval pool")->check(CLI::PositiveNumber);
  c_bench->add_option("--warmup", bench.warmup, "Untimed passes");

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Aggregate metric records into a task x shots table");
  c_report->add_option("records", report.records, "Metric records file")->required();
  c_report->add_option("--metric", report.metric, "accuracy or f1")->check(CLI::IsMember({"accuracy", "f1"}));
  c_report->add_option("--svg", report.svg, "Also write a plot");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Export the synthetic pools as NDJSON");
  add_common(c_gen, gen.common);
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_ablate->parsed()) return cmd_ablate(ablate, out);
    if (c_bench->parsed()) return cmd_bench(bench, out);
    if (c_report->parsed()) return cmd_report(report, out);
    if (c_gen->parsed()) return cmd_gen(gen, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace fm3
