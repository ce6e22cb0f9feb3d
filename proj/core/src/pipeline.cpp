// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "fm3/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "fm3/error.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  return std::max(s, 1e-9);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Suite Suite::build(const RunConfig& cfg) {
  Suite s;
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
    const TaskConfig& tc = cfg.tasks[t];
    TaskData data;
    data.spec.task_id = t;
    data.spec.name = tc.name;
    data.spec.modalities = tc.modalities;
    data.spec.head_type = tc.head;
    data.spec.num_classes = tc.classes;
    data.spec.weight = tc.weight;
    for (const auto& dc : tc.datasets) {
      SynthTaskConfig sc;
      sc.kind = tc.kind;
      sc.name = tc.name + "/" + dc.name;
      sc.task_id = t;
      sc.num_classes = tc.classes;
      sc.examples_per_class = dc.examples_per_class;
      sc.eval_per_class = dc.eval_per_class;
      sc.noise_level = dc.noise;
      sc.num_languages = dc.languages;
      sc.rng_seed = dc.seed;
      SynthTask task = SynthTask::generate(sc);
      auto train = task.train_examples();
      auto eval = task.eval_examples();
      data.spec.datasets.push_back(DatasetRef{dc.name, train.size()});
      data.train.insert(data.train.end(), train.begin(), train.end());
      data.eval.insert(data.eval.end(), eval.begin(), eval.end());
      if (data.spec.class_names.empty()) data.spec.class_names = task.spec().class_names;
      data.datasets.push_back(std::move(task));
    }
    const std::size_t id = s.registry.register_task(data.spec);
    data.spec = s.registry.task(id);
    s.tasks.push_back(std::move(data));
  }
  return s;
}

std::size_t Suite::task_index(const std::string& name) const {
  auto id = registry.find(name);
  if (!id) throw ConfigError("unknown task '" + name + "'");
  return *id;
}

std::vector<LabeledExample> sample_support(std::span<const LabeledExample> pool, std::size_t num_classes, std::size_t k,
                                           Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].label >= num_classes) throw std::out_of_range("label outside class range");
    by_class[pool[i].label].push_back(i);
  }
  std::vector<LabeledExample> out;
  out.reserve(k * num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < k) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                  " examples, fewer than k = " + std::to_string(k));
    }
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(pool[idx[i]]);
    }
  }
  return out;
}

namespace {

struct Trainer {
  Trainer(const RunConfig& cfg, Model& model) : cfg(cfg), model(model), params(model.trainable(cfg.optimizer)) {
    std::vector<double> wd;
    for (const auto& p : params) {
      tensors.push_back(p.tensor);
      wd.push_back(p.weight_decay);
    }
    state = AdamWState::init(tensors, wd, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.epsilon);
  }

  bool feasible(std::span<const LabeledExample> examples) const {
    const FeasiblePairs f = enumerate_pairs(labels_of(examples));
    const std::size_t min_pos = cfg.contrastive.loss == LossKind::mnr ? 2 : 1;
    return f.positives.size() >= min_pos && (cfg.contrastive.loss == LossKind::mnr || !f.negatives.empty());
  }

  static std::vector<std::size_t> labels_of(std::span<const LabeledExample> examples) {
    std::vector<std::size_t> labels;
    labels.reserve(examples.size());
    for (const auto& e : examples) labels.push_back(e.label);
    return labels;
  }

  double step(std::size_t task, std::span<const LabeledExample> examples, const std::vector<ContrastivePair>& mined,
              double lr) {
    std::vector<ContrastivePair> pairs = mined;
    if (cfg.contrastive.loss == LossKind::mnr) {
      std::erase_if(pairs, [](const ContrastivePair& p) { return p.polarity != Polarity::positive; });
    }
    std::unordered_map<std::size_t, std::size_t> row;
    std::vector<const Payload*> batch;
    std::vector<std::size_t> anchors, others;
    std::vector<Polarity> polarity;
    auto local = [&](std::size_t idx) {
      auto [it, inserted] = row.try_emplace(idx, batch.size());
      if (inserted) batch.push_back(&examples[idx].inputs);
      return it->second;
    };
    for (const auto& p : pairs) {
      anchors.push_back(local(p.anchor));
      others.push_back(local(p.other));
      polarity.push_back(p.polarity);
    }
    Tape tape;
    ParamBinder bind(tape);
    Var emb = model.embed(bind, task, batch, true);
    Var a = gather_rows(emb, anchors);
    Var b = gather_rows(emb, others);
    Var loss = cfg.contrastive.loss == LossKind::mnr ? mnr_loss(a, b, cfg.contrastive.scale)
                                                     : explicit_pair_loss(a, b, polarity, cfg.contrastive.margin);
    tape.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(bind.grad(*p.tensor));
    clip_global_norm(grads, cfg.optimizer.clip_norm);
    adamw_step(tensors, grads, state, lr);
    return loss.value().item();
  }

  const RunConfig& cfg;
  Model& model;
  std::vector<TrainableParam> params;
  std::vector<Tensor*> tensors;
  AdamWState state;
};

}  // namespace

StageResult run_contrastive_stage(const RunConfig& cfg, Model& model, std::size_t task,
                                  std::span<const LabeledExample> examples, std::uint64_t seed,
                                  std::optional<std::size_t> steps) {
  StageResult r;
  const std::size_t n_steps = steps.value_or(cfg.contrastive.steps);
  std::vector<std::size_t> labels = Trainer::labels_of(examples);
  std::sort(labels.begin(), labels.end());
  if (examples.size() < 2 || labels.front() == labels.back()) {
    r.skipped = true;
    r.skip_reason = "needs at least 2 examples of at least 2 classes";
    return r;
  }
  if (n_steps == 0) {
    r.skipped = true;
    r.skip_reason = "zero steps";
    return r;
  }
  Trainer trainer(cfg, model);
  if (!trainer.feasible(examples)) {
    r.skipped = true;
    r.skip_reason = "too few positive pairs for the configured loss";
    return r;
  }
  // R pairs per polarity are mined once per episode and reused every step.
  const auto pairs = mine_pairs(Trainer::labels_of(examples), PairMiningConfig{cfg.contrastive.R, seed});
  const LrSchedule sched = cfg.optimizer.schedule(static_cast<std::int64_t>(n_steps));
  for (std::size_t s = 0; s < n_steps; ++s) {
    double loss = 0.0;
    try {
      loss = trainer.step(task, examples, pairs, lr_at_step(sched, static_cast<std::int64_t>(s)));
    } catch (const NumericError& e) {
      throw NumericError("contrastive stage, task " + std::to_string(task) + ", step " + std::to_string(s) + ": " +
                         e.what());
    }
    if (s == 0) r.first_loss = loss;
    r.last_loss = loss;
    ++r.steps;
  }
  return r;
}

StageResult run_multitask_stage(const RunConfig& cfg, Model& model, const TaskRegistry& registry,
                                std::span<const std::vector<LabeledExample>> per_task, std::size_t steps,
                                std::uint64_t seed) {
  if (per_task.size() != registry.size()) throw std::invalid_argument("one example set per registered task expected");
  StageResult r;
  Trainer trainer(cfg, model);
  std::vector<bool> ok(per_task.size());
  bool any = false;
  for (std::size_t t = 0; t < per_task.size(); ++t) {
    ok[t] = registry.task(t).sampling_prob > 0.0 && trainer.feasible(per_task[t]);
    any = any || ok[t];
  }
  if (!any || steps == 0) {
    r.skipped = true;
    r.skip_reason = steps == 0 ? "zero steps" : "no task has enough pairs";
    return r;
  }
  std::vector<std::vector<ContrastivePair>> pairs(per_task.size());
  for (std::size_t t = 0; t < per_task.size(); ++t) {
    if (ok[t]) pairs[t] = mine_pairs(Trainer::labels_of(per_task[t]), PairMiningConfig{cfg.contrastive.R, derive_seed(seed, {1, t})});
  }
  Rng rng(seed);
  const LrSchedule sched = cfg.optimizer.schedule(static_cast<std::int64_t>(steps));
  for (std::size_t s = 0; s < steps; ++s) {
    std::size_t t = registry.sample_task(rng);
    while (!ok[t]) t = registry.sample_task(rng);
    double loss = 0.0;
    try {
      loss = trainer.step(t, per_task[t], pairs[t], lr_at_step(sched, static_cast<std::int64_t>(s)));
    } catch (const NumericError& e) {
      throw NumericError("multitask stage, task " + std::to_string(t) + ", step " + std::to_string(s) + ": " + e.what());
    }
    if (s == 0) r.first_loss = loss;
    r.last_loss = loss;
    ++r.steps;
  }
  return r;
}

HeadFit run_head_stage(const RunConfig& cfg, Model& model, const TaskSpec& task,
                       std::span<const LabeledExample> support) {
  if (support.empty()) throw std::invalid_argument("head stage needs a non-empty support set");
  const AdapterSet cache = model.materialize(task.task_id);
  const Tensor x = model.features(task.task_id, support, &cache);
  std::vector<std::size_t> labels;
  labels.reserve(support.size());
  for (const auto& e : support) labels.push_back(e.label);
  HeadFitOptions opts{cfg.heads.l2, cfg.heads.max_iters, cfg.heads.tolerance};
  HeadFit fit = fit_head(x, labels, task.head_type, task.num_classes, opts, task.task_id);
  model.heads()[task.task_id] = fit.head;
  return fit;
}

std::string to_string(Protocol p) { return p == Protocol::joint ? "joint" : "per_task"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "joint") return Protocol::joint;
  if (s == "per_task") return Protocol::per_task;
  throw ConfigError("unknown protocol '" + s + "'");
}

std::uint64_t episode_seed(const RunConfig& cfg, std::optional<std::size_t> task, std::size_t k, std::size_t episode) {
  return derive_seed(cfg.global_seed, {task ? *task + 1 : 0, k, episode});
}

namespace {

void check_shot(const RunConfig& cfg, std::size_t k) {
  if (std::find(cfg.shots.begin(), cfg.shots.end(), k) == cfg.shots.end()) {
    throw ConfigError("k = " + std::to_string(k) + " is not among the configured shots");
  }
}

// Fills metrics, zero-shot label and inference time of `r` from the eval pool.
void score(const Model& model, const TaskSpec& spec, std::span<const LabeledExample> eval, EpisodeResult& r) {
  if (eval.empty()) throw std::invalid_argument("eval pool of task '" + spec.name + "' is empty");
  const auto t0 = Clock::now();
  const AdapterSet cache = model.materialize(spec.task_id);
  const Tensor x = model.features(spec.task_id, eval, &cache);
  const std::size_t d = x.cols();
  std::vector<std::size_t> preds(eval.size()), labels(eval.size());
  auto head = model.heads().find(spec.task_id);
  if (head != model.heads().end()) {
    for (std::size_t i = 0; i < eval.size(); ++i) preds[i] = predict(head->second, x.row(i)).label;
  } else if (!spec.class_names.empty() && !spec.modalities.image) {
    std::vector<Payload> names(spec.class_names.size());
    std::vector<const Payload*> ptrs;
    for (std::size_t c = 0; c < names.size(); ++c) {
      names[c].tokens = spec.class_names[c];
      ptrs.push_back(&names[c]);
    }
    const Tensor proto = model.features(spec.task_id, ptrs, &cache);
    for (std::size_t i = 0; i < eval.size(); ++i) {
      double best = -2.0;
      for (std::size_t c = 0; c < names.size(); ++c) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += x.at(i, j) * proto.at(c, j);
        if (dot > best) {
          best = dot;
          preds[i] = c;
        }
      }
    }
    r.zero_shot = "prototype";
  } else {
    const Head zero = zero_head(spec.head_type, d, spec.num_classes, spec.task_id);
    for (std::size_t i = 0; i < eval.size(); ++i) preds[i] = predict(zero, x.row(i)).label;
    r.zero_shot = "chance";
  }
  for (std::size_t i = 0; i < eval.size(); ++i) labels[i] = eval[i].label;
  r.metrics = compute_metrics(preds, labels, spec.head_type, spec.num_classes);
  r.infer_seconds = seconds_since(t0);
}

EpisodeResult blank_result(const TaskSpec& spec, std::size_t k, std::size_t episode, std::uint64_t seed,
                           const EpisodeOptions& options) {
  EpisodeResult r;
  r.task_id = spec.task_id;
  r.task = spec.name;
  r.k = k;
  r.episode = episode;
  r.seed = seed;
  r.protocol = to_string(options.protocol);
  r.mode = options.mode;
  return r;
}

}  // namespace

EpisodeResult evaluate_episode(const RunConfig& cfg, const Suite& suite, const Model& init, std::size_t task,
                               std::size_t k, std::size_t episode, const EpisodeOptions& options) {
  check_shot(cfg, k);
  const TaskData& data = suite.tasks.at(task);
  const std::uint64_t seed = episode_seed(cfg, task, k, episode);
  EpisodeOptions opts = options;
  opts.protocol = Protocol::per_task;
  EpisodeResult r = blank_result(data.spec, k, episode, seed, opts);
  Rng rng(seed);
  Model model = init;
  model.heads().erase(task);
  const auto support = sample_support(data.train, data.spec.num_classes, k, rng);
  const auto t0 = Clock::now();
  if (options.skip_contrastive) {
    r.contrastive_skipped = true;
  } else {
    r.contrastive_skipped = run_contrastive_stage(cfg, model, task, support, derive_seed(seed, {1})).skipped;
  }
  if (!support.empty()) run_head_stage(cfg, model, data.spec, support);
  r.train_seconds = seconds_since(t0);
  score(model, data.spec, data.eval, r);
  return r;
}

std::vector<EpisodeResult> evaluate_joint_episode(const RunConfig& cfg, const Suite& suite, const Model& init,
                                                  std::size_t k, std::size_t episode,
                                                  const EpisodeOptions& options) {
  check_shot(cfg, k);
  const std::uint64_t seed = episode_seed(cfg, std::nullopt, k, episode);
  EpisodeOptions opts = options;
  opts.protocol = Protocol::joint;
  Model model = init;
  model.heads().clear();
  std::vector<std::vector<LabeledExample>> supports;
  for (const auto& data : suite.tasks) {
    Rng rng(derive_seed(seed, {data.spec.task_id}));
    supports.push_back(sample_support(data.train, data.spec.num_classes, k, rng));
  }
  const auto t0 = Clock::now();
  bool skipped = options.skip_contrastive;
  if (!skipped) {
    const std::size_t steps = cfg.contrastive.steps * suite.tasks.size();
    skipped = run_multitask_stage(cfg, model, suite.registry, supports, steps, derive_seed(seed, {1})).skipped;
  }
  const double stage_seconds = seconds_since(t0);
  std::vector<EpisodeResult> out;
  for (const auto& data : suite.tasks) {
    EpisodeResult r = blank_result(data.spec, k, episode, seed, opts);
    r.contrastive_skipped = skipped;
    const auto t1 = Clock::now();
    const auto& support = supports[data.spec.task_id];
    if (!support.empty()) run_head_stage(cfg, model, data.spec, support);
    r.train_seconds = stage_seconds + seconds_since(t1);
    score(model, data.spec, data.eval, r);
    out.push_back(std::move(r));
  }
  return out;
}

EpisodeResult evaluate_cross_lingual(const RunConfig& cfg, const Suite& suite, const Model& init, std::size_t task,
                                     std::size_t k, std::size_t episode) {
  const TaskData& data = suite.tasks.at(task);
  if (data.datasets.size() != 1 || data.datasets.front().config().num_languages < 2) {
    throw ConfigError("task '" + data.spec.name + "' is not a single multilingual dataset");
  }
  const SynthTask& synth = data.datasets.front();
  const std::uint64_t seed = derive_seed(episode_seed(cfg, task, k, episode), {0x11});
  EpisodeOptions opts;
  opts.protocol = Protocol::per_task;
  opts.mode = "cross_lingual";
  EpisodeResult r = blank_result(data.spec, k, episode, seed, opts);
  Rng rng(seed);

  // Sample latent support examples, then render each in both languages.
  std::vector<std::vector<std::size_t>> by_class(data.spec.num_classes);
  for (std::size_t i = 0; i < synth.train().size(); ++i) by_class[synth.train()[i].example.label].push_back(i);
  std::vector<LabeledExample> lang0, both;
  for (auto& idx : by_class) {
    if (idx.size() < k) throw std::invalid_argument("not enough examples for k = " + std::to_string(k));
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      const SynthExample& ex = synth.train()[idx[i]];
      lang0.push_back(synth.render_multilingual(ex, 0));
      both.push_back(lang0.back());
      both.push_back(synth.render_multilingual(ex, 1));
    }
  }
  Model model = init;
  model.heads().erase(task);
  const auto t0 = Clock::now();
  r.contrastive_skipped = run_contrastive_stage(cfg, model, task, both, derive_seed(seed, {1})).skipped;
  if (!lang0.empty()) run_head_stage(cfg, model, data.spec, lang0);
  r.train_seconds = seconds_since(t0);
  std::vector<LabeledExample> eval1;
  eval1.reserve(synth.eval().size());
  for (const auto& ex : synth.eval()) eval1.push_back(synth.render_multilingual(ex, 1));
  score(model, data.spec, eval1, r);
  return r;
}

std::size_t resolve_workers(std::size_t configured) {
  if (configured > 0) return configured;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace {

template <typename Job>
void parallel_for(std::size_t n, std::size_t workers, Job job) {
  workers = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<EpisodeResult> run_sweep(const RunConfig& cfg, const Suite& suite, const Model& init,
                                     std::span<const std::size_t> tasks, std::span<const std::size_t> shots,
                                     std::size_t episodes, const EpisodeOptions& options) {
  for (std::size_t k : shots) check_shot(cfg, k);
  for (std::size_t t : tasks) {
    if (t >= suite.tasks.size()) throw std::out_of_range("task id " + std::to_string(t) + " not registered");
  }
  const std::size_t workers = resolve_workers(cfg.workers);
  std::vector<EpisodeResult> out;
  if (options.protocol == Protocol::per_task) {
    const std::size_t n = tasks.size() * shots.size() * episodes;
    std::vector<EpisodeResult> results(n);
    parallel_for(n, workers, [&](std::size_t i) {
      const std::size_t e = i % episodes, ki = (i / episodes) % shots.size(), ti = i / (episodes * shots.size());
      results[i] = evaluate_episode(cfg, suite, init, tasks[ti], shots[ki], e, options);
    });
    return results;
  }
  const std::size_t n = shots.size() * episodes;
  std::vector<std::vector<EpisodeResult>> joint(n);
  parallel_for(n, workers, [&](std::size_t i) {
    joint[i] = evaluate_joint_episode(cfg, suite, init, shots[i / episodes], i % episodes, options);
  });
  for (std::size_t t : tasks)
    for (std::size_t i = 0; i < n; ++i) out.push_back(joint[i][t]);
  return out;
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::no_hypernet: return "no_hypernet";
    case Ablation::budget_5pct: return "budget_5pct";
    case Ablation::small_text: return "small_text";
    case Ablation::small_vision: return "small_vision";
    case Ablation::small_both: return "small_both";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  for (Ablation a : {Ablation::no_hypernet, Ablation::budget_5pct, Ablation::small_text, Ablation::small_vision,
                     Ablation::small_both}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation '" + s + "'");
}

RunConfig ablated_config(const RunConfig& cfg, Ablation a) {
  RunConfig out = cfg;
  auto shrink = [](EncoderSpec& spec, EncoderSpec small) {
    small.weight_seed = spec.weight_seed;
    small.input_dim = spec.input_dim;
    spec = small;
  };
  switch (a) {
    case Ablation::no_hypernet: out.hypernet.enabled = false; break;
    case Ablation::budget_5pct: out.hypernet.budget_fraction = 0.05; break;
    case Ablation::small_text: shrink(out.text_encoder, EncoderSpec::text(SizeClass::small)); break;
    case Ablation::small_vision: shrink(out.vision_encoder, EncoderSpec::vision(SizeClass::small)); break;
    case Ablation::small_both:
      shrink(out.text_encoder, EncoderSpec::text(SizeClass::small));
      shrink(out.vision_encoder, EncoderSpec::vision(SizeClass::small));
      break;
  }
  out.validate();
  return out;
}

AblationReport run_ablation(const RunConfig& cfg, Ablation mode, std::size_t k, std::size_t episodes,
                            const EpisodeOptions& options) {
  AblationReport rep;
  rep.mode = mode;
  rep.k = k;
  rep.episodes = episodes;
  const RunConfig alt = ablated_config(cfg, mode);
  const Suite suite = Suite::build(cfg);
  std::vector<std::size_t> tasks(suite.tasks.size());
  std::iota(tasks.begin(), tasks.end(), std::size_t{0});
  const std::size_t shots[] = {k};
  const Model base(cfg);
  const Model ablated(alt);
  rep.baseline_budget = base.budget();
  rep.ablation_budget = ablated.budget();
  EpisodeOptions base_opts = options;
  base_opts.mode = "default";
  EpisodeOptions alt_opts = options;
  alt_opts.mode = to_string(mode);
  rep.baseline_results = run_sweep(cfg, suite, base, tasks, shots, episodes, base_opts);
  rep.ablation_results = run_sweep(alt, suite, ablated, tasks, shots, episodes, alt_opts);
  for (std::size_t t : tasks) {
    std::vector<double> b, a;
    for (const auto& r : rep.baseline_results)
      if (r.task_id == t) b.push_back(r.metrics.accuracy);
    for (const auto& r : rep.ablation_results)
      if (r.task_id == t) a.push_back(r.metrics.accuracy);
    AblationRow row;
    row.task = suite.tasks[t].spec.name;
    row.baseline_mean = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
    row.ablation_mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    row.baseline_median = median_of(b);
    row.ablation_median = median_of(a);
    row.delta = row.ablation_mean - row.baseline_mean;
    rep.rows.push_back(row);
  }
  return rep;
}

BenchStats bench_inference(const Model& model, std::size_t task, std::span<const LabeledExample> pool,
                           std::size_t repetitions, std::size_t warmup) {
  if (pool.empty()) throw std::invalid_argument("bench pool is empty");
  if (repetitions == 0) throw std::invalid_argument("bench needs at least one repetition");
  auto head = model.heads().find(task);
  const Head fallback = zero_head(HeadType::softmax, model.projections().shared_dim(), 2, task);
  const Head& h = head != model.heads().end() ? head->second : fallback;
  const AdapterSet cache = model.materialize(task);
  volatile std::size_t sink = 0;
  auto one = [&](const LabeledExample& ex, std::uint64_t* flops, std::size_t* nodes) {
    Tape tape;
    ParamBinder bind(tape);
    const Payload* p = &ex.inputs;
    Var f = l2_normalize_rows(model.embed(bind, task, std::span<const Payload* const>(&p, 1), false, &cache));
    sink = sink + predict(h, f.value().data()).label;
    if (flops != nullptr) *flops = tape.flops();
    if (nodes != nullptr) *nodes = tape.size();
  };
  for (std::size_t w = 0; w < warmup; ++w)
    for (const auto& ex : pool) one(ex, nullptr, nullptr);

  BenchStats st;
  st.samples = pool.size();
  st.repetitions = repetitions;
  st.warmup = warmup;
  std::vector<double> per_sample;
  per_sample.reserve(repetitions);
  const auto t0 = Clock::now();
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto tr = Clock::now();
    for (const auto& ex : pool) one(ex, nullptr, nullptr);
    per_sample.push_back(seconds_since(tr) / static_cast<double>(pool.size()));
  }
  st.total_seconds = seconds_since(t0);
  st.mean_seconds = std::accumulate(per_sample.begin(), per_sample.end(), 0.0) / static_cast<double>(repetitions);
  st.median_seconds = median_of(per_sample);
  std::vector<double> sorted = per_sample;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  st.p95_seconds = sorted[std::max<std::size_t>(rank, 1) - 1];
  one(pool.front(), &st.flops_per_sample, &st.tape_nodes_per_sample);
  return st;
}

}  // namespace fm3
