// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion ids as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fm3/adapter.hpp"
#include "fm3/binder.hpp"
#include "fm3/checkpoint.hpp"
#include "fm3/contrastive.hpp"
#include "fm3/error.hpp"
#include "fm3/gradcheck.hpp"
#include "fm3/hypernet.hpp"
#include "fm3/pipeline.hpp"
#include "fm3/records.hpp"

using namespace fm3;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) { return gaussian(std::move(shape), stddev, rng); }

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = uniform(rng, 0, classes - 1);
  return y;
}

// Central differences over every hypernetwork parameter against the tape.
GradCheckResult hypernet_check(Rng& rng) {
  HyperNetDims d;
  d.cond_dim = uniform(rng, 2, 4);
  d.hidden_width = uniform(rng, 2, 4);
  d.bottleneck = uniform(rng, 2, 3);
  d.adapter_hidden = uniform(rng, 4, 6);
  d.num_tasks = 2;
  d.num_layers = 2;
  HyperNetwork hn(d, rng());
  for (auto& [name, t] : hn.parameters())
    for (auto& v : t->data()) v += 0.3 * std::normal_distribution<double>(0.0, 1.0)(rng);
  const std::size_t task = uniform(rng, 0, 1), layer = uniform(rng, 0, 1), position = uniform(rng, 0, 1);
  const Tensor x = randn({3, d.adapter_hidden}, rng);
  auto loss = [&](ParamBinder& bind, bool backward) {
    Var y = apply_adapter(bind.tape().constant(x), hn.generate(bind, task, layer, position, true));
    Var l = sum(tanh(y));
    if (backward) bind.tape().backward(l);
    return l.value().item();
  };
  Tape tape;
  ParamBinder bind(tape);
  loss(bind, true);
  GradCheckResult r;
  const double h = 1e-5;
  for (auto& [name, t] : hn.parameters()) {
    const Tensor analytic = bind.grad(*t);
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double orig = (*t)[i];
      (*t)[i] = orig + h;
      Tape tp;
      ParamBinder bp(tp);
      const double up = loss(bp, false);
      (*t)[i] = orig - h;
      Tape tm;
      ParamBinder bm(tm);
      const double down = loss(bm, false);
      (*t)[i] = orig;
      const double numeric = (up - down) / (2.0 * h), diff = std::abs(analytic[i] - numeric);
      const double magnitude = std::max(std::abs(analytic[i]), std::abs(numeric));
      r.max_abs_error = std::max(r.max_abs_error, diff);
      if (diff > 1e-8) r.max_rel_error = std::max(r.max_rel_error, diff / magnitude);
      ++r.coordinates;
    }
  }
  return r;
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  Rng rng(101);
  std::map<std::string, GradCheckResult> worst;
  auto track = [&](const std::string& name, const GradCheckResult& r) {
    GradCheckResult& w = worst[name];
    w.max_rel_error = std::max(w.max_rel_error, r.max_rel_error);
    w.max_abs_error = std::max(w.max_abs_error, r.max_abs_error);
    w.coordinates += r.coordinates;
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = uniform(rng, 2, 6), d = uniform(rng, 3, 8);
    std::vector<Tensor> pair{randn({n, d}, rng), randn({n, d}, rng)};
    const double s = std::uniform_real_distribution<double>(1.0, 20.0)(rng);
    auto mnr = [s](Tape&, std::span<const Var> v) { return mnr_loss(v[0], v[1], s); };
    track("mnr", grad_check(mnr, pair));

    std::vector<Polarity> pol(n);
    for (auto& p : pol) p = uniform(rng, 0, 1) ? Polarity::positive : Polarity::negative;
    const double margin = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    auto expl = [&pol, margin](Tape&, std::span<const Var> v) { return explicit_pair_loss(v[0], v[1], pol, margin); };
    track("explicit", grad_check(expl, pair));

    const std::size_t h = uniform(rng, 5, 8), b = uniform(rng, 2, 4);
    std::vector<Tensor> ad{randn({n, h}, rng),      randn({h, b}, rng, 0.5), randn({b}, rng, 0.5), randn({b, h}, rng, 0.5),
                           randn({h}, rng, 0.5), randn({h}, rng, 0.5),    randn({h}, rng, 0.5)};
    auto adapter = [](Tape&, std::span<const Var> v) {
      return sum(tanh(apply_adapter(v[0], AdapterVars{v[1], v[2], v[3], v[4], v[5], v[6]})));
    };
    track("adapter", grad_check(adapter, ad));

    track("hypernet", hypernet_check(rng));

    const std::size_t c = uniform(rng, 2, 5);
    const auto labels = random_labels(n, c, rng);
    std::vector<Tensor> head{randn({n, d}, rng), randn({d, c}, rng), randn({c}, rng)};
    auto ce = [&labels](Tape&, std::span<const Var> v) {
      return softmax_cross_entropy(add_bias(matmul(v[0], v[1]), v[2]), labels);
    };
    const auto binary = random_labels(n, 2, rng);
    std::vector<Tensor> logit{randn({n, d}, rng), randn({d, 1}, rng), randn({1}, rng)};
    auto bce = [&binary](Tape&, std::span<const Var> v) {
      return binary_cross_entropy_with_logits(reshape(add_bias(matmul(v[0], v[1]), v[2]), {v[0].value().rows()}),
                                              binary);
    };
    track("head_ce", grad_check(ce, head));
    track("head_ce", grad_check(bce, logit));
  }
  const double elapsed = seconds_since(start);
  // A coordinate passes on relative error, or on absolute error below 1e-8
  // where the gradient is too small for a meaningful ratio.
  bool pass = elapsed < 60.0;
  std::string detail;
  for (const auto& [name, w] : worst) {
    pass = pass && w.max_rel_error < 1e-4;
    detail += fmt("%s rel %.1e abs %.1e, ", name.c_str(), w.max_rel_error, w.max_abs_error);
  }
  return {pass, detail + fmt("100 trials each in %.1f s", elapsed)};
}

std::vector<std::vector<LabeledExample>> train_pools(const Suite& suite) {
  std::vector<std::vector<LabeledExample>> pools;
  for (const auto& t : suite.tasks) pools.push_back(t.train);
  return pools;
}

// Model after 500 joint contrastive steps on the full training pools.
Model trained_model(const RunConfig& cfg, const Suite& suite) {
  Model model(cfg);
  const auto pools = train_pools(suite);
  run_multitask_stage(cfg, model, suite.registry, pools, 500, derive_seed(cfg.global_seed, {0x7a}));
  return model;
}

Outcome frozen_encoders(const RunConfig& cfg, const Suite& suite) {
  std::string detail;
  bool pass = true;
  for (bool enabled : {true, false}) {
    RunConfig c = cfg;
    c.hypernet.enabled = enabled;
    const Model init(c);
    const Model trained = trained_model(c, suite);
    for (auto m : {Modality::text, Modality::image}) {
      const bool same = init.encoder_digest(m) == trained.encoder_digest(m);
      pass = pass && same == enabled;
      detail += fmt("%s %s %s; ", enabled ? "default" : "no_hypernet", to_string(m).c_str(), same ? "unchanged" : "changed");
    }
  }
  return {pass, detail + "after 500 steps"};
}

Outcome pair_combinatorics() {
  bool pass = true;
  Rng rng(303);
  for (std::size_t k = 2; k <= 40; ++k) {
    const auto labels = random_labels(k, uniform(rng, 1, 6), rng);
    const FeasiblePairs f = enumerate_pairs(labels);
    pass = pass && f.positives.size() + f.negatives.size() == k * (k - 1) / 2;
  }
  const std::size_t R = 20;
  std::size_t mined_cases = 0, error_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = uniform(rng, 2, 40);
    const auto labels = random_labels(k, uniform(rng, 1, 8), rng);
    const FeasiblePairs f = enumerate_pairs(labels);
    if (f.positives.empty() || f.negatives.empty()) {
      // Infeasible polarities must surface as their own error.
      try {
        mine_pairs(labels, {R, static_cast<std::uint64_t>(trial)});
        pass = false;
      } catch (const NoPositivePairsError&) {
        pass = pass && f.positives.empty();
      } catch (const NoNegativePairsError&) {
        pass = pass && f.negatives.empty() && !f.positives.empty();
      }
      ++error_cases;
      continue;
    }
    const auto pairs = mine_pairs(labels, {R, static_cast<std::uint64_t>(trial)});
    std::size_t pos = 0, neg = 0;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& p : pairs) {
      const bool positive = p.polarity == Polarity::positive;
      pass = pass && p.anchor != p.other && p.anchor < k && p.other < k;
      pass = pass && (labels[p.anchor] == labels[p.other]) == positive;
      pass = pass && seen.insert({std::min(p.anchor, p.other), std::max(p.anchor, p.other)}).second;
      (positive ? pos : neg) += 1;
    }
    pass = pass && pos == std::min(R, f.positives.size()) && neg == std::min(R, f.negatives.size());
    ++mined_cases;
  }
  return {pass, fmt("k = 2..40 partition exact; %zu mined and %zu infeasible fuzz cases", mined_cases, error_cases)};
}

double mnr_value(const Tensor& a, const Tensor& p, double s) {
  Tape tape;
  return mnr_loss(tape.constant(a), tape.constant(p), s).value().item();
}

Outcome loss_closed_forms() {
  Rng rng(404);
  double worst_identical = 0.0, worst_orthogonal = 0.0;
  const double s = 20.0;
  for (std::size_t n : {2, 8, 32}) {
    const Tensor row = randn({1, 16}, rng);
    Tensor same({n, 16});
    for (std::size_t i = 0; i < n; ++i) std::copy(row.row(0).begin(), row.row(0).end(), same.row(i).begin());
    worst_identical = std::max(worst_identical, std::abs(mnr_value(same, same, s) - std::log(static_cast<double>(n))));
    Tensor eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.at(i, i) = 1.0;
    const double expect = std::log1p(static_cast<double>(n - 1) * std::exp(-s));
    worst_orthogonal = std::max(worst_orthogonal, std::abs(mnr_value(eye, eye, s) - expect));
  }
  return {worst_identical < 1e-9 && worst_orthogonal < 1e-9,
          fmt("identical |err| %.1e, orthogonal |err| %.1e for n = 2, 8, 32", worst_identical, worst_orthogonal)};
}

Outcome budget_accounting(const RunConfig& cfg) {
  bool pass = true;
  std::string detail;
  for (double target : {0.10, 0.05}) {
    RunConfig c = cfg;
    c.hypernet.budget_fraction = target;
    const Model model(c);
    std::size_t trainable = 0, frozen = 0;
    for (const auto& [name, t] : model.stored_tensors()) trainable += t->size();
    for (auto m : {Modality::text, Modality::image})
      for (const auto& [name, t] : model.encoder(m).weights().tensors) frozen += t.size();
    const BudgetReport r = model.budget();
    const double brute = static_cast<double>(trainable) / static_cast<double>(trainable + frozen);
    const bool in_range = target == 0.10 ? (r.fraction > 0.05 && r.fraction <= 0.10) : r.fraction <= 0.05;
    pass = pass && in_range && r.trainable_param_count == trainable && r.frozen_param_count == frozen &&
           r.fraction == brute;
    detail += fmt("target %.2f -> %.4f (%zu / %zu); ", target, r.fraction, trainable, trainable + frozen);
  }
  return {pass, detail + "brute-force counts match"};
}

double mean_accuracy(const std::vector<EpisodeResult>& results, const std::string& task, std::size_t k) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : results) {
    if (r.task == task && r.k == k) {
      total += r.metrics.accuracy;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : std::nan("");
}

std::vector<std::size_t> all_tasks(const Suite& suite) {
  std::vector<std::size_t> t(suite.tasks.size());
  std::iota(t.begin(), t.end(), std::size_t{0});
  return t;
}

Outcome shot_scaling(const RunConfig& cfg, const Suite& suite, std::vector<EpisodeResult>& results) {
  const auto start = Clock::now();
  const Model init(cfg);
  const std::size_t shots[] = {4, 16, 64};
  results = run_sweep(cfg, suite, init, all_tasks(suite), shots, 20);
  const double elapsed = seconds_since(start);
  bool monotone = true;
  std::size_t gains = 0;
  std::string detail;
  for (const auto& t : suite.tasks) {
    const double a4 = mean_accuracy(results, t.spec.name, 4), a16 = mean_accuracy(results, t.spec.name, 16),
                 a64 = mean_accuracy(results, t.spec.name, 64);
    monotone = monotone && a64 >= a16 && a16 >= a4;
    gains += a64 - a4 >= 0.05;
    detail += fmt("%s %.3f/%.3f/%.3f; ", t.spec.name.c_str(), a4, a16, a64);
  }
  return {monotone && gains >= 5 && elapsed < 900.0,
          detail + fmt("gain >= 5pp on %zu of 6; %.0f s", gains, elapsed)};
}

Outcome hypernet_ablation(const RunConfig& cfg) {
  const AblationReport rep = run_ablation(cfg, Ablation::no_hypernet, 64, 10);
  std::size_t wins = 0;
  std::string detail;
  for (const auto& row : rep.rows) {
    wins += row.baseline_median >= row.ablation_median;
    detail += fmt("%s %.3f vs %.3f; ", row.task.c_str(), row.baseline_median, row.ablation_median);
  }
  return {wins >= 4, detail + fmt("default >= no_hypernet on %zu of 6", wins)};
}

Outcome contrastive_effect(const RunConfig& cfg, const Suite& suite, const std::vector<EpisodeResult>& with_stage) {
  const Model init(cfg);
  EpisodeOptions skip;
  skip.skip_contrastive = true;
  skip.mode = "skip";
  const std::size_t shots[] = {16};
  const auto skipped = run_sweep(cfg, suite, init, all_tasks(suite), shots, 20, skip);
  bool pass = true;
  std::string detail;
  for (const char* name : {"visionlang_entailment", "visionlang_qa"}) {
    const double a = mean_accuracy(with_stage, name, 16), b = mean_accuracy(skipped, name, 16);
    pass = pass && a - b >= 0.03;
    detail += fmt("%s stage %.3f vs skip %.3f; ", name, a, b);
  }
  return {pass, detail + "k = 16, 20 episodes"};
}

Outcome multilingual_transfer(const RunConfig& cfg, const Suite& suite) {
  const Model init(cfg);
  const std::size_t t = suite.task_index("multilingual_text");
  double total = 0.0;
  for (std::size_t e = 0; e < 20; ++e) total += evaluate_cross_lingual(cfg, suite, init, t, 16, e).metrics.accuracy;
  const double acc = total / 20.0, chance = 1.0 / static_cast<double>(suite.tasks[t].spec.num_classes);
  return {acc - chance >= 0.10, fmt("language 1 accuracy %.3f vs chance %.3f, k = 16, 20 episodes", acc, chance)};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism(const RunConfig& cfg, const Suite& suite) {
  const auto dir = std::filesystem::temp_directory_path() / ("fm3_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const Model init(cfg);
  const std::size_t shots[] = {4};
  for (const char* name : {"a.ndjson", "b.ndjson"}) {
    const auto results = run_sweep(cfg, suite, init, all_tasks(suite), shots, 2);
    std::ofstream out(dir / name, std::ios::binary);
    write_records(out, results);
  }
  const bool records_equal = slurp(dir / "a.ndjson") == slurp(dir / "b.ndjson") && !slurp(dir / "a.ndjson").empty();

  Model model = trained_model(cfg, suite);
  for (const auto& t : suite.tasks) run_head_stage(cfg, model, t.spec, t.train);
  save_checkpoint(model, cfg, (dir / "a.fm3").string());
  const LoadedCheckpoint loaded = load_checkpoint((dir / "a.fm3").string());
  save_checkpoint(loaded.model, loaded.config, (dir / "b.fm3").string());
  const bool bytes_equal = slurp(dir / "a.fm3") == slurp(dir / "b.fm3");
  std::size_t compared = 0, mismatched = 0;
  for (const auto& t : suite.tasks) {
    for (const auto& e : t.eval) {
      const Prediction p = model.predict(t.spec.task_id, e.inputs), q = loaded.model.predict(t.spec.task_id, e.inputs);
      mismatched += p.label != q.label || p.probabilities != q.probabilities;
      ++compared;
    }
  }
  std::filesystem::remove_all(dir);
  return {records_equal && bytes_equal && mismatched == 0,
          fmt("records %s; checkpoint resave %s; %zu of %zu predictions differ", records_equal ? "identical" : "differ",
              bytes_equal ? "identical" : "differs", mismatched, compared)};
}

Outcome bench_sanity(const RunConfig& cfg, const Suite& suite) {
  const Model base(cfg);
  const Model small(ablated_config(cfg, Ablation::small_both));
  const std::size_t task = suite.task_index("visionlang_qa");
  const auto& pool = suite.tasks[task].eval;
  std::size_t faster = 0;
  double worst_rel = 0.0;
  for (int run = 0; run < 10; ++run) {
    // Alternate the order so drift affects both sizes alike.
    BenchStats b, s;
    if (run % 2 == 0) {
      b = bench_inference(base, task, pool, 3);
      s = bench_inference(small, task, pool, 3);
    } else {
      s = bench_inference(small, task, pool, 3);
      b = bench_inference(base, task, pool, 3);
    }
    for (const BenchStats& st : {b, s}) {
      const double implied = st.total_seconds / static_cast<double>(st.samples * st.repetitions);
      worst_rel = std::max(worst_rel, std::abs(st.mean_seconds - implied) / implied);
    }
    faster += s.mean_seconds < b.mean_seconds;
  }
  return {worst_rel < 0.01 && faster >= 9,
          fmt("mean vs total/(samples x reps) within %.2e; small faster in %zu of 10 runs", worst_rel, faster)};
}

Outcome sampling_statistics() {
  TaskRegistry reg;
  const double weights[] = {0.5, 0.3, 0.2};
  for (std::size_t i = 0; i < 3; ++i) {
    TaskSpec t;
    t.name = "task" + std::to_string(i);
    t.modalities.text = true;
    t.num_classes = 3;
    t.datasets = {DatasetRef{t.name, 1}};
    t.weight = weights[i];
    reg.register_task(t);
  }
  Rng rng(1212);
  const std::size_t n = 10000;
  double counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) counts[reg.sample_task(rng)] += 1;
  double chi2 = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    const double expected = static_cast<double>(n) * reg.task(t).sampling_prob;
    chi2 += (counts[t] - expected) * (counts[t] - expected) / expected;
  }
  // Two degrees of freedom: the survival function is exp(-x / 2).
  const double p = std::exp(-chi2 / 2.0);
  return {p > 0.01, fmt("counts %.0f/%.0f/%.0f, chi2 %.3f, p %.3f", counts[0], counts[1], counts[2], chi2, p)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  const RunConfig cfg = RunConfig::with_default_suite();
  const Suite suite = Suite::build(cfg);
  std::vector<EpisodeResult> sweep;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", [] { return gradient_integrity(); }},
      {"frozen-encoder invariance", [&] { return frozen_encoders(cfg, suite); }},
      {"pair-mining combinatorics", [] { return pair_combinatorics(); }},
      {"loss closed forms", [] { return loss_closed_forms(); }},
      {"budget accounting", [&] { return budget_accounting(cfg); }},
      {"shot scaling", [&] { return shot_scaling(cfg, suite, sweep); }},
      {"hypernetwork ablation", [&] { return hypernet_ablation(cfg); }},
      {"contrastive-stage effect",
       [&] {
         if (sweep.empty()) {
           const Model init(cfg);
           const std::size_t shots[] = {16};
           sweep = run_sweep(cfg, suite, init, all_tasks(suite), shots, 20);
         }
         return contrastive_effect(cfg, suite, sweep);
       }},
      {"multilingual transfer", [&] { return multilingual_transfer(cfg, suite); }},
      {"determinism and persistence", [&] { return determinism(cfg, suite); }},
      {"bench harness", [&] { return bench_sanity(cfg, suite); }},
      {"sampling statistics", [] { return sampling_statistics(); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
