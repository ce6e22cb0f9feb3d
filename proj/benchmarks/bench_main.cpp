// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "fm3/contrastive.hpp"
#include "fm3/pipeline.hpp"

namespace {

using namespace fm3;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = gaussian({n, n}, 1.0, rng), b = gaussian({n, n}, 1.0, rng);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_MnrForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor a = gaussian({n, 64}, 1.0, rng), p = gaussian({n, 64}, 1.0, rng);
  for (auto _ : state) {
    Tape tape;
    Var va = tape.parameter(a), vp = tape.parameter(p);
    tape.backward(mnr_loss(va, vp));
    benchmark::DoNotOptimize(tape.grad(va).data().data());
  }
}
BENCHMARK(BM_MnrForwardBackward)->Arg(8)->Arg(32);

const Suite& suite() {
  static const Suite s = Suite::build(RunConfig::with_default_suite());
  return s;
}

void BM_Encode(benchmark::State& state) {
  const auto size = state.range(0) == 0 ? SizeClass::small : SizeClass::base;
  const bool image = state.range(1) != 0;
  const Encoder enc(image ? EncoderSpec::vision(size) : EncoderSpec::text(size));
  const auto& pool = suite().tasks[suite().task_index(image ? "vision_multiclass" : "text_multiclass")].eval;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(enc.encode(pool[i++ % pool.size()].inputs).vector.data().data());
  }
  state.SetLabel(std::string(image ? "image/" : "text/") + (size == SizeClass::small ? "small" : "base"));
}
BENCHMARK(BM_Encode)->Args({0, 0})->Args({1, 0})->Args({0, 1})->Args({1, 1});

// Full predict path for one vision-language sample with cached adapters.
void BM_Predict(benchmark::State& state) {
  RunConfig cfg = RunConfig::with_default_suite();
  if (state.range(0) == 0) cfg = ablated_config(cfg, Ablation::small_both);
  Model model(cfg);
  const std::size_t task = suite().task_index("visionlang_qa");
  const auto& data = suite().tasks[task];
  run_head_stage(cfg, model, data.spec, data.train);
  const AdapterSet cache = model.materialize(task);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict(task, data.eval[i++ % data.eval.size()].inputs, &cache).label);
  }
  state.SetLabel(state.range(0) == 0 ? "small" : "base");
}
BENCHMARK(BM_Predict)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
