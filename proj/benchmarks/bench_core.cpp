#include <benchmark/benchmark.h>

#include <numeric>

#include "avid/loss.hpp"
#include "avid/model.hpp"
#include "avid/semlib.hpp"
#include "avid/trainer.hpp"

using namespace avid;

namespace {

Vector unit(Rng& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (double& x : v) x = n(rng);
  return l2_normalize(v);
}

}  // namespace

static void BM_NceLoss(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto q = unit(rng, 16), pos = unit(rng, 16);
  std::vector<Vector> negs;
  for (std::size_t j = 0; j < k; ++j) negs.push_back(unit(rng, 16));
  std::vector<ConstSpan> views(negs.begin(), negs.end());
  for (auto _ : state) {
    auto r = nce_loss(q, pos, views, 0.07);
    benchmark::DoNotOptimize(r.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NceLoss)->Arg(126)->Arg(252)->Arg(504)->Arg(1008);

static void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const std::size_t dims[] = {32, 64, 64, 16};
  auto p = make_mlp(std::span<const std::size_t>(dims), rng);
  auto x = unit(rng, 32), dy = unit(rng, 16);
  for (auto _ : state) {
    auto out = mlp_forward(p, x);
    auto g = mlp_backward(p, out.cache, dy);
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK(BM_MlpForwardBackward);

static void BM_MineContrastiveSet(benchmark::State& state) {
  Rng rng(3);
  const auto k = static_cast<std::size_t>(state.range(0));
  SemanticLibrary lib(10, k / 9, 16, LibraryMode::Queue);
  lib.fill_random(rng);
  int label = 0;
  for (auto _ : state) {
    auto negs = mine_contrastive_set(lib, label);
    benchmark::DoNotOptimize(negs.keys.data());
    label = (label + 1) % 10;
  }
}
BENCHMARK(BM_MineContrastiveSet)->Arg(126)->Arg(504)->Arg(1008);

static void BM_AssignSoft(benchmark::State& state) {
  Rng rng(4);
  SemanticLibrary lib(10, 56, 16, LibraryMode::Queue);
  lib.fill_random(rng);
  auto q = unit(rng, 16);
  for (auto _ : state) benchmark::DoNotOptimize(assign_soft(lib, q, 0.07));
}
BENCHMARK(BM_AssignSoft);

static void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.contrastive_size = static_cast<std::size_t>(state.range(0));
  cfg.mining = state.range(1) ? MiningMode::Acsm : MiningMode::Random;
  auto data = generate(cfg.data_config());
  Trainer trainer(cfg, data.inputs(), data.classes);
  std::vector<std::size_t> batch(cfg.batch_size);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  for (auto _ : state) {
    auto m = trainer.train_step(batch);
    benchmark::DoNotOptimize(m.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainStep)->Args({504, 1})->Args({504, 0})->Args({1008, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
