#include <benchmark/benchmark.h>

#include "genet/aggregation.hpp"
#include "genet/model.hpp"
#include "genet/stats.hpp"
#include "genet/trainer.hpp"

using namespace genet;

namespace {

GENetConfig mnist_backbone(std::size_t groups, double multiplier) {
  GENetConfig cfg;
  cfg.in_channels = 1;
  cfg.stem_channels = 8;
  cfg.stage_channels = {8, 16, 32};
  cfg.num_groups = groups;
  cfg.head_width_multiplier = multiplier;
  return cfg;
}

// One SGD step on a 128-image 28x28 batch. Args: groups, multiplier * 1000.
void BM_TrainStep(benchmark::State& state) {
  const auto cfg = mnist_backbone(static_cast<std::size_t>(state.range(0)),
                                  static_cast<double>(state.range(1)) / 1000.0);
  Rng rng(0);
  GENetModel model(cfg, rng);
  std::vector<float> px(128 * 28 * 28);
  for (auto& v : px) v = static_cast<float>(rng.normal());
  Tensor images({128, 1, 28, 28}, std::move(px));
  std::vector<std::int32_t> labels(128);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i % 10);
  Sgd sgd(model.parameters(), OptimizerConfig{});
  Rng wrng(1);
  for (auto _ : state) {
    sgd.zero_grad();
    backward(minibatch_loss(model, images, labels, AggregationStrategy::averaging(), wrng));
    sgd.step(0.01);
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_TrainStep)->Args({1, 1000})->Args({3, 1594})->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  StatsConfig cfg;
  cfg.n = static_cast<std::size_t>(state.range(0));
  cfg.rho = 0.25;
  cfg.num_trials = 200000;
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo(cfg, 1).variance);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.num_trials));
}
BENCHMARK(BM_MonteCarlo)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
