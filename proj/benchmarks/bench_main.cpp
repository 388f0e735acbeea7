#include <benchmark/benchmark.h>

#include <random>

#include "tinydet/anchors.hpp"
#include "tinydet/flops.hpp"
#include "tinydet/kernels.hpp"

namespace {

using namespace tinydet;

void BM_Conv2d(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  Rng rng(0);
  const auto w = random_conv(rng, 16, 16, k, 1);
  Tensor x({1, 16, n, n});
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : x.data()) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w));
  state.SetItemsProcessed(state.iterations() * 16LL * 16 * n * n * k * k);
}
BENCHMARK(BM_Conv2d)->Args({32, 1})->Args({32, 3})->Args({64, 3})->Args({32, 5});

void BM_ModelFlops(benchmark::State& state) {
  const auto spec = builtin_arch("tinydet-l");
  for (auto _ : state) benchmark::DoNotOptimize(model_flops(spec));
}
BENCHMARK(BM_ModelFlops);

std::vector<Box> random_boxes(std::size_t count) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> side(10, 200), unit(0, 1);
  std::vector<Box> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double w = side(rng), h = side(rng);
    const double x = unit(rng) * (320 - w), y = unit(rng) * (320 - h);
    out.push_back({x, y, x + w, y + h});
  }
  return out;
}

void BM_BestMatch(benchmark::State& state) {
  const auto grid = tile_anchors(builtin_arch("tinydet-m"));
  const auto boxes = random_boxes(1024);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(best_match(grid, boxes[i++ % boxes.size()]));
}
BENCHMARK(BM_BestMatch);

void BM_Assign(benchmark::State& state) {
  const auto grid = thundernet_surrogate_grid();
  const auto boxes = random_boxes(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(assign(grid, boxes));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Assign)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
