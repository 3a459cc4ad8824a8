#include <benchmark/benchmark.h>

#include <cmath>

#include "mitonet/metrics.hpp"
#include "mitonet/nn.hpp"
#include "mitonet/stain.hpp"

namespace {

using namespace mitonet;

nn::Tensor4<double> random_input(int batch, int size, Rng& rng) {
  nn::Tensor4<double> x(batch, 3, size, size);
  for (auto& v : x.data) v = normal(rng, 0, 1);
  return x;
}

void BM_Forward(benchmark::State& state) {
  nn::ModelConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  Rng rng(1);
  const auto params = nn::init_model<double>(cfg, rng);
  const auto x = random_input(16, cfg.input_size, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::infer(params, cfg, x));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  nn::ModelConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  Rng rng(2);
  const auto params = nn::init_model<double>(cfg, rng);
  const auto x = random_input(16, cfg.input_size, rng);
  const std::vector<double> up(16, 1.0 / 16);
  for (auto _ : state) {
    auto fwd = nn::forward(params, cfg, x);
    benchmark::DoNotOptimize(nn::backward(fwd.cache, std::span<const double>(up)));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_NormalizePatch(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Rng rng(3);
  const auto ref = stain::StainMatrix::reference();
  Patch p(side, side);
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    const Eigen::Vector3d od = uniform(rng, 0, 1.5) * ref.hematoxylin() +
                               uniform(rng, 0, 1.0) * ref.eosin();
    for (int c = 0; c < 3; ++c) {
      p.data[3 * i + c] = static_cast<std::uint8_t>(std::lround(255 * std::exp(-od[c])));
    }
  }
  const stain::StainParams params;
  for (auto _ : state) benchmark::DoNotOptimize(stain::normalize_patch(p, params));
  state.SetItemsProcessed(state.iterations() * p.pixel_count());
}
BENCHMARK(BM_NormalizePatch)->Arg(64)->Arg(224);

void BM_RocAuc(benchmark::State& state) {
  Rng rng(4);
  std::vector<metrics::ScoredSample> s(static_cast<std::size_t>(state.range(0)));
  for (auto& x : s) x = {uniform(rng, 0, 1), bernoulli(rng, 0.1) ? 1 : 0, 0};
  for (auto _ : state) benchmark::DoNotOptimize(metrics::roc_auc(s));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RocAuc)->RangeMultiplier(8)->Range(64, 1 << 18)->Complexity(benchmark::oNLogN);

}  // namespace

BENCHMARK_MAIN();
