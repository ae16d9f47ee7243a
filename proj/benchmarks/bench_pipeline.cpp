#include "sprout/features.hpp"
#include "sprout/regress.hpp"
#include "sprout/wavelet.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

namespace {

using namespace sprout;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Window length in samples; one day at 1 Hz is 86400.
void BM_Cwt(benchmark::State& state) {
  const auto w = static_cast<std::size_t>(state.range(0));
  CwtEngine engine(plan_scales(1.0, w, 8));
  const auto x = noise(w, 1);
  std::vector<std::vector<double>> out;
  for (auto _ : state) {
    engine.transform(x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w));
}
BENCHMARK(BM_Cwt)->Arg(1440)->Arg(21600)->Arg(86400)->Unit(benchmark::kMillisecond);

void BM_CwtDirect(benchmark::State& state) {
  const auto w = static_cast<std::size_t>(state.range(0));
  const auto plan = plan_scales(1.0, w, 8);
  SignalWindow sw;
  sw.samples = noise(w, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cwt_direct(sw, plan));
  }
}
BENCHMARK(BM_CwtDirect)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_ScaleFeatures(benchmark::State& state) {
  auto x = noise(static_cast<std::size_t>(state.range(0)), 3);
  for (auto& v : x) v = std::abs(v);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_scale_features(x));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScaleFeatures)->Arg(1440)->Arg(86400)->Unit(benchmark::kMicrosecond);

void BM_Fit(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const FeatureLayout layout{8, false};
  std::vector<LabeledExample> ex(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    ex[i].features.values = noise(layout.width(), 10 + i);
    ex[i].target_days = 3.0 * ex[i].features.values[0] + ex[i].features.values[7];
  }
  RegressorSpec spec;
  spec.n_trees = 50;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(ex, spec, layout));
  }
}
BENCHMARK(BM_Fit)->Arg(500)->Arg(4000)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
