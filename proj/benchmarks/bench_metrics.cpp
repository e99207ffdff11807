#include <benchmark/benchmark.h>

#include "strukt/metrics.hpp"
#include "strukt/postprocess.hpp"
#include "strukt/rng.hpp"

using namespace strukt;

static void BM_PeakPick(benchmark::State& state) {
    Rng rng(5);
    std::vector<double> curve(static_cast<std::size_t>(state.range(0)));
    for (double& v : curve) v = rng.uniform(0.0, 1.0);
    PeakPickConfig cfg;
    for (auto _ : state) {
        auto peaks = peak_pick(curve, 12.5, cfg);
        benchmark::DoNotOptimize(peaks.data());
    }
}
BENCHMARK(BM_PeakPick)->Range(512, 8192)->Unit(benchmark::kMicrosecond);

static void BM_HitRateMatching(benchmark::State& state) {
    Rng rng(9);
    const int n = static_cast<int>(state.range(0));
    std::vector<double> ref, est;
    for (int i = 0; i < n; ++i) {
        ref.push_back(rng.uniform(0.0, 300.0));
        est.push_back(rng.uniform(0.0, 300.0));
    }
    std::sort(ref.begin(), ref.end());
    std::sort(est.begin(), est.end());
    for (auto _ : state) {
        const HitRate hr = hit_rate_f(ref, est, 3.0);
        benchmark::DoNotOptimize(hr.hits);
    }
}
BENCHMARK(BM_HitRateMatching)->Range(8, 256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
