#include <benchmark/benchmark.h>

#include "strukt/frontend.hpp"
#include "strukt/rng.hpp"

using namespace strukt;

namespace {

AudioClip noise_clip(double seconds, int sr) {
    AudioClip clip;
    clip.sample_rate = sr;
    clip.samples.resize(static_cast<std::size_t>(seconds * sr));
    Rng rng(7);
    for (double& x : clip.samples) x = 0.25 * rng.normal();
    return clip;
}

}  // namespace

// Window seconds on the x axis, ratio fixed: cost tracks the frame count.
static void BM_MelgramWindow(benchmark::State& state) {
    FrontendConfig cfg;
    const AudioClip clip = noise_clip(static_cast<double>(state.range(0)), cfg.sample_rate);
    for (auto _ : state) {
        MelGram mel = melgram(clip, cfg);
        benchmark::DoNotOptimize(mel.values.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MelgramWindow)->RangeMultiplier(2)->Range(8, 64)->Complexity()->Unit(benchmark::kMillisecond);

// Ratio sweep at fixed window: higher N means fewer frames, near-linear drop.
static void BM_MelgramRatio(benchmark::State& state) {
    FrontendConfig cfg;
    cfg.ratio_N = static_cast<int>(state.range(0));
    const AudioClip clip = noise_clip(48.0, cfg.sample_rate);
    for (auto _ : state) {
        MelGram mel = melgram(clip, cfg);
        benchmark::DoNotOptimize(mel.values.data());
    }
}
BENCHMARK(BM_MelgramRatio)->DenseRange(1, 5)->Unit(benchmark::kMillisecond);

static void BM_Filterbank(benchmark::State& state) {
    FrontendConfig cfg;
    for (auto _ : state) {
        auto fb = mel_filterbank(cfg);
        benchmark::DoNotOptimize(fb.data());
    }
}
BENCHMARK(BM_Filterbank)->Unit(benchmark::kMicrosecond);
