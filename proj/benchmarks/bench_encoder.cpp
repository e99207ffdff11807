#include <benchmark/benchmark.h>

#include "strukt/model.hpp"
#include "strukt/rng.hpp"

using namespace strukt;

namespace {

Tensor random_mel(int frames, int bands) {
    Tensor mel(frames, bands);
    Rng rng(11);
    for (double& x : mel.data) x = rng.normal();
    return mel;
}

EncoderConfig toy_config() {
    EncoderConfig cfg;
    cfg.n_classes = 5;
    return cfg;
}

}  // namespace

// Sequence-length sweep; attention dominates past a few hundred frames, so
// time grows superlinearly in L' (mel frames = 4 L' at the default stride).
static void BM_EncoderForward(benchmark::State& state) {
    const EncoderConfig cfg = toy_config();
    Encoder model(cfg, 3);
    const Tensor mel = random_mel(static_cast<int>(state.range(0)), cfg.n_mels);
    for (auto _ : state) {
        Tape tape;
        const auto out = model.forward(tape, mel);
        benchmark::DoNotOptimize(tape.value(out.boundary_logits).data.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EncoderForward)->RangeMultiplier(2)->Range(256, 4096)->Complexity()->Unit(benchmark::kMillisecond);

static void BM_EncoderForwardBackward(benchmark::State& state) {
    const EncoderConfig cfg = toy_config();
    Encoder model(cfg, 3);
    const Tensor mel = random_mel(static_cast<int>(state.range(0)), cfg.n_mels);
    std::vector<double> grad(model.params().total(), 0.0);
    for (auto _ : state) {
        Tape tape;
        const auto out = model.forward(tape, mel);
        const int loss = tape.reduce_mean(tape.sigmoid(out.boundary_logits));
        tape.backward(loss, grad);
        benchmark::DoNotOptimize(grad.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EncoderForwardBackward)->RangeMultiplier(2)->Range(256, 2048)->Complexity()->Unit(benchmark::kMillisecond);
