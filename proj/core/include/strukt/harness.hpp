#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "strukt/trainer.hpp"

namespace strukt {

// Deterministic corpus split (shuffle by seed, then train/val/test slices).
struct CorpusSplit {
    Corpus train, val, test;
};
CorpusSplit split_corpus(const Corpus& corpus, std::uint64_t seed, double train_frac = 0.70,
                         double val_frac = 0.15);

struct AblationSpec {
    std::vector<double> T_values;
    std::vector<int> N_values;
    std::vector<bool> cl_enabled = {true};
    int repeats = 1;
    TrainConfig base;        // window_T / ratio_N / contrastive set per cell
    EncoderConfig encoder;
    FrontendConfig frontend;

    void validate() const;  // throws ConfigError
};

struct AblationRow {
    double T = 0.0;
    int N = 1;
    bool cl = true;
    int repeat = 0;
    double acc = 0.0, hr05f = 0.0, hr3f = 0.0;
    double time_per_batch = 0.0;
    bool ok = false;
    std::string error;
};

// One trained model per grid cell, full-song evaluation on the test split.
// A failing cell records its error and the grid continues. Cells run
// sequentially (timing fidelity).
std::vector<AblationRow> run_ablation(const AblationSpec& spec, const Corpus& corpus,
                                      const LabelVocab& vocab, std::ostream* progress);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

struct CostRow {
    double T = 0.0;
    int N = 1;
    int seq_len = 0;           // L'
    double time_per_batch = 0.0;  // median of timed steps
    double analytic_flops = 0.0;          // forward + backward, per batch
    double analytic_activation_floats = 0.0;  // all tape value floats, per item
    double attn_activation_floats = 0.0;      // score+prob matrices only
    double peak_param_floats = 0.0;           // params + grad + Adam moments
};

// Times forward + loss + backward over random mel tensors of the shape the
// (T, N) configuration produces. The analytic counters depend only on tape
// shapes, so matched sequence lengths give exactly equal counts.
CostRow profile_cost(double T, int N, FrontendConfig frontend, EncoderConfig encoder,
                     int batch_size, int timed_steps = 20, int warmup_steps = 5,
                     std::uint64_t seed = 17);

void write_cost_csv(const std::string& path, const std::vector<CostRow>& rows);

}  // namespace strukt
