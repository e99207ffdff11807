#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "strukt/audio.hpp"
#include "strukt/losses.hpp"
#include "strukt/metrics.hpp"
#include "strukt/model_io.hpp"

namespace strukt {

struct Song {
    std::string id;
    AudioClip clip;
    SegmentTrack track;
};
using Corpus = std::vector<Song>;

// Loads every *.wav with a matching *.tsv from a directory, sorted by name;
// labels are interned into `vocab` in scan order.
Corpus load_corpus(const std::string& dir, LabelVocab& vocab);

struct TrainConfig {
    double window_T = 48.0;  // seconds
    int ratio_N = 2;
    int batch_size = 8;
    int total_steps = 1000;
    double lr0 = 1e-3;       // scratch-training default; the paper's 1e-5
                             // suits fine-tuning a large pre-trained model
    double lr_decay_gamma = 0.99;
    int lr_decay_every = 500;
    std::uint64_t seed = 0;
    LossWeights loss;
    int eval_every = 250;
    int max_pairs = 64;
    bool contrastive_enabled = true;
    int threads = 0;         // 0: hardware count; 1: sequential mode
    double ramp_width = 1.0; // boundary target ramp, seconds
    PeakPickConfig peak;     // validation metrics

    void validate(const FrontendConfig& frontend) const;  // throws ConfigError
    double lr_at(int step) const;
};

// Adam with bias correction; the paper states only the LR schedule, so the
// optimizer and its constants are pinned here.
class AdamState {
  public:
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
    void step(std::span<double> params, std::span<const double> grad, double lr);
    int steps_taken() const { return t_; }

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

  private:
    std::vector<double> m_, v_;
    int t_ = 0;
};

struct EvalRecord {
    int step = 0;
    double acc = 0.0;
    double hr05f = 0.0;
    double hr3f = 0.0;
};

struct TrainResult {
    ModelBundle model;  // best-validation checkpoint
    std::vector<EvalRecord> evals;
    int best_step = -1;
    double best_val_acc = -1.0;
    std::string abort_reason;        // non-empty if training stopped early
    double median_step_seconds = 0;  // over timed steps (first 5 excluded)
};

// The fine-tuning recipe at toy scale: per step, sample batch_size songs
// with replacement, random-crop to window_T, extract melgrams at ratio_N,
// build targets on the output grid, forward, combine the four-part loss,
// backward, Adam update with LR = lr0 * gamma^(step / decay_every).
// Validation runs full-song inference every eval_every steps; the best-ACC
// checkpoint is kept. Batch items run on independent tapes (optionally in
// parallel); gradients are summed in batch order, so sequential and parallel
// runs are bit-identical.
TrainResult train(const Corpus& train_songs, const Corpus& val_songs, EncoderConfig encoder_cfg,
                  FrontendConfig frontend_cfg, const TrainConfig& cfg, const LabelVocab& vocab,
                  std::ostream* jsonl_log);

struct Inference {
    std::vector<double> boundary;  // sigmoid activations, [L']
    Tensor function_logits;        // [L' x C]
    double grid_rate = 0.0;
};

// Single forward pass over the entire song; no chunking, no overlap-add.
Inference infer_full_song(const ModelBundle& bundle, const AudioClip& clip);

// Per-band standardization helpers (statistics travel with the model).
struct MelStats {
    std::vector<double> mean;
    std::vector<double> std_dev;
};
MelStats compute_mel_stats(const Corpus& songs, const FrontendConfig& cfg);
Tensor standardized_mel_tensor(const MelGram& mel, const std::vector<double>& mean,
                               const std::vector<double>& std_dev);

// Inverse-frequency class weights over the training corpus (by duration),
// normalized to mean 1 and capped at 10.
std::vector<double> class_weights(const Corpus& songs, int n_classes);

MetricsReport evaluate_on_song(const ModelBundle& bundle, const Song& song,
                               const PeakPickConfig& peak_cfg);

}  // namespace strukt
