#pragma once

#include <string>
#include <utility>
#include <vector>

#include "strukt/annotations.hpp"
#include "strukt/rng.hpp"

namespace strukt {

// Mono sample sequence. Samples are clipped to [-1, 1] on ingestion.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Per-label synthesis parameters: a fundamental and a 4-partial harmonic
// stack over a low noise floor, so sections with the same label share one
// timbre and different labels are spectrally separable.
struct Timbre {
    double fundamental_hz = 220.0;
    std::vector<double> harmonic_amps = {1.0, 0.5, 0.25, 0.125};
    double noise_level = 0.01;  // linear amplitude, <= -20 dBFS
};

struct SongSpec {
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> section_plan;  // (label, seconds)
    int sample_rate = 24000;
    std::vector<std::pair<std::string, Timbre>> timbre_map;

    double total_duration() const {
        double t = 0.0;
        for (const auto& [label, dur] : section_plan) t += dur;
        return t;
    }
    void validate() const;  // throws ConfigError on invariant breach
};

// RIFF/WAVE reader. PCM 16-bit or IEEE float 32-bit, 1 or 2 channels; stereo
// is downmixed by channel mean; samples scaled/clipped to [-1, 1].
AudioClip load_wav(const std::string& path);

// PCM 16-bit mono writer (the synthetic-corpus format).
void save_wav(const std::string& path, const AudioClip& clip);

// Renders the section plan: each section is its label's harmonic stack plus
// seeded noise, with 50 ms raised-cosine crossfades at section joins.
// Deterministic for a fixed spec. The returned track matches the plan.
std::pair<AudioClip, SegmentTrack> synthesize_song(const SongSpec& spec, LabelVocab& vocab);

struct CropResult {
    AudioClip clip;
    double offset = 0.0;  // applied start, seconds; for target alignment
};

// Exactly round(length_T * sample_rate) samples starting at `start` seconds;
// regions outside the source are zero-filled.
CropResult crop_window(const AudioClip& clip, double start, double length_T);

// Offset uniform in [0, max(0, duration - length_T)], then crop_window.
CropResult random_crop(const AudioClip& clip, double length_T, Rng& rng);

// Deterministic generator for the synthetic corpus: `n_labels` timbres with
// fundamentals spaced >= 3 semitones apart, plans of [min_sections,
// max_sections] sections with durations in [min_section_s, max_section_s]
// and no immediate label repeats.
struct CorpusParams {
    int n_labels = 5;
    int min_sections = 3;
    int max_sections = 6;
    double min_section_s = 6.0;
    double max_section_s = 14.0;
    int sample_rate = 24000;
};
SongSpec make_song_spec(std::uint64_t corpus_seed, int song_index, const CorpusParams& params);

}  // namespace strukt
