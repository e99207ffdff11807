#pragma once

#include <string>
#include <vector>

#include "strukt/audio.hpp"

namespace strukt {

// Mel front end with the temporal-adaptation knob: the effective hop is
// ratio_N * base_hop, so ratio N trades temporal resolution for window
// length at constant sequence length.
struct FrontendConfig {
    int n_fft = 2048;
    int n_mels = 128;
    int base_hop = 240;   // samples
    int ratio_N = 1;
    int sample_rate = 24000;
    double log_floor = 1e-5;

    int effective_hop() const { return ratio_N * base_hop; }
    double frame_rate() const {
        return static_cast<double>(sample_rate) / effective_hop();
    }
    void validate() const;  // throws ConfigError
};

struct MelGram {
    // Row-major [frames x n_mels] log-energies.
    std::vector<double> values;
    int frames = 0;
    int bands = 0;
    double frame_rate = 0.0;
    int effective_hop = 0;

    double& at(int frame, int band) {
        return values[static_cast<std::size_t>(frame) * bands + band];
    }
    double at(int frame, int band) const {
        return values[static_cast<std::size_t>(frame) * bands + band];
    }
};

// Non-centered framing that consumes every sample: frame k covers samples
// [k*hop, k*hop + n_fft) with zero fill past the clip, so the frame count is
// ceil(samples / hop). This is what makes the frame count at (N*T, N*h)
// match (T, h) to within one frame for any T.
int frame_count(std::size_t n_samples, int effective_hop);

// |DFT(hann . segment)|^2 rows, [frames x (n_fft/2 + 1)].
std::vector<std::vector<double>> stft_power(const AudioClip& clip, const FrontendConfig& cfg);

// Triangular filters, peak 1.0 at mel-equally-spaced centers (HTK mel scale),
// [n_mels x (n_fft/2 + 1)].
std::vector<std::vector<double>> mel_filterbank(const FrontendConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// ln(max(filterbank x power, log_floor)).
MelGram melgram(const AudioClip& clip, const FrontendConfig& cfg);

// Binary dump: 16-byte header (magic "MELG", u32 frames, u32 bands,
// f32 frame_rate) then row-major little-endian f32 values.
void write_melg(const std::string& path, const MelGram& mel);
MelGram read_melg(const std::string& path);

}  // namespace strukt
