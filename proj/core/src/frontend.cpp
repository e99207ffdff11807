#include "strukt/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "strukt/error.hpp"

namespace strukt {
namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}
std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

}  // namespace

void FrontendConfig::validate() const {
    if (!is_power_of_two(n_fft)) throw ConfigError("frontend: n_fft must be a power of two");
    if (n_mels <= 0) throw ConfigError("frontend: n_mels must be positive");
    if (base_hop <= 0 || ratio_N <= 0) throw ConfigError("frontend: hop and ratio must be positive");
    if (effective_hop() > n_fft)
        throw ConfigError("frontend: effective hop (ratio_N * base_hop) must not exceed n_fft");
    if (sample_rate <= 0) throw ConfigError("frontend: sample_rate must be positive");
    if (log_floor <= 0.0) throw ConfigError("frontend: log_floor must be positive");
}

int frame_count(std::size_t n_samples, int effective_hop) {
    return static_cast<int>((n_samples + static_cast<std::size_t>(effective_hop) - 1) /
                            static_cast<std::size_t>(effective_hop));
}

std::vector<std::vector<double>> stft_power(const AudioClip& clip, const FrontendConfig& cfg) {
    cfg.validate();
    const int n_fft = cfg.n_fft;
    if (clip.samples.size() < static_cast<std::size_t>(n_fft))
        throw InputError("stft_power: clip shorter than n_fft (" +
                         std::to_string(clip.samples.size()) + " < " + std::to_string(n_fft) + ")");
    const int hop = cfg.effective_hop();
    const int n_frames = frame_count(clip.samples.size(), hop);
    const int n_bins = n_fft / 2 + 1;
    const int half = n_fft / 2;

    // Periodic Hann analysis window.
    std::vector<double> window(static_cast<std::size_t>(n_fft));
    for (int i = 0; i < n_fft; ++i)
        window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n_fft);

    // Real input: run one half-size complex FFT on (even, odd) sample pairs
    // and untangle the spectrum.
    std::vector<std::complex<double>> twiddle(static_cast<std::size_t>(half) + 1);
    for (int k = 0; k <= half; ++k) {
        const double ang = -2.0 * kPi * k / n_fft;
        twiddle[static_cast<std::size_t>(k)] = {std::cos(ang), std::sin(ang)};
    }

    std::vector<std::vector<double>> power(static_cast<std::size_t>(n_frames),
                                           std::vector<double>(static_cast<std::size_t>(n_bins)));
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(half));
    const std::size_t n = clip.samples.size();
    for (int f = 0; f < n_frames; ++f) {
        const std::size_t start = static_cast<std::size_t>(f) * static_cast<std::size_t>(hop);
        for (int i = 0; i < half; ++i) {
            const std::size_t even = start + 2 * static_cast<std::size_t>(i);
            const std::size_t odd = even + 1;
            const double xe = even < n ? clip.samples[even] * window[2 * static_cast<std::size_t>(i)] : 0.0;
            const double xo = odd < n ? clip.samples[odd] * window[2 * static_cast<std::size_t>(i) + 1] : 0.0;
            buf[static_cast<std::size_t>(i)] = {xe, xo};
        }
        fft_inplace(buf);
        auto& out = power[static_cast<std::size_t>(f)];
        out[0] = [&] {
            const double s = buf[0].real() + buf[0].imag();
            return s * s;
        }();
        out[static_cast<std::size_t>(half)] = [&] {
            const double s = buf[0].real() - buf[0].imag();
            return s * s;
        }();
        for (int k = 1; k < half; ++k) {
            const std::complex<double> zk = buf[static_cast<std::size_t>(k)];
            const std::complex<double> zc = std::conj(buf[static_cast<std::size_t>(half - k)]);
            const std::complex<double> ze = 0.5 * (zk + zc);
            const std::complex<double> zo = std::complex<double>(0.0, -0.5) * (zk - zc);
            out[static_cast<std::size_t>(k)] =
                std::norm(ze + twiddle[static_cast<std::size_t>(k)] * zo);
        }
    }
    return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filterbank(const FrontendConfig& cfg) {
    cfg.validate();
    const int n_bins = cfg.n_fft / 2 + 1;
    const double mel_max = hz_to_mel(cfg.sample_rate / 2.0);
    std::vector<double> centers_hz(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (int m = 0; m < cfg.n_mels + 2; ++m)
        centers_hz[static_cast<std::size_t>(m)] =
            mel_to_hz(mel_max * static_cast<double>(m) / (cfg.n_mels + 1));

    std::vector<std::vector<double>> fb(static_cast<std::size_t>(cfg.n_mels),
                                        std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = centers_hz[static_cast<std::size_t>(m)];
        const double mid = centers_hz[static_cast<std::size_t>(m) + 1];
        const double hi = centers_hz[static_cast<std::size_t>(m) + 2];
        bool any = false;
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
            double w = 0.0;
            if (f > lo && f < mid)
                w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                w = (hi - f) / (hi - mid);
            if (w > 0.0) any = true;
            fb[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] = w;
        }
        if (!any)
            throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                              " has no nonzero weight (n_mels too large for n_fft)");
    }
    return fb;
}

MelGram melgram(const AudioClip& clip, const FrontendConfig& cfg) {
    const auto power = stft_power(clip, cfg);
    const auto fb = mel_filterbank(cfg);
    const int n_frames = static_cast<int>(power.size());
    const int n_bins = cfg.n_fft / 2 + 1;

    // Triangles are narrow; applying each over its support only keeps the
    // filter stage negligible next to the FFTs.
    std::vector<std::pair<int, int>> support(static_cast<std::size_t>(cfg.n_mels));
    for (int m = 0; m < cfg.n_mels; ++m) {
        int lo = n_bins, hi = 0;
        for (int k = 0; k < n_bins; ++k)
            if (fb[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] > 0.0) {
                lo = std::min(lo, k);
                hi = std::max(hi, k + 1);
            }
        support[static_cast<std::size_t>(m)] = {lo, hi};
    }

    MelGram mel;
    mel.frames = n_frames;
    mel.bands = cfg.n_mels;
    mel.frame_rate = cfg.frame_rate();
    mel.effective_hop = cfg.effective_hop();
    mel.values.resize(static_cast<std::size_t>(n_frames) * static_cast<std::size_t>(cfg.n_mels));
    for (int f = 0; f < n_frames; ++f) {
        const auto& row = power[static_cast<std::size_t>(f)];
        for (int m = 0; m < cfg.n_mels; ++m) {
            const auto& filt = fb[static_cast<std::size_t>(m)];
            const auto [lo, hi] = support[static_cast<std::size_t>(m)];
            double acc = 0.0;
            for (int k = lo; k < hi; ++k)
                acc += filt[static_cast<std::size_t>(k)] * row[static_cast<std::size_t>(k)];
            mel.at(f, m) = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return mel;
}

void write_melg(const std::string& path, const MelGram& mel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write melgram file: " + path);
    out.write("MELG", 4);
    put_u32(out, static_cast<std::uint32_t>(mel.frames));
    put_u32(out, static_cast<std::uint32_t>(mel.bands));
    float rate = static_cast<float>(mel.frame_rate);
    std::uint32_t rate_bits;
    std::memcpy(&rate_bits, &rate, 4);
    put_u32(out, rate_bits);
    std::vector<float> row(mel.values.size());
    for (std::size_t i = 0; i < mel.values.size(); ++i) row[i] = static_cast<float>(mel.values[i]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 4));
}

MelGram read_melg(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open melgram file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MELG", 4) != 0)
        throw FormatError("bad melgram magic: " + path);
    MelGram mel;
    mel.frames = static_cast<int>(get_u32(in));
    mel.bands = static_cast<int>(get_u32(in));
    const std::uint32_t rate_bits = get_u32(in);
    float rate;
    std::memcpy(&rate, &rate_bits, 4);
    mel.frame_rate = rate;
    std::vector<float> row(static_cast<std::size_t>(mel.frames) *
                           static_cast<std::size_t>(mel.bands));
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw FormatError("truncated melgram file: " + path);
    mel.values.assign(row.begin(), row.end());
    return mel;
}

}  // namespace strukt
