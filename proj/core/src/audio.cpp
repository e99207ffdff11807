#include "strukt/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "strukt/error.hpp"

namespace strukt {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}
std::uint16_t read_u16(const unsigned char* p) {
    return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
}

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 24) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

double clip1(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

void SongSpec::validate() const {
    if (section_plan.empty()) throw ConfigError("song spec: empty section plan");
    if (sample_rate <= 0) throw ConfigError("song spec: sample_rate must be positive");
    for (const auto& [label, dur] : section_plan) {
        if (dur < 2.0) throw ConfigError("song spec: section '" + label + "' shorter than 2 s");
        bool found = false;
        for (const auto& [name, timbre] : timbre_map) {
            if (name == label) found = true;
        }
        if (!found) throw ConfigError("song spec: no timbre for label '" + label + "'");
    }
}

AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open WAV file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();

    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw FormatError("not a RIFF/WAVE file: " + path);

    int channels = 0;
    int sample_rate = 0;
    int bits = 0;
    int format = 0;
    std::size_t data_off = 0, data_len = 0;

    std::size_t off = 12;
    while (off + 8 <= n) {
        const char* id = reinterpret_cast<const char*>(p + off);
        const std::uint32_t len = read_u32(p + off + 4);
        if (off + 8 + len > n) throw FormatError("truncated WAV chunk: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError("malformed fmt chunk: " + path);
            format = read_u16(p + off + 8);
            channels = read_u16(p + off + 10);
            sample_rate = static_cast<int>(read_u32(p + off + 12));
            bits = read_u16(p + off + 22);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = off + 8;
            data_len = len;
        }
        off += 8 + len + (len & 1);  // chunks are word-aligned
    }
    if (channels == 0 || data_off == 0) throw FormatError("missing fmt/data chunk: " + path);
    if (channels != 1 && channels != 2)
        throw FormatError("unsupported channel count " + std::to_string(channels) + ": " + path);
    const bool pcm16 = (format == 1 && bits == 16);
    const bool f32 = (format == 3 && bits == 32);
    if (!pcm16 && !f32)
        throw FormatError("unsupported WAV encoding (need PCM16 or float32): " + path);

    const int bytes_per = bits / 8;
    const std::size_t frame_bytes = std::size_t(bytes_per) * channels;
    const std::size_t frames = data_len / frame_bytes;

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(frames);
    const unsigned char* d = p + data_off;
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* s = d + i * frame_bytes + std::size_t(c) * bytes_per;
            if (pcm16) {
                const auto v = static_cast<std::int16_t>(read_u16(s));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                std::uint32_t u = read_u32(s);
                float f;
                std::memcpy(&f, &u, 4);
                acc += static_cast<double>(f);
            }
        }
        clip.samples[i] = clip1(acc / channels);
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::string out;
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_len = n * 2;
    out.reserve(44 + data_len);
    out += "RIFF";
    put_u32(out, 36 + data_len);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_len);
    for (double x : clip.samples) {
        const auto v = static_cast<std::int16_t>(std::lrint(clip1(x) * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(v));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write WAV file: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::pair<AudioClip, SegmentTrack> synthesize_song(const SongSpec& spec, LabelVocab& vocab) {
    spec.validate();
    const int sr = spec.sample_rate;
    const std::size_t total = static_cast<std::size_t>(std::llround(spec.total_duration() * sr));

    AudioClip clip;
    clip.sample_rate = sr;
    clip.samples.assign(total, 0.0);
    SegmentTrack track;
    track.duration = spec.total_duration();

    auto timbre_of = [&](const std::string& label) -> const Timbre& {
        for (const auto& [name, t] : spec.timbre_map)
            if (name == label) return t;
        throw ConfigError("song spec: no timbre for label '" + label + "'");
    };

    Rng noise_rng = Rng(spec.seed).fork(0xA0D10);
    // 50 ms raised-cosine crossfade at each interior join: the outgoing and
    // incoming sections overlap by `xf` samples centered on the join, with
    // gains summing to 1.
    const long long xf = std::llround(0.050 * sr);
    const long long half = xf / 2;
    const long long n_total = static_cast<long long>(total);
    const std::size_t n_sections = spec.section_plan.size();

    double t0 = 0.0;
    for (std::size_t s = 0; s < n_sections; ++s) {
        const auto& [label, dur] = spec.section_plan[s];
        const Timbre& tim = timbre_of(label);
        const long long i0 = std::llround(t0 * sr);
        const long long i1 = std::min<long long>(n_total, std::llround((t0 + dur) * sr));
        const long long begin = std::max<long long>(0, s > 0 ? i0 - half : i0);
        const long long end = std::min<long long>(n_total, s + 1 < n_sections ? i1 + half : i1);

        std::vector<double> section(static_cast<std::size_t>(end - begin), 0.0);
        for (std::size_t h = 0; h < tim.harmonic_amps.size(); ++h) {
            const double freq = tim.fundamental_hz * static_cast<double>(h + 1);
            if (freq >= 0.5 * sr) break;  // keep below Nyquist
            const double amp = 0.3 * tim.harmonic_amps[h];
            const double w = 2.0 * kPi * freq / sr;
            for (std::size_t i = 0; i < section.size(); ++i)
                section[i] += amp * std::sin(w * static_cast<double>(begin + static_cast<long long>(i)));
        }
        for (double& x : section) x += tim.noise_level * noise_rng.normal();

        for (std::size_t i = 0; i < section.size(); ++i) {
            const long long idx = begin + static_cast<long long>(i);
            double gain = 1.0;
            if (s > 0 && idx < i0 + half) {
                const double u = static_cast<double>(idx - (i0 - half)) / static_cast<double>(xf);
                gain *= 0.5 - 0.5 * std::cos(kPi * std::clamp(u, 0.0, 1.0));
            }
            if (s + 1 < n_sections && idx >= i1 - half) {
                const double u = static_cast<double>(idx - (i1 - half)) / static_cast<double>(xf);
                gain *= 0.5 + 0.5 * std::cos(kPi * std::clamp(u, 0.0, 1.0));
            }
            clip.samples[static_cast<std::size_t>(idx)] =
                clip1(clip.samples[static_cast<std::size_t>(idx)] + gain * section[i]);
        }

        track.segments.push_back({t0, t0 + dur, vocab.intern(label)});
        t0 += dur;
    }
    if (!track.segments.empty()) track.segments.back().end = track.duration;
    return {std::move(clip), std::move(track)};
}

CropResult crop_window(const AudioClip& clip, double start, double length_T) {
    if (length_T <= 0.0) throw InputError("crop_window: length must be positive");
    if (start < 0.0) throw InputError("crop_window: start must be non-negative");
    const auto n_out = static_cast<std::size_t>(std::llround(length_T * clip.sample_rate));
    const auto i0 = static_cast<long long>(std::llround(start * clip.sample_rate));

    CropResult out;
    out.offset = start;
    out.clip.sample_rate = clip.sample_rate;
    out.clip.samples.assign(n_out, 0.0);
    const long long n_src = static_cast<long long>(clip.samples.size());
    for (std::size_t i = 0; i < n_out; ++i) {
        const long long src = i0 + static_cast<long long>(i);
        if (src >= 0 && src < n_src) out.clip.samples[i] = clip.samples[static_cast<std::size_t>(src)];
    }
    return out;
}

CropResult random_crop(const AudioClip& clip, double length_T, Rng& rng) {
    if (length_T <= 0.0) throw InputError("random_crop: length must be positive");
    const double span = std::max(0.0, clip.duration() - length_T);
    const double offset = span > 0.0 ? rng.uniform(0.0, span) : 0.0;
    return crop_window(clip, offset, length_T);
}

SongSpec make_song_spec(std::uint64_t corpus_seed, int song_index, const CorpusParams& params) {
    static const char* kLabelNames[] = {"intro",  "verse",  "chorus", "bridge",
                                        "outro",  "solo",   "breakdown", "interlude"};
    const int n_labels = std::min<int>(params.n_labels, 8);

    Rng rng = Rng(corpus_seed).fork(0x50A6 + static_cast<std::uint64_t>(song_index));
    SongSpec spec;
    spec.seed = rng.next_u64();
    spec.sample_rate = params.sample_rate;

    // Fundamentals 4 semitones apart (>= 3 required), +-0.5 semitone per-song
    // detune; distinct harmonic profiles per label.
    for (int k = 0; k < n_labels; ++k) {
        Timbre t;
        const double detune = rng.uniform(-0.5, 0.5);
        t.fundamental_hz = 110.0 * std::pow(2.0, (4.0 * k + detune) / 12.0);
        t.harmonic_amps.resize(4);
        for (int h = 0; h < 4; ++h) {
            const double base = 1.0 / (1.0 + h);
            const double tilt = 0.25 + 0.75 * ((k + h) % 4) / 3.0;
            t.harmonic_amps[static_cast<std::size_t>(h)] =
                base * tilt * (0.9 + 0.2 * rng.uniform());
        }
        t.noise_level = 0.02 + 0.03 * rng.uniform();  // <= -20 dBFS
        spec.timbre_map.emplace_back(kLabelNames[k], t);
    }

    const int n_sections =
        params.min_sections +
        static_cast<int>(rng.uniform_index(
            static_cast<std::uint64_t>(params.max_sections - params.min_sections + 1)));
    int prev = -1;
    for (int s = 0; s < n_sections; ++s) {
        int label;
        do {
            label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_labels)));
        } while (label == prev && n_labels > 1);
        prev = label;
        const double dur = rng.uniform(params.min_section_s, params.max_section_s);
        spec.section_plan.emplace_back(kLabelNames[label], dur);
    }
    return spec;
}

}  // namespace strukt
