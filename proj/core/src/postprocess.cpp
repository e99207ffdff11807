#include "strukt/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "strukt/error.hpp"

namespace strukt {

void PeakPickConfig::validate(double grid_rate) const {
    if (max_window <= 0 || mean_window <= 0 || delta <= 0 || min_separation <= 0)
        throw ConfigError("peak picking: all parameters must be positive");
    if (grid_rate > 0 && min_separation < 1.0 / grid_rate)
        throw ConfigError("peak picking: min_separation below one grid period");
}

std::vector<double> peak_pick(const std::vector<double>& curve, double grid_rate,
                              const PeakPickConfig& cfg) {
    cfg.validate(grid_rate);
    const int n = static_cast<int>(curve.size());
    if (n < 1) throw InputError("peak_pick: empty curve");

    const int w_max = std::max(1, static_cast<int>(std::llround(cfg.max_window * grid_rate)));
    const int w_mean = std::max(1, static_cast<int>(std::llround(cfg.mean_window * grid_rate)));
    const int min_sep = std::max(1, static_cast<int>(std::llround(cfg.min_separation * grid_rate)));

    std::vector<int> kept;
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - w_max);
        const int b = std::min(n - 1, i + w_max);
        bool strict_max = true;
        for (int j = a; j <= b && strict_max; ++j)
            if (j != i && curve[static_cast<std::size_t>(j)] >= curve[static_cast<std::size_t>(i)])
                strict_max = false;
        if (!strict_max) continue;

        const int ma = std::max(0, i - w_mean);
        const int mb = std::min(n - 1, i + w_mean);
        double mean = 0.0;
        for (int j = ma; j <= mb; ++j) mean += curve[static_cast<std::size_t>(j)];
        mean /= (mb - ma + 1);
        if (curve[static_cast<std::size_t>(i)] < mean + cfg.delta) continue;

        // Minimum-separation suppression: the higher value wins, ties keep
        // the earlier frame.
        while (!kept.empty() && i - kept.back() < min_sep &&
               curve[static_cast<std::size_t>(i)] > curve[static_cast<std::size_t>(kept.back())])
            kept.pop_back();
        if (kept.empty() || i - kept.back() >= min_sep) kept.push_back(i);
    }

    std::vector<double> times;
    times.reserve(kept.size());
    for (int i : kept) times.push_back(static_cast<double>(i) / grid_rate);
    return times;
}

SegmentTrack reconstruct_track(const std::vector<double>& boundaries,
                               const Tensor& function_logits, double grid_rate, double duration) {
    const int L = function_logits.rows;
    const int C = function_logits.cols;
    if (L < 1 || C < 1) throw InputError("reconstruct_track: empty logits");

    std::vector<int> argmax(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (function_logits.at(l, c) > function_logits.at(l, best)) best = c;
        argmax[static_cast<std::size_t>(l)] = best;
    }

    std::vector<double> edges = {0.0};
    for (double b : boundaries)
        if (b > 0.0 && b < duration) edges.push_back(b);
    edges.push_back(duration);

    SegmentTrack track;
    track.duration = duration;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
        const double a = edges[k];
        const double b = edges[k + 1];
        // Frames whose time l/grid_rate lies in [a, b).
        const int l0 = std::max(0, static_cast<int>(std::ceil(a * grid_rate - 1e-9)));
        const int l1 = std::min(L, static_cast<int>(std::ceil(b * grid_rate - 1e-9)));
        if (l1 <= l0) {
            // No frames: merge into the previous segment (or extend forward
            // when this is the very first edge span).
            if (!track.segments.empty())
                track.segments.back().end = b;
            else if (k + 2 < edges.size())
                edges[k + 1] = a;  // fold the empty span into the next one
            continue;
        }
        std::vector<int> votes(static_cast<std::size_t>(C), 0);
        for (int l = l0; l < l1; ++l) ++votes[static_cast<std::size_t>(argmax[static_cast<std::size_t>(l)])];
        int winner = 0;
        for (int c = 1; c < C; ++c)
            if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(winner)])
                winner = c;  // strict > keeps the lower index on ties
        track.segments.push_back({a, b, winner});
    }
    if (track.segments.empty()) throw InputError("reconstruct_track: no segment covers any frame");
    track.segments.front().start = 0.0;
    track.segments.back().end = duration;
    return track;
}

void write_activations(const std::string& path, const std::vector<double>& boundary,
                       const Tensor& function_scores, double grid_rate) {
    if (static_cast<int>(boundary.size()) != function_scores.rows)
        throw ContractError("write_activations: boundary/function length mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write activation file: " + path);
    const std::uint32_t frames = static_cast<std::uint32_t>(boundary.size());
    const std::uint32_t cols = static_cast<std::uint32_t>(1 + function_scores.cols);
    out.write("ACTV", 4);
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(frames);
    put_u32(cols);
    const float rate = static_cast<float>(grid_rate);
    std::uint32_t rate_bits;
    std::memcpy(&rate_bits, &rate, 4);
    put_u32(rate_bits);
    std::vector<float> row(cols);
    for (std::uint32_t l = 0; l < frames; ++l) {
        row[0] = static_cast<float>(boundary[l]);
        for (int c = 0; c < function_scores.cols; ++c)
            row[static_cast<std::size_t>(c) + 1] =
                static_cast<float>(function_scores.at(static_cast<int>(l), c));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(cols * 4));
    }
}

}  // namespace strukt
