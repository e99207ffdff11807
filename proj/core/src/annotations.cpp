#include "strukt/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "strukt/error.hpp"

namespace strukt {

namespace {

// Boundary/label grid convention: frame l samples time l / grid_rate, and
// every boundary snaps to its nearest grid index. Targets, peak picking and
// track reconstruction all share this, which is what makes the clean
// round trip exact.
int snap_to_grid(double t, double grid_rate) {
    return static_cast<int>(std::llround(t * grid_rate));
}

}  // namespace

std::string LabelVocab::canonical(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
        if (!ok) throw ParseError(std::string("label contains unsupported character '") + c + "'");
        out.push_back(c);
    }
    if (out.empty()) throw ParseError("empty label");
    return out;
}

int LabelVocab::intern(const std::string& raw) {
    const std::string key = canonical(raw);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(names_.size());
    names_.push_back(key);
    index_.emplace(key, id);
    return id;
}

int LabelVocab::lookup(const std::string& raw) const {
    auto it = index_.find(canonical(raw));
    return it == index_.end() ? -1 : it->second;
}

const std::string& LabelVocab::name(int index) const {
    if (index < 0 || index >= size()) throw ContractError("label index out of range");
    return names_[static_cast<std::size_t>(index)];
}

void SegmentTrack::validate(int vocab_size) const {
    if (segments.empty()) throw ContractError("segment track: empty");
    if (segments.front().start != 0.0) throw ContractError("segment track: first start != 0");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (s.end <= s.start) throw ContractError("segment track: non-positive segment");
        if (i > 0 && segments[i - 1].end != s.start)
            throw ContractError("segment track: not contiguous");
        if (s.label < 0 || s.label >= vocab_size)
            throw ContractError("segment track: label index out of vocabulary");
    }
    if (segments.back().end != duration) throw ContractError("segment track: last end != duration");
}

std::vector<double> SegmentTrack::interior_boundaries() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < segments.size(); ++i) out.push_back(segments[i].start);
    return out;
}

SegmentTrack parse_segments_text(const std::string& text, double duration, LabelVocab& vocab) {
    constexpr double kSnapTol = 0.050;
    SegmentTrack track;
    track.duration = duration;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    double prev_end = 0.0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        std::size_t tab1 = line.find('\t');
        std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            throw ParseError("expected start<TAB>end<TAB>label", line_no);

        double start, end;
        try {
            start = std::stod(line.substr(0, tab1));
            end = std::stod(line.substr(tab1 + 1, tab2 - tab1 - 1));
        } catch (const std::exception&) {
            throw ParseError("cannot parse segment times", line_no);
        }
        const std::string label = line.substr(tab2 + 1);
        if (end <= start) throw ParseError("segment end not after start", line_no);
        if (!first && end <= track.segments.back().end)
            throw ParseError("non-monotonic segment times", line_no);

        int label_id;
        try {
            label_id = vocab.intern(label);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }

        if (first) {
            if (std::abs(start) > kSnapTol)
                throw ParseError("first segment does not start at 0", line_no);
            start = 0.0;
        } else {
            const double gap = start - prev_end;
            if (std::abs(gap) > kSnapTol)
                throw ParseError(gap > 0 ? "gap before segment exceeds 50 ms tolerance"
                                         : "overlap with previous segment exceeds 50 ms tolerance",
                                 line_no);
            // Snap both sides to the midpoint of the discrepancy.
            const double mid = 0.5 * (start + prev_end);
            track.segments.back().end = mid;
            start = mid;
        }
        track.segments.push_back({start, end, label_id});
        prev_end = end;
        first = false;
    }
    if (track.segments.empty()) throw ParseError("no segments in annotation");
    const double tail = duration - track.segments.back().end;
    if (std::abs(tail) > kSnapTol)
        throw ParseError("last segment end does not match the track duration", line_no);
    track.segments.back().end = duration;
    return track;
}

SegmentTrack parse_segments(const std::string& path, double duration, LabelVocab& vocab) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open annotation file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_segments_text(ss.str(), duration, vocab);
}

void write_segments(const std::string& path, const SegmentTrack& track, const LabelVocab& vocab) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write annotation file: " + path);
    char buf[64];
    for (const auto& s : track.segments) {
        std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t", s.start, s.end);
        out << buf << vocab.name(s.label) << "\n";
    }
}

ActivationTargets targets_from_track(const SegmentTrack& track, Window window, double grid_rate,
                                     double ramp_width, int n_classes, int length_override) {
    if (grid_rate <= 0.0) throw InputError("targets_from_track: grid_rate must be positive");
    if (ramp_width <= 0.0) throw InputError("targets_from_track: ramp_width must be positive");
    if (window.length <= 0.0) throw InputError("targets_from_track: window length must be positive");

    const int L = length_override > 0
                      ? length_override
                      : static_cast<int>(std::llround(window.length * grid_rate));
    ActivationTargets t;
    t.grid_rate = grid_rate;
    t.boundary.assign(static_cast<std::size_t>(L), 0.0);
    t.functions.assign(static_cast<std::size_t>(L),
                       std::vector<double>(static_cast<std::size_t>(n_classes), 0.0));
    t.valid_mask.assign(static_cast<std::size_t>(L), false);

    // Hamming bump width: odd frame count nearest ramp_width * grid_rate.
    int M = 2 * static_cast<int>(std::llround((ramp_width * grid_rate - 1.0) / 2.0)) + 1;
    M = std::max(1, M);
    const int halfM = (M - 1) / 2;

    // Segment boundaries snapped to window-relative grid indices. Frames at
    // or after a snapped interior boundary belong to the later segment.
    std::vector<int> snap_idx;  // snapped start of each segment, window-relative
    for (const auto& seg : track.segments)
        snap_idx.push_back(snap_to_grid(seg.start - window.offset, grid_rate));

    for (int l = 0; l < L; ++l) {
        const double t_abs = window.offset + static_cast<double>(l) / grid_rate;
        if (t_abs >= track.duration || t_abs < 0.0) continue;  // zero-padding region
        t.valid_mask[static_cast<std::size_t>(l)] = true;
        // Last segment whose snapped start is <= l.
        int seg = 0;
        for (std::size_t k = 1; k < snap_idx.size(); ++k)
            if (snap_idx[k] <= l) seg = static_cast<int>(k);
        const int label = track.segments[static_cast<std::size_t>(seg)].label;
        if (label >= 0 && label < n_classes)
            t.functions[static_cast<std::size_t>(l)][static_cast<std::size_t>(label)] = 1.0;
    }

    // Interior boundaries inside the window emit a Hamming bump, overlaps
    // combined by elementwise max. Track start/end emit nothing.
    for (std::size_t k = 1; k < track.segments.size(); ++k) {
        const double b = track.segments[k].start;
        if (b <= window.offset || b >= window.offset + window.length) continue;
        const int center = snap_idx[k];
        if (center < 0 || center >= L) continue;
        for (int n = 0; n < M; ++n) {
            const int idx = center - halfM + n;
            if (idx < 0 || idx >= L) continue;
            // Hamming taps; the center tap is 0.54 + 0.46 = 1.0 exactly.
            const double w =
                M == 1 ? 1.0
                       : 0.54 - 0.46 * std::cos(2.0 * 3.14159265358979323846 * n / (M - 1));
            auto& cell = t.boundary[static_cast<std::size_t>(idx)];
            cell = std::max(cell, w);
        }
    }
    return t;
}

WindowSegments segment_pairs(const SegmentTrack& track, Window window, int max_pairs, Rng& rng) {
    constexpr double kMinIntersect = 1.0;
    WindowSegments out;
    const double w0 = window.offset;
    const double w1 = window.offset + window.length;
    std::vector<Segment> clipped;
    for (const auto& seg : track.segments) {
        const double a = std::max(seg.start, w0);
        const double b = std::min(seg.end, w1);
        if (b - a >= kMinIntersect)
            clipped.push_back({a - w0, b - w0, seg.label});
    }
    out.segments = clipped;
    const int n = static_cast<int>(clipped.size());
    if (n < 2) return out;

    std::vector<SegmentPair> positives, negatives;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const bool same = clipped[static_cast<std::size_t>(i)].label ==
                              clipped[static_cast<std::size_t>(j)].label;
            (same ? positives : negatives).push_back({i, j, same});
        }

    const int total = static_cast<int>(positives.size() + negatives.size());
    if (total <= max_pairs) {
        out.pairs = std::move(positives);
        out.pairs.insert(out.pairs.end(), negatives.begin(), negatives.end());
        return out;
    }

    // Seeded uniform subsample, at most 70% negatives; positives fill the
    // remainder (result may be smaller than max_pairs if positives are rare).
    auto take = [&rng](std::vector<SegmentPair>& pool, int k) {
        std::vector<SegmentPair> picked;
        for (int i = 0; i < k; ++i) {
            const auto idx = rng.uniform_index(pool.size());
            picked.push_back(pool[idx]);
            pool[idx] = pool.back();
            pool.pop_back();
        }
        return picked;
    };
    const int neg_cap = static_cast<int>(0.7 * max_pairs);
    const int n_neg = std::min<int>(static_cast<int>(negatives.size()), neg_cap);
    const int n_pos = std::min<int>(static_cast<int>(positives.size()), max_pairs - n_neg);
    out.pairs = take(negatives, n_neg);
    auto pos_picked = take(positives, n_pos);
    out.pairs.insert(out.pairs.end(), pos_picked.begin(), pos_picked.end());
    return out;
}

}  // namespace strukt
