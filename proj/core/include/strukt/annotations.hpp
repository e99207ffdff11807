#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "strukt/rng.hpp"

namespace strukt {

// Label registry. Labels are interned in first-seen order after canonical
// lowercasing; the order is persisted alongside trained models.
class LabelVocab {
  public:
    int intern(const std::string& raw);           // adds if unseen
    int lookup(const std::string& raw) const;     // -1 if unseen
    const std::string& name(int index) const;
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

    static std::string canonical(const std::string& raw);  // lowercase, validated

  private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

struct Segment {
    double start = 0.0;
    double end = 0.0;
    int label = 0;
};

// Contiguous, non-overlapping labeled intervals covering [0, duration).
struct SegmentTrack {
    std::vector<Segment> segments;
    double duration = 0.0;

    void validate(int vocab_size) const;  // throws ContractError on breach
    // Interior boundary times (segment joins; excludes 0 and duration).
    std::vector<double> interior_boundaries() const;
};

// Per-frame training targets on the model's output grid. Frame l samples
// time offset + l / grid_rate.
struct ActivationTargets {
    std::vector<double> boundary;            // [L], peaks at 1.0 on boundary frames
    std::vector<std::vector<double>> functions;  // [L][C], one-hot on valid frames
    std::vector<bool> valid_mask;            // false past the song's end
    double grid_rate = 0.0;
};

// TSV `start<TAB>end<TAB>label` per line, seconds with decimal point.
// Gaps/overlaps <= 50 ms are snapped to the midpoint; larger ones are
// rejected. Labels are interned into `vocab`.
SegmentTrack parse_segments(const std::string& path, double duration, LabelVocab& vocab);
SegmentTrack parse_segments_text(const std::string& text, double duration, LabelVocab& vocab);
void write_segments(const std::string& path, const SegmentTrack& track, const LabelVocab& vocab);

struct Window {
    double offset = 0.0;  // seconds into the track
    double length = 0.0;  // seconds
};

// Builds boundary/function targets for a window of the track. Interior
// boundaries inside the window get a Hamming bump (odd width nearest
// ramp_width*grid_rate, center exactly 1.0, overlaps combined by max).
// n_classes: one-hot width (vocab size). length_override > 0 pins the frame
// count L (otherwise L = round(length * grid_rate)).
ActivationTargets targets_from_track(const SegmentTrack& track, Window window, double grid_rate,
                                     double ramp_width, int n_classes, int length_override = -1);

struct SegmentPair {
    int i = 0;  // indices into the window-intersecting segment list
    int j = 0;
    bool same_label = false;
};

struct WindowSegments {
    std::vector<Segment> segments;  // clipped to the window, window-relative times
    std::vector<SegmentPair> pairs;
};

// All unordered pairs of segments intersecting the window by >= 1 s. When
// there are more than max_pairs candidates, a seeded subsample keeps at most
// floor(0.7 * max_pairs) negatives and fills the rest with positives.
WindowSegments segment_pairs(const SegmentTrack& track, Window window, int max_pairs, Rng& rng);

}  // namespace strukt
