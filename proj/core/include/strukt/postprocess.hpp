#pragma once

#include <string>
#include <vector>

#include "strukt/annotations.hpp"
#include "strukt/tensor.hpp"

namespace strukt {

// Peak picking over the boundary activation curve. All windows are in
// seconds and clipped at the curve edges (no padding).
struct PeakPickConfig {
    double max_window = 3.0;      // strict-max neighborhood, each side
    double mean_window = 6.0;     // local-mean neighborhood, each side
    double delta = 0.05;          // required activation above the local mean
    double min_separation = 3.0;  // survivors are at least this far apart

    void validate(double grid_rate) const;  // throws ConfigError
};

// Frame i is a candidate iff it is the strict maximum over +-max_window and
// curve[i] >= local_mean + delta; candidates closer than min_separation keep
// the higher value (ties keep the earlier frame). Returns times i/grid_rate.
std::vector<double> peak_pick(const std::vector<double>& curve, double grid_rate,
                              const PeakPickConfig& cfg);

// Segment edges are {0} u boundaries u {duration}; each segment takes the
// majority vote of per-frame argmax over the frames it covers (frame l at
// time l/grid_rate; vote ties keep the lower class index); segments covering
// no frames merge into their predecessor.
SegmentTrack reconstruct_track(const std::vector<double>& boundaries,
                               const Tensor& function_logits, double grid_rate, double duration);

// Activation dump, same header scheme as melgrams with magic "ACTV":
// column 0 is the boundary activation, columns 1..C the function scores.
void write_activations(const std::string& path, const std::vector<double>& boundary,
                       const Tensor& function_scores, double grid_rate);

}  // namespace strukt
