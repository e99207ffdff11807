#pragma once

#include <vector>

#include "strukt/annotations.hpp"
#include "strukt/postprocess.hpp"
#include "strukt/tensor.hpp"

namespace strukt {

struct HitRate {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    int hits = 0;
};

struct MetricsReport {
    double acc = 0.0;
    HitRate hr_05;
    HitRate hr_3;
    int n_ref_boundaries = 0;
    int n_est_boundaries = 0;
};

// Boundary hit rate under a maximum one-to-one matching: (r, e) may match
// iff |r - e| <= tolerance. P = hits/|est| (0 for an empty estimate),
// R = hits/|ref|, F = 2PR/(P+R) with F = 0 when P + R = 0. Interior
// boundaries only; callers strip 0 and the track duration.
HitRate hit_rate_f(const std::vector<double>& reference, const std::vector<double>& estimate,
                   double tolerance);

// Fraction of valid frames where the predicted index agrees.
double frame_accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels,
                      const std::vector<bool>& mask);

// Full-song scoring: peak-pick the boundary curve, match at 0.5 s and 3 s,
// frame accuracy of argmax function logits against the track's labels on the
// model's output grid (frame l at l/grid_rate, boundaries snapped).
MetricsReport evaluate_song(const std::vector<double>& boundary_curve,
                            const Tensor& function_logits, double grid_rate,
                            const SegmentTrack& truth, const PeakPickConfig& peak_cfg);

// Per-frame labels of a track on the output grid (snap convention shared
// with targets_from_track); entries past the duration get label -1.
std::vector<int> track_frame_labels(const SegmentTrack& track, double grid_rate, int length);

}  // namespace strukt
