#include "strukt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "strukt/error.hpp"

namespace strukt {
namespace {

// Kuhn's augmenting-path maximum bipartite matching. Sizes here are tiny
// (boundaries per song), so O(V*E) is plenty.
int max_matching(const std::vector<std::vector<int>>& edges, int n_right) {
    std::vector<int> match_right(static_cast<std::size_t>(n_right), -1);
    std::vector<char> visited;

    std::function<bool(int)> try_kuhn = [&](int left) -> bool {
        for (int right : edges[static_cast<std::size_t>(left)]) {
            if (visited[static_cast<std::size_t>(right)]) continue;
            visited[static_cast<std::size_t>(right)] = 1;
            if (match_right[static_cast<std::size_t>(right)] < 0 ||
                try_kuhn(match_right[static_cast<std::size_t>(right)])) {
                match_right[static_cast<std::size_t>(right)] = left;
                return true;
            }
        }
        return false;
    };

    int hits = 0;
    for (std::size_t left = 0; left < edges.size(); ++left) {
        visited.assign(static_cast<std::size_t>(n_right), 0);
        if (try_kuhn(static_cast<int>(left))) ++hits;
    }
    return hits;
}

}  // namespace

HitRate hit_rate_f(const std::vector<double>& reference, const std::vector<double>& estimate,
                   double tolerance) {
    std::vector<std::vector<int>> edges(reference.size());
    for (std::size_t r = 0; r < reference.size(); ++r)
        for (std::size_t e = 0; e < estimate.size(); ++e)
            if (std::abs(reference[r] - estimate[e]) <= tolerance)
                edges[r].push_back(static_cast<int>(e));

    HitRate out;
    out.hits = max_matching(edges, static_cast<int>(estimate.size()));
    out.precision = estimate.empty() ? 0.0 : static_cast<double>(out.hits) / estimate.size();
    out.recall = reference.empty() ? 0.0 : static_cast<double>(out.hits) / reference.size();
    const double pr = out.precision + out.recall;
    out.f = pr > 0.0 ? 2.0 * out.precision * out.recall / pr : 0.0;
    return out;
}

double frame_accuracy(const std::vector<int>& pred_labels, const std::vector<int>& true_labels,
                      const std::vector<bool>& mask) {
    if (pred_labels.size() != true_labels.size() || pred_labels.size() != mask.size())
        throw ContractError("frame_accuracy: length mismatch");
    long long valid = 0, agree = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++valid;
        if (pred_labels[i] == true_labels[i]) ++agree;
    }
    if (valid == 0) throw InputError("frame_accuracy: all frames masked");
    return static_cast<double>(agree) / static_cast<double>(valid);
}

std::vector<int> track_frame_labels(const SegmentTrack& track, double grid_rate, int length) {
    // Boundaries snap to their nearest grid index; frames at or after a
    // snapped boundary take the later segment (same rule as targets).
    std::vector<int> snap_idx;
    for (const auto& seg : track.segments)
        snap_idx.push_back(static_cast<int>(std::llround(seg.start * grid_rate)));

    std::vector<int> labels(static_cast<std::size_t>(length), -1);
    for (int l = 0; l < length; ++l) {
        const double t = static_cast<double>(l) / grid_rate;
        if (t >= track.duration) continue;
        int seg = 0;
        for (std::size_t k = 1; k < snap_idx.size(); ++k)
            if (snap_idx[k] <= l) seg = static_cast<int>(k);
        labels[static_cast<std::size_t>(l)] = track.segments[static_cast<std::size_t>(seg)].label;
    }
    return labels;
}

MetricsReport evaluate_song(const std::vector<double>& boundary_curve,
                            const Tensor& function_logits, double grid_rate,
                            const SegmentTrack& truth, const PeakPickConfig& peak_cfg) {
    const int L = function_logits.rows;
    if (static_cast<int>(boundary_curve.size()) != L)
        throw ContractError("evaluate_song: curve/logits length mismatch");

    const std::vector<double> ref = truth.interior_boundaries();
    const std::vector<double> est = peak_pick(boundary_curve, grid_rate, peak_cfg);

    MetricsReport report;
    report.n_ref_boundaries = static_cast<int>(ref.size());
    report.n_est_boundaries = static_cast<int>(est.size());
    report.hr_05 = hit_rate_f(ref, est, 0.5);
    report.hr_3 = hit_rate_f(ref, est, 3.0);

    const std::vector<int> truth_labels = track_frame_labels(truth, grid_rate, L);
    std::vector<int> pred(static_cast<std::size_t>(L));
    std::vector<bool> mask(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
        int best = 0;
        for (int c = 1; c < function_logits.cols; ++c)
            if (function_logits.at(l, c) > function_logits.at(l, best)) best = c;
        pred[static_cast<std::size_t>(l)] = best;
        mask[static_cast<std::size_t>(l)] = truth_labels[static_cast<std::size_t>(l)] >= 0;
    }
    report.acc = frame_accuracy(pred, truth_labels, mask);
    return report;
}

}  // namespace strukt
