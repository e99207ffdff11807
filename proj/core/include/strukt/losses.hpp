#pragma once

#include <optional>
#include <vector>

#include "strukt/tape.hpp"

namespace strukt {

struct LossWeights {
    double alpha = 0.1;   // boundary term
    double beta = 0.9;    // function term
    double gamma = 0.1;   // contrastive term
    double margin = 1.0;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double smooth_l1_beta = 1.0;
    double norm_epsilon = 1e-8;

    void validate() const;  // throws ConfigError
};

// Per-step component values, logged as one JSON line each step.
struct LossReport {
    double boundary_wbce = 0.0;
    double boundary_smooth_l1 = 0.0;
    double boundary_focal = 0.0;
    double function_wbce = 0.0;
    double contrastive = 0.0;
    double combined = 0.0;
    int pair_count = 0;
};

// All losses are tape nodes so they join the model's backward pass, and all
// reduce by mean over valid entries (sum of mask), so scales are comparable
// across window lengths. Predictions are clamped to [1e-7, 1 - 1e-7] before
// any log.

// -sum(mask .* w .* [y log p + (1-y) log(1-p)]) / sum(mask)
int wbce_node(Tape& tape, int pred, const Tensor& target, const Tensor& weights,
              const Tensor& mask);

// Focal loss over binary targets (thresholded at 0.5 by the caller):
// mean of -[y a (1-p)^g log p + (1-y)(1-a) p^g log(1-p)] over valid entries.
int focal_node(Tape& tape, int pred, const Tensor& target_binary, const Tensor& mask,
               double focal_alpha, double focal_gamma);

// mean over valid entries of huber(pred - target; beta)
int smooth_l1_node(Tape& tape, int pred, const Tensor& target, const Tensor& mask, double beta);

// Mean over pairs of I*dist^2 + (1-I)*max(0, m - dist)^2 with Euclidean
// dist between projected span embeddings ([1 x proj_dim] nodes).
int contrastive_node(Tape& tape, const std::vector<std::pair<int, int>>& pairs,
                     const std::vector<bool>& same_label, double margin);

// L_boundary = wbce + smooth_l1 + focal; each of L_boundary, L_function,
// L_CL is scaled by 1 / (|value| + eps) with the divisor gradient-stopped
// (a forward-value constant), then combined with alpha/beta/gamma. A missing
// contrastive term is simply omitted. Fills `report` from forward values;
// throws NumericError if any component is non-finite.
int combine_node(Tape& tape, int boundary_wbce, int boundary_smooth_l1, int boundary_focal,
                 int function_wbce, std::optional<int> contrastive, const LossWeights& weights,
                 LossReport* report);

// Scalar conveniences for tests and reporting: evaluate one loss on plain
// vectors through a scratch tape.
double wbce_value(const std::vector<double>& pred, const std::vector<double>& target,
                  const std::vector<double>& weights, const std::vector<double>& mask);
double focal_value(const std::vector<double>& pred, const std::vector<double>& target_binary,
                   const std::vector<double>& mask, double focal_alpha, double focal_gamma);
double smooth_l1_value(const std::vector<double>& pred, const std::vector<double>& target,
                       const std::vector<double>& mask, double beta);
double contrastive_value(const std::vector<std::vector<double>>& zi,
                         const std::vector<std::vector<double>>& zj,
                         const std::vector<bool>& same_label, double margin);

}  // namespace strukt
