#include "strukt/losses.hpp"

#include <cmath>

#include "strukt/error.hpp"

namespace strukt {
namespace {

constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;

double mask_sum(const Tensor& mask) {
    double s = 0.0;
    for (double m : mask.data) s += m;
    if (s <= 0.0) throw InputError("loss: all entries masked; mean undefined");
    return s;
}

void check_same_shape(const Tensor& a, int rows, int cols, const char* what) {
    if (a.rows != rows || a.cols != cols)
        throw ContractError(std::string("loss: ") + what + " shape mismatch");
}

}  // namespace

void LossWeights::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || focal_gamma < 0 || focal_alpha < 0 ||
        smooth_l1_beta <= 0 || norm_epsilon <= 0)
        throw ConfigError("loss weights must be non-negative (beta/epsilon positive)");
    if (margin <= 0) throw ConfigError("contrastive margin must be positive");
}

int wbce_node(Tape& tape, int pred, const Tensor& target, const Tensor& weights,
              const Tensor& mask) {
    const Tensor& p = tape.value(pred);
    check_same_shape(target, p.rows, p.cols, "wbce target");
    check_same_shape(weights, p.rows, p.cols, "wbce weights");
    check_same_shape(mask, p.rows, p.cols, "wbce mask");
    const double denom = mask_sum(mask);

    Tensor wm(p.rows, p.cols);
    for (std::size_t i = 0; i < wm.size(); ++i) wm.data[i] = weights.data[i] * mask.data[i];
    Tensor comp(p.rows, p.cols);
    for (std::size_t i = 0; i < comp.size(); ++i) comp.data[i] = 1.0 - target.data[i];

    const int pc = tape.clamp(pred, kClampLo, kClampHi);
    const int log_p = tape.log(pc);
    const int log_q = tape.log(tape.affine(pc, -1.0, 1.0));
    const int term = tape.add(tape.mul(tape.input(target), log_p),
                              tape.mul(tape.input(std::move(comp)), log_q));
    const int weighted = tape.mul(term, tape.input(std::move(wm)));
    return tape.affine(tape.reduce_sum(weighted), -1.0 / denom, 0.0);
}

int focal_node(Tape& tape, int pred, const Tensor& target_binary, const Tensor& mask,
               double focal_alpha, double focal_gamma) {
    const Tensor& p = tape.value(pred);
    check_same_shape(target_binary, p.rows, p.cols, "focal target");
    check_same_shape(mask, p.rows, p.cols, "focal mask");
    const double denom = mask_sum(mask);

    Tensor pos(p.rows, p.cols), neg(p.rows, p.cols);
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const bool y = target_binary.data[i] > 0.5;
        pos.data[i] = y ? mask.data[i] * focal_alpha : 0.0;
        neg.data[i] = y ? 0.0 : mask.data[i] * (1.0 - focal_alpha);
    }

    const int pc = tape.clamp(pred, kClampLo, kClampHi);
    const int one_minus = tape.affine(pc, -1.0, 1.0);
    const int pos_term = tape.mul(tape.pow(one_minus, focal_gamma), tape.log(pc));
    const int neg_term = tape.mul(tape.pow(pc, focal_gamma), tape.log(one_minus));
    const int total = tape.add(tape.mul(pos_term, tape.input(std::move(pos))),
                               tape.mul(neg_term, tape.input(std::move(neg))));
    return tape.affine(tape.reduce_sum(total), -1.0 / denom, 0.0);
}

int smooth_l1_node(Tape& tape, int pred, const Tensor& target, const Tensor& mask, double beta) {
    if (beta <= 0.0) throw ConfigError("smooth_l1: beta must be positive");
    const Tensor& p = tape.value(pred);
    check_same_shape(target, p.rows, p.cols, "smooth_l1 target");
    check_same_shape(mask, p.rows, p.cols, "smooth_l1 mask");
    const double denom = mask_sum(mask);

    const int d = tape.sub(pred, tape.input(target));
    const int h = tape.huber(d, beta);
    const int masked = tape.mul(h, tape.input(mask));
    return tape.affine(tape.reduce_sum(masked), 1.0 / denom, 0.0);
}

int contrastive_node(Tape& tape, const std::vector<std::pair<int, int>>& pairs,
                     const std::vector<bool>& same_label, double margin) {
    if (pairs.empty()) throw InputError("contrastive: empty pair list");
    if (pairs.size() != same_label.size())
        throw ContractError("contrastive: pair/flag count mismatch");

    int total = -1;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const int diff = tape.sub(pairs[i].first, pairs[i].second);
        const int sq_dist = tape.reduce_sum(tape.mul(diff, diff));
        int term;
        if (same_label[i]) {
            term = sq_dist;
        } else {
            // Tiny epsilon inside the sqrt keeps the gradient finite when a
            // negative pair collapses to identical embeddings.
            const int dist = tape.sqrt_eps(sq_dist, 1e-12);
            const int hinge = tape.clamp(tape.affine(dist, -1.0, margin), 0.0, 1e300);
            term = tape.mul(hinge, hinge);
        }
        total = total < 0 ? term : tape.add(total, term);
    }
    return tape.affine(total, 1.0 / static_cast<double>(pairs.size()), 0.0);
}

int combine_node(Tape& tape, int boundary_wbce, int boundary_smooth_l1, int boundary_focal,
                 int function_wbce, std::optional<int> contrastive, const LossWeights& weights,
                 LossReport* report) {
    weights.validate();
    const int boundary = tape.add(tape.add(boundary_wbce, boundary_smooth_l1), boundary_focal);

    const double vb = tape.scalar_value(boundary);
    const double vf = tape.scalar_value(function_wbce);
    const double vcl = contrastive ? tape.scalar_value(*contrastive) : 0.0;
    if (!std::isfinite(vb) || !std::isfinite(vf) || !std::isfinite(vcl))
        throw NumericError("combine: non-finite loss component (boundary=" + std::to_string(vb) +
                           ", function=" + std::to_string(vf) +
                           ", contrastive=" + std::to_string(vcl) + ")");

    if (report) {
        report->boundary_wbce = tape.scalar_value(boundary_wbce);
        report->boundary_smooth_l1 = tape.scalar_value(boundary_smooth_l1);
        report->boundary_focal = tape.scalar_value(boundary_focal);
        report->function_wbce = vf;
        report->contrastive = vcl;
    }

    // "Normalize each by its magnitude": the divisor is the gradient-stopped
    // current value, so it enters as a plain constant and backward sees
    // alpha/|L_b| etc. as fixed scales.
    const double eps = weights.norm_epsilon;
    int combined = tape.add(tape.affine(boundary, weights.alpha / (std::abs(vb) + eps), 0.0),
                            tape.affine(function_wbce, weights.beta / (std::abs(vf) + eps), 0.0));
    if (contrastive)
        combined = tape.add(
            combined, tape.affine(*contrastive, weights.gamma / (std::abs(vcl) + eps), 0.0));

    if (report) report->combined = tape.scalar_value(combined);
    return combined;
}

namespace {

Tensor col(const std::vector<double>& v) { return Tensor::column(v); }

}  // namespace

double wbce_value(const std::vector<double>& pred, const std::vector<double>& target,
                  const std::vector<double>& weights, const std::vector<double>& mask) {
    Tape tape;
    const int p = tape.input(col(pred));
    return tape.scalar_value(wbce_node(tape, p, col(target), col(weights), col(mask)));
}

double focal_value(const std::vector<double>& pred, const std::vector<double>& target_binary,
                   const std::vector<double>& mask, double focal_alpha, double focal_gamma) {
    Tape tape;
    const int p = tape.input(col(pred));
    return tape.scalar_value(
        focal_node(tape, p, col(target_binary), col(mask), focal_alpha, focal_gamma));
}

double smooth_l1_value(const std::vector<double>& pred, const std::vector<double>& target,
                       const std::vector<double>& mask, double beta) {
    Tape tape;
    const int p = tape.input(col(pred));
    return tape.scalar_value(smooth_l1_node(tape, p, col(target), col(mask), beta));
}

double contrastive_value(const std::vector<std::vector<double>>& zi,
                         const std::vector<std::vector<double>>& zj,
                         const std::vector<bool>& same_label, double margin) {
    Tape tape;
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < zi.size(); ++i) {
        const int a = tape.input(Tensor(1, static_cast<int>(zi[i].size()), zi[i]));
        const int b = tape.input(Tensor(1, static_cast<int>(zj[i].size()), zj[i]));
        pairs.emplace_back(a, b);
    }
    return tape.scalar_value(contrastive_node(tape, pairs, same_label, margin));
}

}  // namespace strukt
