#include <doctest.h>

#include <cmath>
#include <functional>

#include "strukt/error.hpp"
#include "strukt/losses.hpp"
#include "strukt/model.hpp"
#include "strukt/rng.hpp"

using namespace strukt;

TEST_CASE("wbce unit values") {
    // perfect prediction: only the clamp slack remains
    CHECK(std::abs(wbce_value({1.0}, {1.0}, {1.0}, {1.0})) < 2e-7);
    // y=1, p=0.5 -> ln 2
    CHECK(wbce_value({0.5}, {1.0}, {1.0}, {1.0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // weight 2 doubles it
    CHECK(wbce_value({0.5}, {1.0}, {2.0}, {1.0}) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    // mean over valid entries only
    CHECK(wbce_value({0.5, 0.9}, {1.0, 0.0}, {1.0, 1.0}, {1.0, 0.0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // all-masked input is an error
    CHECK_THROWS_AS(wbce_value({0.5}, {1.0}, {1.0}, {0.0}), InputError);
}

TEST_CASE("focal unit values") {
    // gamma = 0, alpha = 0.5 reduces to half the unweighted BCE
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const double p = rng.uniform(0.05, 0.95);
        const double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const double bce = wbce_value({p}, {y}, {1.0}, {1.0});
        CHECK(focal_value({p}, {y}, {1.0}, 0.5, 0.0) ==
              doctest::Approx(0.5 * bce).epsilon(1e-9));
    }
    // y=1, p=0.9, alpha 0.25, gamma 2 -> -0.25 * 0.01 * ln 0.9
    CHECK(focal_value({0.9}, {1.0}, {1.0}, 0.25, 2.0) ==
          doctest::Approx(-0.25 * 0.01 * std::log(0.9)).epsilon(1e-9));
    CHECK(focal_value({0.9}, {1.0}, {1.0}, 0.25, 2.0) == doctest::Approx(2.634e-4).epsilon(1e-3));
    // easy examples are downweighted more under gamma=2 than gamma=0
    const double easy_over_hard_g2 =
        focal_value({0.9}, {1.0}, {1.0}, 0.25, 2.0) / focal_value({0.5}, {1.0}, {1.0}, 0.25, 2.0);
    const double easy_over_hard_g0 =
        focal_value({0.9}, {1.0}, {1.0}, 0.25, 0.0) / focal_value({0.5}, {1.0}, {1.0}, 0.25, 0.0);
    CHECK(easy_over_hard_g2 < easy_over_hard_g0);
}

TEST_CASE("smooth_l1 unit values") {
    CHECK(smooth_l1_value({1.0}, {1.0}, {1.0}, 1.0) == 0.0);
    CHECK(smooth_l1_value({1.5}, {1.0}, {1.0}, 1.0) == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(smooth_l1_value({3.0}, {1.0}, {1.0}, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("contrastive unit values") {
    // same label, identical embeddings -> exactly 0
    CHECK(contrastive_value({{0.3, -0.2}}, {{0.3, -0.2}}, {true}, 1.0) == 0.0);
    // different label beyond the margin -> 0
    CHECK(contrastive_value({{2.0, 0.0}}, {{0.0, 0.0}}, {false}, 1.0) == 0.0);
    // different label at distance 0.4 -> (1-0.4)^2 = 0.36
    CHECK(contrastive_value({{0.4, 0.0}}, {{0.0, 0.0}}, {false}, 1.0) ==
          doctest::Approx(0.36).epsilon(1e-9));
    // same label at distance 0.4 -> 0.16
    CHECK(contrastive_value({{0.4, 0.0}}, {{0.0, 0.0}}, {true}, 1.0) ==
          doctest::Approx(0.16).epsilon(1e-12));
    // mean over pairs
    CHECK(contrastive_value({{0.4, 0.0}, {0.4, 0.0}}, {{0.0, 0.0}, {0.0, 0.0}}, {true, false},
                            1.0) == doctest::Approx(0.5 * (0.16 + 0.36)).epsilon(1e-9));
}

TEST_CASE("contrastive is symmetric and rotation-invariant") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a(4), b(4);
        for (double& x : a) x = rng.uniform(-1, 1);
        for (double& x : b) x = rng.uniform(-1, 1);
        const bool same = trial % 2 == 0;
        CHECK(contrastive_value({a}, {b}, {same}, 1.0) ==
              doctest::Approx(contrastive_value({b}, {a}, {same}, 1.0)).epsilon(1e-12));

        // rotate both by the same Givens rotations: distance is preserved
        auto rotate = [](std::vector<double> v, double angle) {
            const double c = std::cos(angle), s = std::sin(angle);
            const double x = v[0], y = v[1];
            v[0] = c * x - s * y;
            v[1] = s * x + c * y;
            const double z = v[2], w = v[3];
            v[2] = c * z - s * w;
            v[3] = s * z + c * w;
            return v;
        };
        CHECK(contrastive_value({rotate(a, 0.7)}, {rotate(b, 0.7)}, {same}, 1.0) ==
              doctest::Approx(contrastive_value({a}, {b}, {same}, 1.0)).epsilon(1e-9));
    }
}

TEST_CASE("losses are non-negative and vanish only at their fit points") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const double p = rng.uniform(0.02, 0.98);
        const double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
        CHECK(wbce_value({p}, {y}, {1.0}, {1.0}) >= 0.0);
        CHECK(focal_value({p}, {y}, {1.0}, 0.25, 2.0) >= 0.0);
        CHECK(smooth_l1_value({p}, {y}, {1.0}, 1.0) >= 0.0);
        if (std::abs(p - y) > 0.05) {
            CHECK(wbce_value({p}, {y}, {1.0}, {1.0}) > 1e-4);
            CHECK(smooth_l1_value({p}, {y}, {1.0}, 1.0) > 1e-4);
        }
    }
}

namespace {

// Gradient check a loss over its prediction inputs through the tape.
double loss_grad_err(const std::function<int(Tape&, int)>& loss_of_pred,
                     std::vector<double> pred0, std::uint64_t seed) {
    auto eval = [&](std::span<const double> pred, std::span<double> grad) {
        Tape tape;
        const int p = tape.param(pred, static_cast<int>(pred.size()), 1, 0);
        const int loss = loss_of_pred(tape, p);
        const double v = tape.scalar_value(loss);
        if (!grad.empty()) tape.backward(loss, grad);
        return v;
    };
    std::vector<double> analytic(pred0.size(), 0.0);
    eval(pred0, analytic);
    auto f = [&](std::span<const double> p) { return eval(p, {}); };
    return grad_check(f, analytic, pred0, static_cast<int>(pred0.size()), 1e-5, seed);
}

}  // namespace

TEST_CASE("loss gradients pass finite differences") {
    Rng rng(23);
    std::vector<double> pred(16), target(16), weights(16), mask(16), binary(16);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.uniform(0.1, 0.9);
        target[i] = rng.uniform(0.0, 1.0);
        // keep |pred - target| away from the huber kink at beta = 1
        binary[i] = target[i] > 0.5 ? 1.0 : 0.0;
        weights[i] = rng.uniform(0.5, 2.0);
        mask[i] = i % 5 == 0 ? 0.0 : 1.0;
    }
    const Tensor t_target = Tensor::column(target);
    const Tensor t_weights = Tensor::column(weights);
    const Tensor t_mask = Tensor::column(mask);
    const Tensor t_binary = Tensor::column(binary);

    CHECK(loss_grad_err(
              [&](Tape& t, int p) { return wbce_node(t, p, t_target, t_weights, t_mask); }, pred,
              31) < 1e-5);
    CHECK(loss_grad_err(
              [&](Tape& t, int p) { return focal_node(t, p, t_binary, t_mask, 0.25, 2.0); }, pred,
              37) < 1e-5);
    CHECK(loss_grad_err(
              [&](Tape& t, int p) { return smooth_l1_node(t, p, t_target, t_mask, 1.0); }, pred,
              41) < 1e-5);
}

TEST_CASE("contrastive gradients pass finite differences") {
    Rng rng(29);
    std::vector<double> flat(12);
    for (double& x : flat) x = rng.uniform(-0.8, 0.8);
    auto eval = [&](std::span<const double> z, std::span<double> grad) {
        Tape tape;
        const int za = tape.param(z.subspan(0, 4), 1, 4, 0);
        const int zb = tape.param(z.subspan(4, 4), 1, 4, 4);
        const int zc = tape.param(z.subspan(8, 4), 1, 4, 8);
        const int loss = contrastive_node(tape, {{za, zb}, {za, zc}}, {true, false}, 1.0);
        const double v = tape.scalar_value(loss);
        if (!grad.empty()) tape.backward(loss, grad);
        return v;
    };
    std::vector<double> analytic(12, 0.0);
    eval(flat, analytic);
    auto f = [&](std::span<const double> z) { return eval(z, {}); };
    CHECK(grad_check(f, analytic, flat, 12, 1e-5, 43) < 1e-5);
}

TEST_CASE("combine: forward value is alpha + beta + gamma") {
    LossWeights weights;
    Tape tape;
    Rng rng(31);
    std::vector<double> pred(8), target(8), ones(8, 1.0), binary(8);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.uniform(0.2, 0.8);
        target[i] = rng.uniform(0.0, 1.0);
        binary[i] = target[i] > 0.5 ? 1.0 : 0.0;
    }
    const int p = tape.input(Tensor::column(pred));
    const int b_wbce = wbce_node(tape, p, Tensor::column(target), Tensor::column(ones),
                                 Tensor::column(ones));
    const int b_sl1 = smooth_l1_node(tape, p, Tensor::column(target), Tensor::column(ones), 1.0);
    const int b_focal = focal_node(tape, p, Tensor::column(binary), Tensor::column(ones), 0.25, 2.0);
    const int f_wbce = wbce_node(tape, p, Tensor::column(binary), Tensor::column(ones),
                                 Tensor::column(ones));
    const int za = tape.input(Tensor(1, 2, {0.4, 0.0}));
    const int zb = tape.input(Tensor(1, 2, {0.0, 0.0}));
    const int cl = contrastive_node(tape, {{za, zb}}, {true}, 1.0);

    LossReport report;
    const int combined = combine_node(tape, b_wbce, b_sl1, b_focal, f_wbce, cl, weights, &report);
    CHECK(tape.scalar_value(combined) ==
          doctest::Approx(weights.alpha + weights.beta + weights.gamma).epsilon(1e-6));
    CHECK(report.combined == tape.scalar_value(combined));
    CHECK(report.boundary_wbce > 0.0);
    CHECK(report.contrastive == doctest::Approx(0.16));

    SUBCASE("absent contrastive term drops gamma") {
        Tape tape2;
        const int p2 = tape2.input(Tensor::column(pred));
        const int w2 = wbce_node(tape2, p2, Tensor::column(target), Tensor::column(ones),
                                 Tensor::column(ones));
        const int s2 = smooth_l1_node(tape2, p2, Tensor::column(target), Tensor::column(ones), 1.0);
        const int fo2 =
            focal_node(tape2, p2, Tensor::column(binary), Tensor::column(ones), 0.25, 2.0);
        const int fw2 = wbce_node(tape2, p2, Tensor::column(binary), Tensor::column(ones),
                                  Tensor::column(ones));
        const int c2 = combine_node(tape2, w2, s2, fo2, fw2, std::nullopt, weights, nullptr);
        CHECK(tape2.scalar_value(c2) ==
              doctest::Approx(weights.alpha + weights.beta).epsilon(1e-6));
    }
}

TEST_CASE("combine backward scales each component by its stopped inverse magnitude") {
    // Gradient of the combination w.r.t. the prediction vector must equal
    // alpha * grad(L_b)/|L_b| + beta * grad(L_f)/|L_f| (gamma term absent),
    // with the normalizers frozen at the base point. Verified against
    // finite differences of the frozen-normalizer construction and against
    // manually scaled component gradients.
    LossWeights weights;
    Rng rng(37);
    std::vector<double> pred(10), target(10), ones(10, 1.0), binary(10);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.uniform(0.15, 0.85);
        target[i] = rng.uniform(0.0, 1.0);
        binary[i] = target[i] > 0.5 ? 1.0 : 0.0;
    }
    const Tensor t_target = Tensor::column(target);
    const Tensor t_ones = Tensor::column(ones);
    const Tensor t_binary = Tensor::column(binary);

    auto components = [&](std::span<const double> p_values, double* vb, double* vf,
                          std::span<double> gb, std::span<double> gf) {
        {
            Tape tape;
            const int p = tape.param(p_values, 10, 1, 0);
            const int b = tape.add(
                tape.add(wbce_node(tape, p, t_target, t_ones, t_ones),
                         smooth_l1_node(tape, p, t_target, t_ones, weights.smooth_l1_beta)),
                focal_node(tape, p, t_binary, t_ones, weights.focal_alpha, weights.focal_gamma));
            *vb = tape.scalar_value(b);
            if (!gb.empty()) tape.backward(b, gb);
        }
        {
            Tape tape;
            const int p = tape.param(p_values, 10, 1, 0);
            const int f = wbce_node(tape, p, t_binary, t_ones, t_ones);
            *vf = tape.scalar_value(f);
            if (!gf.empty()) tape.backward(f, gf);
        }
    };

    double vb0 = 0, vf0 = 0;
    std::vector<double> gb(10, 0.0), gf(10, 0.0);
    components(pred, &vb0, &vf0, gb, gf);

    // analytic gradient of the combined node
    std::vector<double> g_combined(10, 0.0);
    {
        Tape tape;
        const int p = tape.param(pred, 10, 1, 0);
        const int b_wbce = wbce_node(tape, p, t_target, t_ones, t_ones);
        const int b_sl1 = smooth_l1_node(tape, p, t_target, t_ones, weights.smooth_l1_beta);
        const int b_focal =
            focal_node(tape, p, t_binary, t_ones, weights.focal_alpha, weights.focal_gamma);
        const int f_wbce = wbce_node(tape, p, t_binary, t_ones, t_ones);
        const int combined =
            combine_node(tape, b_wbce, b_sl1, b_focal, f_wbce, std::nullopt, weights, nullptr);
        tape.backward(combined, g_combined);
    }

    // manually scaled component gradients
    const double eps = weights.norm_epsilon;
    for (std::size_t i = 0; i < 10; ++i) {
        const double expected =
            weights.alpha * gb[i] / (std::abs(vb0) + eps) + weights.beta * gf[i] / (std::abs(vf0) + eps);
        CHECK(g_combined[i] == doctest::Approx(expected).epsilon(1e-9));
    }

    // finite differences of the frozen-normalizer construction
    std::vector<double> probe = pred;
    auto frozen = [&](std::span<const double> p_values) {
        double vb = 0, vf = 0;
        components(p_values, &vb, &vf, {}, {});
        return weights.alpha * vb / (std::abs(vb0) + eps) +
               weights.beta * vf / (std::abs(vf0) + eps);
    };
    CHECK(grad_check(frozen, g_combined, probe, 10, 1e-5, 51) < 1e-5);
}

TEST_CASE("non-finite components abort with a diagnostic") {
    LossWeights weights;
    Tape tape;
    const int nan_node = tape.input(Tensor::scalar(std::nan("")));
    const int ok = tape.input(Tensor::scalar(0.5));
    CHECK_THROWS_AS(
        combine_node(tape, nan_node, ok, ok, ok, std::nullopt, weights, nullptr), NumericError);
}
