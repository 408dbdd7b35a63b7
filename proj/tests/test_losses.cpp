#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "point3d/error.hpp"
#include "point3d/grad_check.hpp"
#include "point3d/losses.hpp"
#include "point3d/targets.hpp"

using namespace point3d;

namespace {

double eval_focal(const Tensor& pred, const Tensor& gt, int n, double alpha = 2.0,
                  double beta = 4.0) {
    Tape tape;
    return tape.value(focal_heatmap_loss(tape, tape.constant(pred), gt, n, alpha, beta))[0];
}

double eval_masked_l1(const Tensor& pred, const Tensor& target, const Tensor& mask, int n) {
    Tape tape;
    return tape.value(masked_l1_loss(tape, tape.constant(pred), target, mask, n))[0];
}

} // namespace

TEST_SUITE("losses") {

TEST_CASE("focal: near-perfect prediction is near zero") {
    Tensor gt({1, 2, 2}, {1, 0, 0, 0});
    Tensor pred({1, 2, 2}, {1.0 - 1e-7, 1e-7, 1e-7, 1e-7});
    CHECK(eval_focal(pred, gt, 1) < 1e-5);
}

TEST_CASE("focal: 2x2 hand case") {
    Tensor gt({1, 2, 2}, {1, 0, 0, 0});
    Tensor pred({1, 2, 2}, {0.9, 0.1, 0.1, 0.1});
    double loss = eval_focal(pred, gt, 1);
    CHECK(loss == doctest::Approx(0.0042145).epsilon(0).scale(1).epsilon(1e-6));
    CHECK(std::fabs(loss - 0.0042145) < 1e-6);
    CHECK(std::fabs(loss - oracle::focal_naive(pred, gt, 1, 2, 4)) < 1e-12);
}

TEST_CASE("focal: empty frame with tiny background predictions is near zero") {
    Tensor gt({1, 4, 4});
    Tensor pred = Tensor::full({1, 4, 4}, 1e-7);
    CHECK(eval_focal(pred, gt, 0) < 1e-10);
}

TEST_CASE("focal matches per-pixel oracle to 1e-12 on 100 random 8x8 instances") {
    Rng rng(123);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor gt({1, 8, 8});
        int peaks = rng.uniform_int(0, 3);
        for (int p = 0; p < peaks; ++p) {
            int y = rng.uniform_int(0, 7), x = rng.uniform_int(0, 7);
            double sigma = rng.uniform(0.8, 2.5);
            for (int yy = 0; yy < 8; ++yy) {
                for (int xx = 0; xx < 8; ++xx) {
                    double d2 = (xx - x) * (xx - x) + (yy - y) * (yy - y);
                    gt.at(0, yy, xx) =
                        std::max(gt.at(0, yy, xx), std::exp(-d2 / (2 * sigma * sigma)));
                }
            }
            gt.at(0, y, x) = 1.0;
        }
        Tensor pred = oracle::random_tensor(rng, {1, 8, 8}, 0.001, 0.999);
        double got = eval_focal(pred, gt, peaks);
        double want = oracle::focal_naive(pred, gt, peaks, 2, 4);
        CHECK(std::fabs(got - want) < 1e-12);
    }
}

TEST_CASE("focal is non-increasing as a prediction moves toward its target") {
    Tensor gt({1, 2, 2}, {1, 0, 0, 0.3});
    Tensor pred({1, 2, 2}, {0.4, 0.3, 0.2, 0.5});
    double prev = eval_focal(pred, gt, 1);
    for (int step = 1; step <= 8; ++step) {
        Tensor p2 = pred;
        p2[0] = 0.4 + 0.07 * step; // toward g=1
        double cur = eval_focal(p2, gt, 1);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
    prev = eval_focal(pred, gt, 1);
    for (int step = 1; step <= 8; ++step) {
        Tensor p2 = pred;
        p2[1] = 0.3 - 0.035 * step; // toward g=0
        double cur = eval_focal(p2, gt, 1);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("shape loss hand cases") {
    Tensor mask({1, 2, 2}, {1, 0, 0, 0});
    Tensor target({2, 2, 2}, {12, 0, 0, 0, 18, 0, 0, 0});
    Tensor pred({2, 2, 2}, {10, 5, 5, 5, 20, 5, 5, 5});
    CHECK(eval_masked_l1(pred, target, mask, 1) == doctest::Approx(4.0));
    CHECK(eval_masked_l1(target, target, mask, 1) == 0.0);

    // Two actors with per-actor L1 of 1 and 3 -> mean 2.
    Tensor mask2({1, 2, 2}, {1, 1, 0, 0});
    Tensor target2({2, 2, 2}, {10, 10, 0, 0, 10, 10, 0, 0});
    Tensor pred2({2, 2, 2}, {10.5, 11, 0, 0, 10.5, 12, 0, 0});
    CHECK(eval_masked_l1(pred2, target2, mask2, 2) == doctest::Approx(2.0));
}

TEST_CASE("offset loss hand case and bound") {
    Tensor mask({1, 2, 2}, {1, 0, 0, 0});
    Tensor target({2, 2, 2}, {0.25, 0, 0, 0, 0.5, 0, 0, 0});
    Tensor pred({2, 2, 2}, {0.1, 0, 0, 0, 0.2, 0, 0, 0});
    CHECK(eval_masked_l1(pred, target, mask, 1) == doctest::Approx(0.45));
    // Any prediction clamped to [0, 1) stays under 2 per actor.
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor p = oracle::random_tensor(rng, {2, 2, 2}, 0.0, 0.999);
        CHECK(eval_masked_l1(p, target, mask, 1) < 2.0);
    }
}

TEST_CASE("masked L1 rejects spatial mismatch") {
    Tape tape;
    Var pred = tape.constant(Tensor({2, 4, 4}));
    CHECK_THROWS_AS(masked_l1_loss(tape, pred, Tensor({2, 4, 4}), Tensor({1, 2, 2}), 1),
                    DimensionError);
}

TEST_CASE("cp_loss weighted composition") {
    // components (1, 2, 3) with weights (1, 0.1, 1) -> 4.2
    LossWeights w;
    CHECK(w.cp_h * 1.0 + w.cp_s * 2.0 + w.cp_o * 3.0 == doctest::Approx(4.2));

    // Random instance matches independent recomputation from parts.
    Rng rng(31);
    ActorAnnotation a;
    a.box = Box{6, 4, 22, 20};
    for (int i = 0; i < 4; ++i) a.knots.push_back(Point2{a.box.x1 + i, a.box.y1 + i});
    FrameTargets t = render_frame_targets(std::vector{a}, 4, 32, 32, 4);
    Tensor heat = oracle::random_tensor(rng, {1, 8, 8}, 0.05, 0.95);
    Tensor shape = oracle::random_tensor(rng, {2, 8, 8}, 0, 20);
    Tensor offset = oracle::random_tensor(rng, {2, 8, 8}, 0, 1);
    Tape tape;
    CpPredVars pred{tape.constant(heat), tape.constant(shape), tape.constant(offset)};
    CpLossVars out = cp_loss(tape, pred, t, w);
    double expect = w.cp_h * tape.value(out.heatmap)[0] + w.cp_s * tape.value(out.shape)[0] +
                    w.cp_o * tape.value(out.offset)[0];
    CHECK(tape.value(out.total)[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(tape.value(out.heatmap)[0] ==
          doctest::Approx(oracle::focal_naive(heat, t.cp_heatmap, 1, 2, 4)).epsilon(1e-12));
}

TEST_CASE("kp_loss: heatmap term sums over K channels") {
    Rng rng(37);
    ActorAnnotation a;
    a.box = Box{6, 4, 22, 20};
    const int k = 3;
    for (int i = 0; i < k; ++i) a.knots.push_back(Point2{a.box.x1 + 2.0 * i, a.box.y1 + i});
    FrameTargets t = render_frame_targets(std::vector{a}, k, 32, 32, 4);
    Tensor heat = oracle::random_tensor(rng, {k, 8, 8}, 0.05, 0.95);
    Tensor dist = oracle::random_tensor(rng, {2 * k, 8, 8}, -2, 2);
    Tensor off = oracle::random_tensor(rng, {2, 8, 8}, 0, 1);
    Tape tape;
    KpPredVars pred{tape.constant(heat), tape.constant(dist), tape.constant(off)};
    LossWeights w;
    KpLossVars out = kp_loss(tape, pred, t, w, k);

    double per_channel_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        Tensor hc({1, 8, 8}), gc({1, 8, 8});
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                hc.at(0, y, x) = heat.at(c, y, x);
                gc.at(0, y, x) = t.kp_heatmap.at(c, y, x);
            }
        }
        per_channel_sum += oracle::focal_naive(hc, gc, 1, 2, 4);
    }
    CHECK(tape.value(out.heatmap)[0] == doctest::Approx(per_channel_sum).epsilon(1e-12));
    CHECK(tape.value(out.total)[0] > 0.0);

    // Perfect prediction drives the loss to ~0.
    Tape tape2;
    Tensor perfect_heat = t.kp_heatmap;
    for (int64_t i = 0; i < perfect_heat.numel(); ++i) {
        perfect_heat[i] = perfect_heat[i] == 1.0 ? 1.0 - 1e-7 : 1e-7;
    }
    // Background pixels of a rendered map carry Gaussian tails, so only the
    // masked regression terms vanish exactly; check those.
    KpPredVars exact{tape2.constant(t.kp_heatmap), tape2.constant(t.kp_distance),
                     tape2.constant(t.kp_offset)};
    KpLossVars out2 = kp_loss(tape2, exact, t, w, k);
    CHECK(tape2.value(out2.distance)[0] == 0.0);
    CHECK(tape2.value(out2.offset)[0] == 0.0);
}

TEST_CASE("cls loss: confident, uniform, hand case") {
    Tape tape;
    Tensor confident({3}, {20, -20, -20});
    CHECK(tape.value(cls_loss(tape, tape.constant(confident), 0))[0] < 1e-8);
    Tensor uniform({4}, {0.7, 0.7, 0.7, 0.7});
    CHECK(tape.value(cls_loss(tape, tape.constant(uniform), 2))[0] ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    Tensor hand({3}, {1, 2, 3});
    CHECK(tape.value(cls_loss(tape, tape.constant(hand), 0))[0] ==
          doctest::Approx(2.4076059644443806).epsilon(1e-10));
}

TEST_CASE("overall loss: weighted sum and lambda_cls decoupling") {
    LossWeights w; // loc 10, cls 1
    Tape tape;
    std::vector<Var> frames{tape.constant(Tensor::scalar(0.5))};
    Var cls = tape.input(Tensor::scalar(2.0));
    Var total = overall_loss(tape, frames, cls, w);
    CHECK(tape.value(total)[0] == doctest::Approx(7.0));

    // lambda_cls = 0 kills the classification gradient exactly.
    Tape tape2;
    Var cls2 = tape2.input(Tensor::scalar(2.0));
    LossWeights w2;
    w2.cls = 0.0;
    std::vector<Var> frames2{tape2.constant(Tensor::scalar(0.5))};
    tape2.backward(overall_loss(tape2, frames2, cls2, w2));
    CHECK(tape2.grad(cls2)[0] == 0.0);
}

TEST_CASE("every loss >= 0 and zero exactly at exact predictions (L1/CE)") {
    Rng rng(71);
    ActorAnnotation a;
    a.box = Box{6, 4, 22, 20};
    for (int i = 0; i < 4; ++i) a.knots.push_back(Point2{a.box.x1 + i, a.box.y1 + 2.0 * i});
    FrameTargets t = render_frame_targets(std::vector{a}, 4, 32, 32, 4);
    CHECK(eval_masked_l1(t.cp_shape, t.cp_shape, t.center_mask, 1) == 0.0);
    CHECK(eval_masked_l1(t.cp_offset, t.cp_offset, t.center_mask, 1) == 0.0);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor pred = oracle::random_tensor(rng, {2, 8, 8}, -3, 3);
        CHECK(eval_masked_l1(pred, t.cp_shape, t.center_mask, 1) >= 0.0);
        Tensor heat = oracle::random_tensor(rng, {1, 8, 8}, 0.01, 0.99);
        CHECK(eval_focal(heat, t.cp_heatmap, 1) >= 0.0);
    }
}

TEST_CASE("scaling lambda_loc scales point-head gradients exactly when lambda_cls = 0") {
    // Loss = lambda_loc * mean(loc); gradient through the loc path must be
    // linear in lambda_loc.
    ActorAnnotation a;
    a.box = Box{6, 4, 22, 20};
    for (int i = 0; i < 4; ++i) a.knots.push_back(Point2{a.box.x1 + i, a.box.y1 + i});
    FrameTargets t = render_frame_targets(std::vector{a}, 4, 32, 32, 4);
    Rng rng(9);
    Tensor pred = oracle::random_tensor(rng, {2, 8, 8}, 0, 10);

    auto grad_with = [&](double lambda_loc) {
        Tape tape;
        Var p = tape.input(pred);
        LossWeights w;
        w.loc = lambda_loc;
        w.cls = 0.0;
        std::vector<Var> frames{shape_loss(tape, p, t.cp_shape, t.center_mask, 1)};
        Var cls = tape.constant(Tensor::scalar(3.0));
        tape.backward(overall_loss(tape, frames, cls, w));
        return tape.grad(p);
    };
    Tensor g1 = grad_with(1.0);
    Tensor g7 = grad_with(7.0);
    for (int64_t i = 0; i < g1.numel(); ++i) {
        CHECK(g7[i] == doctest::Approx(7.0 * g1[i]).epsilon(1e-12));
    }
}

TEST_CASE("loss grad checks over 20 seeds with kink resampling") {
    ActorAnnotation a;
    a.box = Box{6, 4, 22, 20};
    for (int i = 0; i < 2; ++i) a.knots.push_back(Point2{a.box.x1 + i, a.box.y1 + i});
    FrameTargets t = render_frame_targets(std::vector{a}, 2, 32, 32, 4);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor heat = oracle::random_tensor(rng, {1, 8, 8}, 0.05, 0.95);
        CHECK(grad_check(
                  [&](Tape& tp, Var v) { return focal_heatmap_loss(tp, v, t.cp_heatmap, 1); },
                  heat) < 1e-5);
        Tensor shp = oracle::random_tensor(rng, {2, 8, 8}, -2, 2);
        CHECK(grad_check(
                  [&](Tape& tp, Var v) {
                      return shape_loss(tp, v, t.cp_shape, t.center_mask, 1);
                  },
                  shp) < 1e-5);
        Tensor logits = oracle::random_tensor(rng, {6}, -3, 3);
        CHECK(grad_check(
                  [&](Tape& tp, Var v) { return cls_loss(tp, v, static_cast<int>(seed % 6)); },
                  logits) < 1e-5);
    }
}

} // TEST_SUITE
