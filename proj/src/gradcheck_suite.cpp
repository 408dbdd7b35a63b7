#include "point3d/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include "point3d/losses.hpp"
#include "point3d/model.hpp"
#include "point3d/rng.hpp"
#include "point3d/twa.hpp"

namespace point3d {

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

std::vector<ActorAnnotation> mini_actors(int k) {
    ActorAnnotation a;
    a.box = Box{3.0, 4.0, 11.5, 13.0};
    a.class_id = 1;
    a.actor_id = 0;
    const double fx[4] = {0, 1, 1, 0}, fy[4] = {0, 0, 1, 1};
    for (int i = 0; i < k; ++i) {
        a.knots.push_back(Point2{a.box.x1 + fx[i % 4] * a.box.width(),
                                 a.box.y1 + fy[i % 4] * a.box.height()});
    }
    return {a};
}

// Selects `count` channels starting at `from` out of a rank-3 stack, as a
// differentiable op (matmul against a constant selection matrix).
Var pick_channels(Tape& t, Var stacked, int channels, int from, int count, int gh, int gw) {
    Tensor sel({count, channels});
    for (int c = 0; c < count; ++c) sel.at(c, from + c) = 1.0;
    Var rows = t.reshape(stacked, {channels, gh * gw});
    return t.reshape(t.matmul(t.constant(sel), rows), {count, gh, gw});
}

} // namespace

GradCheckReport run_gradcheck_suite(int seeds) {
    auto t0 = std::chrono::steady_clock::now();
    GradCheckReport report;
    LossWeights weights;

    // Stride-2 targets over a 16x16 frame: 8x8 maps with one real actor,
    // so the focal g=1 branch and both masks are exercised.
    const int kKnots = 2;
    FrameTargets targets = render_frame_targets(mini_actors(kKnots), kKnots, 16, 16, 2);
    const int gh = targets.cp_heatmap.dim(1), gw = targets.cp_heatmap.dim(2);

    struct OpCheck {
        std::string name;
        double tol;
        std::function<double(uint64_t)> run;
    };
    std::vector<OpCheck> checks;

    checks.push_back({"focal_heatmap_loss (pixel-wise logistic)", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 1);
        Tensor pred = random_tensor(rng, targets.cp_heatmap.shape(), 0.05, 0.95);
        return grad_check(
            [&](Tape& t, Var v) {
                return focal_heatmap_loss(t, v, targets.cp_heatmap, targets.n_actors);
            },
            pred);
    }});

    checks.push_back({"shape_loss (masked L1)", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 2);
        Tensor pred = random_tensor(rng, targets.cp_shape.shape(), -2.0, 2.0);
        return grad_check(
            [&](Tape& t, Var v) {
                return shape_loss(t, v, targets.cp_shape, targets.center_mask, targets.n_actors);
            },
            pred);
    }});

    checks.push_back({"offset_loss (masked L1)", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 3);
        Tensor pred = random_tensor(rng, targets.cp_offset.shape(), -1.0, 1.0);
        return grad_check(
            [&](Tape& t, Var v) {
                return offset_loss(t, v, targets.cp_offset, targets.center_mask,
                                   targets.n_actors);
            },
            pred);
    }});

    checks.push_back({"cp_loss (weighted composition)", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 4);
        Tensor packed = random_tensor(rng, {5, gh, gw}, 0.05, 0.95);
        return grad_check(
            [&](Tape& t, Var v) {
                CpPredVars pred;
                pred.heatmap = pick_channels(t, v, 5, 0, 1, gh, gw);
                pred.shape = pick_channels(t, v, 5, 1, 2, gh, gw);
                pred.offset = pick_channels(t, v, 5, 3, 2, gh, gw);
                return cp_loss(t, pred, targets, weights).total;
            },
            packed);
    }});

    checks.push_back({"kp_loss (K-point composition)", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 5);
        const int channels = kKnots + 2 * kKnots + 2;
        Tensor packed = random_tensor(rng, {channels, gh, gw}, 0.05, 0.95);
        return grad_check(
            [&, channels](Tape& t, Var v) {
                KpPredVars pred;
                pred.heatmap = pick_channels(t, v, channels, 0, kKnots, gh, gw);
                pred.distance = pick_channels(t, v, channels, kKnots, 2 * kKnots, gh, gw);
                pred.offset = pick_channels(t, v, channels, 3 * kKnots, 2, gh, gw);
                return kp_loss(t, pred, targets, weights, kKnots).total;
            },
            packed);
    }});

    checks.push_back({"cls_loss (cross entropy)", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 6);
        Tensor logits = random_tensor(rng, {5}, -2.0, 2.0);
        int label = static_cast<int>(seed % 5);
        return grad_check([&](Tape& t, Var v) { return cls_loss(t, v, label); }, logits);
    }});

    checks.push_back({"twa_forward", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 7);
        Tensor f = random_tensor(rng, {3, 2, 3, 3}, -1.0, 1.0);
        Tensor probe = random_tensor(rng, f.shape(), -1.0, 1.0);
        return grad_check(
            [&](Tape& t, Var v) {
                return t.sum(t.mul(twa_forward(t, v).output, t.constant(probe)));
            },
            f);
    }});

    checks.push_back({"conv2d", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 8);
        Tensor x = random_tensor(rng, {2, 6, 6}, -1.0, 1.0);
        Tensor w = random_tensor(rng, {3, 2, 3, 3}, -1.0, 1.0);
        Tensor probe = random_tensor(rng, {3, 3, 3}, -1.0, 1.0);
        double ex = grad_check(
            [&](Tape& t, Var v) {
                return t.sum(t.mul(t.conv2d(v, t.constant(w), 2, 1), t.constant(probe)));
            },
            x);
        double ew = grad_check(
            [&](Tape& t, Var v) {
                return t.sum(t.mul(t.conv2d(t.constant(x), v, 2, 1), t.constant(probe)));
            },
            w);
        return std::max(ex, ew);
    }});

    checks.push_back({"conv3d", 1e-5, [&](uint64_t seed) {
        Rng rng(seed * 7919 + 9);
        Tensor x = random_tensor(rng, {2, 3, 4, 4}, -1.0, 1.0);
        Tensor w = random_tensor(rng, {2, 2, 3, 3, 3}, -1.0, 1.0);
        Tensor probe = random_tensor(rng, {2, 2, 2, 2}, -1.0, 1.0);
        double ex = grad_check(
            [&](Tape& t, Var v) {
                return t.sum(t.mul(t.conv3d(v, t.constant(w), 2, 1), t.constant(probe)));
            },
            x);
        double ew = grad_check(
            [&](Tape& t, Var v) {
                return t.sum(t.mul(t.conv3d(t.constant(x), v, 2, 1), t.constant(probe)));
            },
            w);
        return std::max(ex, ew);
    }});

    for (OpCheck& check : checks) {
        double worst = 0.0;
        for (int seed = 0; seed < seeds; ++seed) {
            worst = std::max(worst, check.run(static_cast<uint64_t>(seed)));
        }
        report.entries.push_back(GradCheckEntry{check.name, worst, check.tol, worst < check.tol});
    }

    // Full miniature model: overall loss differentiated with respect to
    // every parameter tensor in turn.
    {
        ModelConfig cfg;
        cfg.input_size = 16;
        cfg.stride = 4;
        cfg.channels = 4;
        cfg.clip_len = 2;
        cfg.num_knots = 2;
        cfg.num_classes = 2;
        double worst = 0.0;
        for (int seed = 0; seed < seeds; ++seed) {
            cfg.seed = static_cast<uint64_t>(seed);
            Parameters params = init_parameters(cfg);
            Rng rng(static_cast<uint64_t>(seed) * 104729 + 11);
            Tensor clip = random_tensor(rng, {cfg.clip_len, 3, 16, 16}, 0.0, 1.0);
            auto actors = mini_actors(cfg.num_knots);
            FrameTargets mini_targets = render_frame_targets(actors, cfg.num_knots,
                                                             cfg.input_size, cfg.input_size,
                                                             cfg.stride);
            const int label = 1;

            for (size_t pi = 0; pi < params.items.size(); ++pi) {
                auto f = [&](Tape& t, Var v) {
                    ParamVars pv;
                    for (size_t j = 0; j < params.items.size(); ++j) {
                        pv.vars.push_back(j == pi ? v : t.constant(params.items[j].value));
                    }
                    ClipForward fwd = forward_clip(t, clip, pv, params, cfg);
                    std::vector<Var> loc;
                    for (int ft = 0; ft < cfg.clip_len; ++ft) {
                        CpLossVars cl = cp_loss(t, fwd.cp[static_cast<size_t>(ft)], mini_targets,
                                                weights);
                        KpLossVars kl = kp_loss(t, fwd.kp[static_cast<size_t>(ft)], mini_targets,
                                                weights, cfg.num_knots);
                        loc.push_back(t.add(cl.total, kl.total));
                    }
                    return overall_loss(t, loc, cls_loss(t, fwd.logits, label), weights);
                };
                // Smaller step: a deep ReLU stack puts kinks near almost any
                // parameter, and narrow probes straddle far fewer of them.
                worst = std::max(worst, grad_check(f, params.items[pi].value, 1e-5));
            }
        }
        report.entries.push_back(
            GradCheckEntry{"full miniature model (overall loss)", worst, 1e-4, worst < 1e-4});
    }

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace point3d
