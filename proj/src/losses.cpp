#include "point3d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "point3d/error.hpp"

namespace point3d {

namespace {

constexpr double kProbEps = 1e-7;

double actor_divisor(int n_actors) {
    if (n_actors < 0) throw ContractError("loss: negative actor count");
    return 1.0 / std::max(n_actors, 1);
}

// Replicate a 1 x H x W mask across `channels` channels.
Tensor expand_mask(const Tensor& mask, int channels) {
    if (mask.rank() != 3 || mask.dim(0) != 1) {
        throw DimensionError("loss mask must be 1-channel rank-3, got " + mask.shape_str());
    }
    Tensor out({channels, mask.dim(1), mask.dim(2)});
    const int64_t plane = mask.numel();
    for (int c = 0; c < channels; ++c) {
        std::copy(mask.data(), mask.data() + plane, out.data() + c * plane);
    }
    return out;
}

void check_spatial_match(const Tensor& pred, const Tensor& ref, const char* what) {
    if (pred.rank() != 3 || ref.rank() != 3 || pred.dim(1) != ref.dim(1) ||
        pred.dim(2) != ref.dim(2)) {
        throw DimensionError(std::string(what) + ": spatial shape mismatch " + pred.shape_str() +
                             " vs " + ref.shape_str());
    }
}

} // namespace

void LossWeights::validate() const {
    for (double v : {cp_h, cp_s, cp_o, kp_h, kp_d, kp_o, loc, cls, focal_alpha, focal_beta}) {
        if (v < 0.0) throw ConfigError("loss weights must be non-negative");
    }
}

Var focal_heatmap_loss(Tape& tape, Var pred, const Tensor& gt, int n_actors, double alpha,
                       double beta) {
    const Tensor& pv = tape.value(pred);
    require_same_shape(pv, gt, "focal_heatmap_loss");

    // Split ground truth into the g = 1 peak set and the penalty-reduced rest.
    Tensor pos(gt.shape()), neg_weight(gt.shape());
    for (int64_t i = 0; i < gt.numel(); ++i) {
        bool peak = gt[i] == 1.0;
        pos[i] = peak ? 1.0 : 0.0;
        neg_weight[i] = peak ? 0.0 : std::pow(1.0 - gt[i], beta);
    }
    Var pos_c = tape.constant(std::move(pos));
    Var negw_c = tape.constant(std::move(neg_weight));

    Var p = tape.clamp(pred, kProbEps, 1.0 - kProbEps);
    Var one_minus_p = tape.rsub_scalar(1.0, p);
    Var pos_term = tape.mul(pos_c, tape.mul(tape.pow_scalar(one_minus_p, alpha), tape.log(p)));
    Var neg_term =
        tape.mul(negw_c, tape.mul(tape.pow_scalar(p, alpha), tape.log(one_minus_p)));
    Var total = tape.sum(tape.add(pos_term, neg_term));
    return tape.scale(total, -actor_divisor(n_actors));
}

Var masked_l1_loss(Tape& tape, Var pred, const Tensor& target, const Tensor& mask,
                   int n_actors) {
    const Tensor& pv = tape.value(pred);
    require_same_shape(pv, target, "masked_l1_loss");
    check_spatial_match(pv, mask, "masked_l1_loss");
    Var mask_c = tape.constant(expand_mask(mask, pv.dim(0)));
    Var diff = tape.sub(pred, tape.constant(target));
    Var masked = tape.mul(tape.abs(diff), mask_c);
    return tape.scale(tape.sum(masked), actor_divisor(n_actors));
}

Var shape_loss(Tape& tape, Var pred_shape, const Tensor& target_shape, const Tensor& valid_mask,
               int n_actors) {
    return masked_l1_loss(tape, pred_shape, target_shape, valid_mask, n_actors);
}

Var offset_loss(Tape& tape, Var pred_offset, const Tensor& target_offset,
                const Tensor& valid_mask, int n_actors) {
    return masked_l1_loss(tape, pred_offset, target_offset, valid_mask, n_actors);
}

CpLossVars cp_loss(Tape& tape, const CpPredVars& pred, const FrameTargets& t,
                   const LossWeights& w) {
    CpLossVars out;
    out.heatmap = focal_heatmap_loss(tape, pred.heatmap, t.cp_heatmap, t.n_actors, w.focal_alpha,
                                     w.focal_beta);
    out.shape = shape_loss(tape, pred.shape, t.cp_shape, t.center_mask, t.n_actors);
    out.offset = offset_loss(tape, pred.offset, t.cp_offset, t.center_mask, t.n_actors);
    out.total = tape.add(tape.add(tape.scale(out.heatmap, w.cp_h), tape.scale(out.shape, w.cp_s)),
                         tape.scale(out.offset, w.cp_o));
    return out;
}

KpLossVars kp_loss(Tape& tape, const KpPredVars& pred, const FrameTargets& t,
                   const LossWeights& w, int k) {
    const Tensor& hv = tape.value(pred.heatmap);
    if (hv.dim(0) != k || t.kp_heatmap.dim(0) != k) {
        throw DimensionError("kp_loss: heatmap channels " + hv.shape_str() + " do not match K=" +
                             std::to_string(k));
    }
    KpLossVars out;
    // One focal pass over the K-channel stack equals the sum of K per-channel
    // losses: the 1/max(N,1) divisor is shared by every channel.
    out.heatmap = focal_heatmap_loss(tape, pred.heatmap, t.kp_heatmap, t.n_actors, w.focal_alpha,
                                     w.focal_beta);
    out.distance = masked_l1_loss(tape, pred.distance, t.kp_distance, t.center_mask, t.n_actors);
    out.offset = masked_l1_loss(tape, pred.offset, t.kp_offset, t.knot_mask, t.n_actors);
    out.total =
        tape.add(tape.add(tape.scale(out.heatmap, w.kp_h), tape.scale(out.distance, w.kp_d)),
                 tape.scale(out.offset, w.kp_o));
    return out;
}

Var cls_loss(Tape& tape, Var logits, int label) { return tape.cross_entropy(logits, label); }

Var overall_loss(Tape& tape, std::span<const Var> frame_loc_losses, Var cls,
                 const LossWeights& w) {
    if (frame_loc_losses.empty()) {
        throw ContractError("overall_loss: need at least one frame");
    }
    Var acc = frame_loc_losses[0];
    for (size_t i = 1; i < frame_loc_losses.size(); ++i) {
        acc = tape.add(acc, frame_loc_losses[i]);
    }
    Var loc_mean = tape.scale(acc, 1.0 / static_cast<double>(frame_loc_losses.size()));
    return tape.add(tape.scale(loc_mean, w.loc), tape.scale(cls, w.cls));
}

} // namespace point3d
