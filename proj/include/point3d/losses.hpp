#pragma once

#include <span>

#include "point3d/tape.hpp"
#include "point3d/targets.hpp"

namespace point3d {

struct LossWeights {
    double cp_h = 1.0, cp_s = 0.1, cp_o = 1.0;
    double kp_h = 1.0, kp_d = 1.0, kp_o = 1.0;
    double loc = 10.0, cls = 1.0;
    double focal_alpha = 2.0, focal_beta = 4.0;

    void validate() const; // all weights non-negative
};

// Penalty-reduced pixel-wise logistic regression on heatmaps. `pred` is
// post-sigmoid; it is clamped to [1e-7, 1-1e-7] before the logs. Multi-
// channel maps sum the per-channel losses (shared 1/max(N,1) divisor).
Var focal_heatmap_loss(Tape& tape, Var pred, const Tensor& gt, int n_actors, double alpha = 2.0,
                       double beta = 4.0);

// Mean over actors of the L1 error at masked pixels; mask has one channel
// and broadcasts over pred's channels.
Var masked_l1_loss(Tape& tape, Var pred, const Tensor& target, const Tensor& mask, int n_actors);

Var shape_loss(Tape& tape, Var pred_shape, const Tensor& target_shape, const Tensor& valid_mask,
               int n_actors);
Var offset_loss(Tape& tape, Var pred_offset, const Tensor& target_offset,
                const Tensor& valid_mask, int n_actors);

struct CpPredVars {
    Var heatmap, shape, offset;
};
struct KpPredVars {
    Var heatmap, distance, offset;
};

struct CpLossVars {
    Var heatmap, shape, offset, total;
};
struct KpLossVars {
    Var heatmap, distance, offset, total;
};

CpLossVars cp_loss(Tape& tape, const CpPredVars& pred, const FrameTargets& t,
                   const LossWeights& w);
KpLossVars kp_loss(Tape& tape, const KpPredVars& pred, const FrameTargets& t,
                   const LossWeights& w, int k);

// -log softmax(logits)[label]
Var cls_loss(Tape& tape, Var logits, int label);

// lambda_loc * mean over frames of (cp + kp) + lambda_cls * cls.
Var overall_loss(Tape& tape, std::span<const Var> frame_loc_losses, Var cls,
                 const LossWeights& w);

} // namespace point3d
