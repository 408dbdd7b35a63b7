#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "point3d/config.hpp"
#include "point3d/dataset.hpp"

namespace point3d {

struct TrainResult {
    Parameters params;
    std::vector<LossBreakdown> trace;
};

// Full training loop: deterministic batch sampling from train.seed, JSONL
// loss trace (one line per logged step), periodic checkpoints when
// configured. `run_dir` receives NaN dumps and checkpoints; it may be empty
// for in-memory runs.
TrainResult train_model(const Dataset& train_ds, const RunConfig& cfg,
                        std::ostream* jsonl_trace = nullptr, const std::string& run_dir = "");

// Forward every clip, decode per-frame boxes, and stamp the predicted
// clip-level class (argmax of the 3D-Head logits) on each detection.
std::vector<ClipDetections> decode_dataset(const Dataset& ds, const Parameters& params,
                                           const RunConfig& cfg);

std::vector<TubeRecord> link_dataset(const std::vector<ClipDetections>& dets,
                                     const RunConfig& cfg);

// decode + link + evaluate against the dataset's ground truth.
EvalReport evaluate_model(const Dataset& eval_ds, const Parameters& params,
                          const RunConfig& cfg);

// T x T attention matrix of one clip (identity semantics do not apply:
// throws ConfigError when the model was built without TWA).
Tensor clip_attention(const ClipData& clip, const Parameters& params, const RunConfig& cfg);

std::string loss_breakdown_jsonl(const LossBreakdown& bd);

} // namespace point3d
