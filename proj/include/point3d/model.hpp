#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "point3d/decode.hpp"
#include "point3d/losses.hpp"
#include "point3d/tape.hpp"
#include "point3d/targets.hpp"

namespace point3d {

struct ModelConfig {
    int input_size = 64; // H = W
    int stride = 4;      // R
    int channels = 32;   // C, feature channels after the extractor
    int clip_len = 8;    // T
    int num_knots = 4;   // K
    int num_classes = 4;
    uint64_t seed = 0;
    bool use_twa = true;
    bool twa_use_raw_gram = false;
    // 3D Head input selection; at least one must be set.
    bool head3d_features = true;
    bool head3d_raw_clip = false;
    bool head3d_heatmaps = false;

    int grid() const { return input_size / stride; }
    void validate() const;
};

// extractor + Point Head train under Adam, the 3D Head under SGD.
enum class OptimGroup { point_head, head3d };

struct Param {
    std::string name;
    Tensor value;
    OptimGroup group = OptimGroup::point_head;
};

struct Parameters {
    std::vector<Param> items;

    const Param& find(const std::string& name) const;
    Param& find(const std::string& name);
};

// Deterministic uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) initialization
// (ReLU gain); heatmap-branch output biases start at -2.19 (prior
// probability ~0.1).
Parameters init_parameters(const ModelConfig& cfg);

// Parameter vars registered on a tape, aligned with Parameters::items.
struct ParamVars {
    std::vector<Var> vars;
};
ParamVars declare_params(Tape& tape, const Parameters& params);

struct ClipForward {
    std::vector<CpPredVars> cp; // per frame
    std::vector<KpPredVars> kp;
    Var features;  // T x C x H' x W'
    Var twa_out;   // features when TWA disabled
    Var attention; // invalid Var when TWA disabled
    Var logits;    // num_classes
};

ClipForward forward_clip(Tape& tape, const Tensor& clip, const ParamVars& pv,
                         const Parameters& params, const ModelConfig& cfg);

// Point Head output maps of one frame as plain tensors.
CPOutputs cp_outputs(const Tape& tape, const ClipForward& fwd, int frame);
KPOutputs kp_outputs(const Tape& tape, const ClipForward& fwd, int frame);

struct AdamState {
    std::vector<Tensor> m, v;        // Adam moments (point-head group)
    std::vector<Tensor> sgd_velocity; // momentum buffer (3D-Head group)
    int64_t step = 0;
};

struct OptimizerConfig {
    double adam_lr = 5e-4;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double sgd_lr = 1e-3;
    double sgd_momentum = 0.9;
};

struct TrainItem {
    const Tensor* clip = nullptr;
    const std::vector<std::vector<ActorAnnotation>>* frames = nullptr;
    int label = 0;
};

struct LossBreakdown {
    int step = 0;
    double cp_h = 0, cp_s = 0, cp_o = 0, kp = 0, cls = 0, overall = 0;
};

// One optimization step over a batch: forward, overall loss, backward,
// Adam on the point-head group and SGD on the 3D-Head group. Throws
// NumericError on a non-finite loss after dumping the offending tensors
// to nan_dump_dir (when given).
LossBreakdown train_step(std::span<const TrainItem> batch, Parameters& params, AdamState& opt,
                         const ModelConfig& cfg, const LossWeights& weights,
                         const OptimizerConfig& opt_cfg = {},
                         const std::string& nan_dump_dir = "");

// Checkpoints: one PTK1 file per parameter plus manifest.json carrying
// names, shapes, optimizer-group tags, the step counter, and the config.
void save_checkpoint(const std::string& dir, const Parameters& params, const ModelConfig& cfg,
                     int64_t step);
struct Checkpoint {
    Parameters params;
    ModelConfig config;
    int64_t step = 0;
};
Checkpoint load_checkpoint(const std::string& dir);

} // namespace point3d
