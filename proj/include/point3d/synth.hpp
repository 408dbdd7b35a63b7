#pragma once

#include <cstdint>
#include <vector>

#include "point3d/targets.hpp"
#include "point3d/tensor.hpp"

namespace point3d {

// Deterministic synthetic video: filled rectangles whose class is defined
// purely by motion pattern, so classification requires temporal context.
//   0 horizontal glide   1 vertical glide   2 diagonal glide
//   3 oscillation        4 grow/shrink      5 circular
struct SynthConfig {
    int num_clips = 200;
    int clip_len = 8;    // T
    int frame_size = 64; // H = W
    int num_classes = 4; // <= 6
    int num_knots = 4;   // K; 4 = box corners
    int actors_min = 1, actors_max = 2;
    double noise_std = 0.02;
    uint64_t seed = 0;
    bool trimmed = true; // untrimmed pads both ends with action-free frames

    void validate() const;
};

struct ClipData {
    int id = 0;
    Tensor video; // T x 3 x H x W in [0, 1]
    std::vector<std::vector<ActorAnnotation>> frames;
    int label = 0;
    int action_begin = 0, action_end = 0; // inclusive labeled extent
};

struct Dataset {
    SynthConfig config;
    std::vector<ClipData> clips;
};

Dataset generate_dataset(const SynthConfig& cfg);

// Velocity-statistics feature of one actor track: (mean dcx, mean dcy,
// mean |dcx|, mean |dcy|, mean dw, mean |dw|) over the labeled extent.
// Classes are separable under nearest-centroid on this feature.
std::vector<double> motion_feature(const ClipData& clip, int actor_id = 0);

} // namespace point3d
