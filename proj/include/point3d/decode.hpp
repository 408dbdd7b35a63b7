#pragma once

#include <vector>

#include "point3d/targets.hpp"
#include "point3d/tensor.hpp"

namespace point3d {

// Per-frame Point Head output maps as plain tensors.
struct CPOutputs {
    Tensor heatmap; // 1 x H' x W', post-sigmoid
    Tensor shape;   // 2 x H' x W'
    Tensor offset;  // 2 x H' x W'
};

struct KPOutputs {
    Tensor heatmap;  // K x H' x W', post-sigmoid
    Tensor distance; // 2K x H' x W'
    Tensor offset;   // 2 x H' x W'
};

struct Detection {
    int frame = 0;
    Box box;
    double score = 0.0;
    int class_id = -1;
    std::vector<Point2> knots;
    int peak_x = 0, peak_y = 0; // feature-grid cell the detection came from
};

struct DecodeConfig {
    double threshold = 0.3;
    int max_det = 10;
    bool use_knots = true;
};

// Peak-mask + threshold + top-k decoding of center-point maps into boxes.
// Output is sorted by score descending, ties broken by (y, x) of the peak.
std::vector<Detection> decode_boxes(const CPOutputs& cp, const DecodeConfig& cfg, int r);

// Recover K knot points from the KP maps and grow the box to their hull.
// Each knot starts from center + R*distance; when a KP-heatmap peak above
// cfg.threshold lies within radius 2 of that estimate, the knot snaps to
// the peak cell plus its sub-stride offset, otherwise the distance-only
// estimate stands.
Detection refine_with_knots(const Detection& det, const KPOutputs& kp, const DecodeConfig& cfg,
                            int r);

// Deterministic ordering used for all tie-breaks involving boxes.
bool box_less(const Box& a, const Box& b);

} // namespace point3d
