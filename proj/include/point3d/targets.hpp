#pragma once

#include <span>
#include <string>
#include <vector>

#include "point3d/tensor.hpp"

namespace point3d {

struct Point2 {
    double x = 0.0, y = 0.0;
};

struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    double area() const { return width() * height(); }
};

// Ground truth for one actor in one frame, in input-pixel units.
struct ActorAnnotation {
    Box box;
    std::vector<Point2> knots;
    int class_id = 0;
    int actor_id = 0;
};

// Dense per-frame training targets on the stride-R grid, plus masks marking
// the pixels that contribute to the regression losses.
struct FrameTargets {
    Tensor cp_heatmap;  // 1 x H' x W'
    Tensor cp_shape;    // 2 x H' x W', (w, h) in input pixels at center pixels
    Tensor cp_offset;   // 2 x H' x W', sub-stride remainder at center pixels
    Tensor kp_heatmap;  // K x H' x W'
    Tensor kp_distance; // 2K x H' x W', (knot - center)/R at center pixels
    Tensor kp_offset;   // 2 x H' x W', sub-stride remainder at knot pixels
    Tensor center_mask; // 1 x H' x W'
    Tensor knot_mask;   // 1 x H' x W'
    int n_actors = 0;
    std::vector<std::string> warnings;
};

// sigma = max(1, min(w, h) / 6), sizes in feature-map units.
double gaussian_sigma(double box_w, double box_h);

FrameTargets render_cp_targets(std::span<const ActorAnnotation> actors, int h, int w, int r);
FrameTargets render_kp_targets(std::span<const ActorAnnotation> actors, int k, int h, int w,
                               int r);
// Both CP and KP fields in one pass.
FrameTargets render_frame_targets(std::span<const ActorAnnotation> actors, int k, int h, int w,
                                  int r);

} // namespace point3d
