#include "point3d/decode.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "point3d/error.hpp"
#include "point3d/kernels.hpp"

namespace point3d {

bool box_less(const Box& a, const Box& b) {
    return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
}

std::vector<Detection> decode_boxes(const CPOutputs& cp, const DecodeConfig& cfg, int r) {
    if (cp.heatmap.rank() != 3 || cp.heatmap.dim(0) != 1) {
        throw DimensionError("decode_boxes: heatmap must be 1 x H x W, got " +
                             cp.heatmap.shape_str());
    }
    if (cp.shape.dim(1) != cp.heatmap.dim(1) || cp.shape.dim(2) != cp.heatmap.dim(2) ||
        cp.offset.dim(1) != cp.heatmap.dim(1) || cp.offset.dim(2) != cp.heatmap.dim(2)) {
        throw DimensionError("decode_boxes: maps disagree on spatial shape");
    }
    const int gh = cp.heatmap.dim(1), gw = cp.heatmap.dim(2);
    const double frame_w = static_cast<double>(gw) * r;
    const double frame_h = static_cast<double>(gh) * r;

    Tensor peaks = kernels::local_maxima(cp.heatmap);
    std::vector<Detection> dets;
    for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
            double v = cp.heatmap.at(0, y, x);
            if (peaks.at(0, y, x) == 0.0 || v < cfg.threshold) continue;
            Detection d;
            d.score = v;
            d.peak_x = x;
            d.peak_y = y;
            double cx = (x + cp.offset.at(0, y, x)) * r;
            double cy = (y + cp.offset.at(1, y, x)) * r;
            double w = cp.shape.at(0, y, x);
            double h = cp.shape.at(1, y, x);
            d.box.x1 = std::clamp(cx - 0.5 * w, 0.0, frame_w);
            d.box.x2 = std::clamp(cx + 0.5 * w, 0.0, frame_w);
            d.box.y1 = std::clamp(cy - 0.5 * h, 0.0, frame_h);
            d.box.y2 = std::clamp(cy + 0.5 * h, 0.0, frame_h);
            dets.push_back(d);
        }
    }
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::tie(a.peak_y, a.peak_x) < std::tie(b.peak_y, b.peak_x);
    });
    if (static_cast<int>(dets.size()) > cfg.max_det) {
        dets.resize(static_cast<size_t>(cfg.max_det));
    }
    return dets;
}

Detection refine_with_knots(const Detection& det, const KPOutputs& kp, const DecodeConfig& cfg,
                            int r) {
    const int k = kp.heatmap.dim(0);
    const int gh = kp.heatmap.dim(1), gw = kp.heatmap.dim(2);
    if (kp.distance.dim(0) != 2 * k) {
        throw DimensionError("refine_with_knots: distance map " + kp.distance.shape_str() +
                             " does not match K=" + std::to_string(k));
    }
    Tensor peaks = kernels::local_maxima(kp.heatmap);

    Detection out = det;
    out.knots.clear();
    const double cx = det.box.cx(), cy = det.box.cy();
    const int px = std::clamp(static_cast<int>(std::floor(cx / r)), 0, gw - 1);
    const int py = std::clamp(static_cast<int>(std::floor(cy / r)), 0, gh - 1);

    for (int j = 0; j < k; ++j) {
        double bx = cx / r + kp.distance.at(2 * j, py, px);
        double by = cy / r + kp.distance.at(2 * j + 1, py, px);

        // Nearest confident peak within radius 2 of the distance estimate.
        int best_x = -1, best_y = -1;
        double best_d2 = 1e30;
        int lo_x = std::max(0, static_cast<int>(std::floor(bx)) - 2);
        int hi_x = std::min(gw - 1, static_cast<int>(std::ceil(bx)) + 2);
        int lo_y = std::max(0, static_cast<int>(std::floor(by)) - 2);
        int hi_y = std::min(gh - 1, static_cast<int>(std::ceil(by)) + 2);
        for (int y = lo_y; y <= hi_y; ++y) {
            for (int x = lo_x; x <= hi_x; ++x) {
                if (peaks.at(j, y, x) == 0.0 || kp.heatmap.at(j, y, x) < cfg.threshold) continue;
                if (std::max(std::fabs(x - bx), std::fabs(y - by)) > 2.0) continue;
                double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                if (d2 < best_d2 || (d2 == best_d2 && std::tie(y, x) < std::tie(best_y, best_x))) {
                    best_d2 = d2;
                    best_x = x;
                    best_y = y;
                }
            }
        }

        Point2 knot;
        if (best_x >= 0) {
            knot.x = (best_x + kp.offset.at(0, best_y, best_x)) * r;
            knot.y = (best_y + kp.offset.at(1, best_y, best_x)) * r;
        } else {
            knot.x = bx * r;
            knot.y = by * r;
        }
        out.knots.push_back(knot);
        out.box.x1 = std::min(out.box.x1, knot.x);
        out.box.x2 = std::max(out.box.x2, knot.x);
        out.box.y1 = std::min(out.box.y1, knot.y);
        out.box.y2 = std::max(out.box.y2, knot.y);
    }
    return out;
}

} // namespace point3d
