#include "point3d/targets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "point3d/error.hpp"

namespace point3d {

namespace {

void check_grid(int h, int w, int r) {
    if (h <= 0 || w <= 0 || r <= 0 || h % r != 0 || w % r != 0) {
        std::ostringstream os;
        os << "render targets: stride " << r << " must divide frame " << h << "x" << w;
        throw ContractError(os.str());
    }
}

// Max-combine a Gaussian bump centered on integer grid cell (px, py).
void splat_gaussian(Tensor& map, int channel, int px, int py, double sigma) {
    const int gh = map.dim(1), gw = map.dim(2);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
            double d2 = static_cast<double>(x - px) * (x - px) +
                        static_cast<double>(y - py) * (y - py);
            double v = std::exp(-d2 * inv);
            double& cell = map.at(channel, y, x);
            cell = std::max(cell, v);
        }
    }
}

struct GridPoint {
    int x, y;       // low-res integer cell
    double fx, fy;  // sub-stride remainder in [0, 1)
};

GridPoint to_grid(double x, double y, int r, int gw, int gh) {
    GridPoint g;
    double sx = x / r, sy = y / r;
    g.x = std::clamp(static_cast<int>(std::floor(sx)), 0, gw - 1);
    g.y = std::clamp(static_cast<int>(std::floor(sy)), 0, gh - 1);
    g.fx = sx - std::floor(sx);
    g.fy = sy - std::floor(sy);
    return g;
}

} // namespace

double gaussian_sigma(double box_w, double box_h) {
    if (box_w <= 0.0 || box_h <= 0.0) {
        std::ostringstream os;
        os << "gaussian_sigma: box size must be positive, got (" << box_w << ", " << box_h << ")";
        throw ContractError(os.str());
    }
    return std::max(1.0, std::min(box_w, box_h) / 6.0);
}

FrameTargets render_cp_targets(std::span<const ActorAnnotation> actors, int h, int w, int r) {
    check_grid(h, w, r);
    const int gh = h / r, gw = w / r;
    FrameTargets t;
    t.cp_heatmap = Tensor({1, gh, gw});
    t.cp_shape = Tensor({2, gh, gw});
    t.cp_offset = Tensor({2, gh, gw});
    t.center_mask = Tensor({1, gh, gw});
    t.n_actors = static_cast<int>(actors.size());

    for (size_t i = 0; i < actors.size(); ++i) {
        const ActorAnnotation& a = actors[i];
        double sigma = gaussian_sigma(a.box.width() / r, a.box.height() / r);
        GridPoint c = to_grid(a.box.cx(), a.box.cy(), r, gw, gh);
        splat_gaussian(t.cp_heatmap, 0, c.x, c.y, sigma);
        t.cp_heatmap.at(0, c.y, c.x) = 1.0;
        if (t.center_mask.at(0, c.y, c.x) != 0.0) {
            std::ostringstream os;
            os << "actors share low-res center (" << c.x << ", " << c.y
               << "); regression targets overwritten by actor " << a.actor_id;
            t.warnings.push_back(os.str());
        }
        t.center_mask.at(0, c.y, c.x) = 1.0;
        t.cp_shape.at(0, c.y, c.x) = a.box.width();
        t.cp_shape.at(1, c.y, c.x) = a.box.height();
        t.cp_offset.at(0, c.y, c.x) = c.fx;
        t.cp_offset.at(1, c.y, c.x) = c.fy;
    }
    return t;
}

FrameTargets render_kp_targets(std::span<const ActorAnnotation> actors, int k, int h, int w,
                               int r) {
    check_grid(h, w, r);
    if (k <= 0) throw ContractError("render_kp_targets: K must be positive");
    const int gh = h / r, gw = w / r;
    FrameTargets t;
    t.kp_heatmap = Tensor({k, gh, gw});
    t.kp_distance = Tensor({2 * k, gh, gw});
    t.kp_offset = Tensor({2, gh, gw});
    t.center_mask = Tensor({1, gh, gw});
    t.knot_mask = Tensor({1, gh, gw});
    t.n_actors = static_cast<int>(actors.size());

    for (const ActorAnnotation& a : actors) {
        if (static_cast<int>(a.knots.size()) != k) {
            std::ostringstream os;
            os << "render_kp_targets: actor " << a.actor_id << " carries " << a.knots.size()
               << " knots, dataset K is " << k;
            throw ContractError(os.str());
        }
        double sigma = gaussian_sigma(a.box.width() / r, a.box.height() / r);
        GridPoint c = to_grid(a.box.cx(), a.box.cy(), r, gw, gh);
        t.center_mask.at(0, c.y, c.x) = 1.0;
        for (int j = 0; j < k; ++j) {
            Point2 q = a.knots[static_cast<size_t>(j)];
            double qx = std::clamp(q.x, 0.0, static_cast<double>(w));
            double qy = std::clamp(q.y, 0.0, static_cast<double>(h));
            if (qx != q.x || qy != q.y) {
                std::ostringstream os;
                os << "knot " << j << " of actor " << a.actor_id
                   << " outside frame; clamped to boundary";
                t.warnings.push_back(os.str());
            }
            GridPoint g = to_grid(qx, qy, r, gw, gh);
            splat_gaussian(t.kp_heatmap, j, g.x, g.y, sigma);
            t.kp_heatmap.at(j, g.y, g.x) = 1.0;
            t.kp_distance.at(2 * j, c.y, c.x) = (qx - a.box.cx()) / r;
            t.kp_distance.at(2 * j + 1, c.y, c.x) = (qy - a.box.cy()) / r;
            t.kp_offset.at(0, g.y, g.x) = g.fx;
            t.kp_offset.at(1, g.y, g.x) = g.fy;
            t.knot_mask.at(0, g.y, g.x) = 1.0;
        }
    }
    return t;
}

FrameTargets render_frame_targets(std::span<const ActorAnnotation> actors, int k, int h, int w,
                                  int r) {
    FrameTargets cp = render_cp_targets(actors, h, w, r);
    FrameTargets kp = render_kp_targets(actors, k, h, w, r);
    cp.kp_heatmap = std::move(kp.kp_heatmap);
    cp.kp_distance = std::move(kp.kp_distance);
    cp.kp_offset = std::move(kp.kp_offset);
    cp.knot_mask = std::move(kp.knot_mask);
    for (auto& msg : kp.warnings) cp.warnings.push_back(std::move(msg));
    return cp;
}

} // namespace point3d
