#include "point3d/synth.hpp"

#include <algorithm>
#include <cmath>

#include "point3d/error.hpp"
#include "point3d/rng.hpp"

namespace point3d {

namespace {

constexpr double kSpeed = 2.0;
constexpr double kCircleRadius = 6.0;
constexpr double kMargin = 2.0;

// (fx, fy) anchor fractions on the box; the first four are the corners.
constexpr double kKnotAnchors[9][2] = {{0, 0},     {1, 0},   {1, 1},   {0, 1},   {0.5, 0.5},
                                       {0.5, 0},   {1, 0.5}, {0.5, 1}, {0, 0.5}};

struct ActorState {
    double cx, cy, w, h;
};

// Offsets-from-start of motion step i for each class pattern.
struct PatternOffsets {
    double dx = 0.0, dy = 0.0, dsize = 0.0;
};

PatternOffsets pattern_offset(int cls, int i, int steps) {
    PatternOffsets p;
    switch (cls) {
    case 0: p.dx = kSpeed * i; break;
    case 1: p.dy = kSpeed * i; break;
    case 2: p.dx = kSpeed * i; p.dy = kSpeed * i; break;
    case 3: p.dx = kSpeed * (i % 2); break;
    case 4: p.dsize = 2.0 * std::min(i, std::max(steps - i, 0)); break;
    case 5: {
        double theta = static_cast<double>(i) * (M_PI / 4.0);
        p.dx = kCircleRadius * (std::cos(theta) - 1.0);
        p.dy = kCircleRadius * std::sin(theta);
        break;
    }
    default: throw ContractError("synth: unknown class pattern");
    }
    return p;
}

// Triangle-wave fold into [lo, hi]: realizes trajectory reflection at the
// frame boundary for trajectories that would exit.
double reflect_into(double v, double lo, double hi) {
    if (hi <= lo) return lo;
    double span = hi - lo;
    double t = std::fmod(v - lo, 2.0 * span);
    if (t < 0.0) t += 2.0 * span;
    return lo + (t <= span ? t : 2.0 * span - t);
}

std::vector<ActorState> build_track(int cls, const ActorState& start, int clip_len,
                                    int action_begin, int action_end, int frame_size) {
    std::vector<ActorState> track(static_cast<size_t>(clip_len));
    const int steps = action_end - action_begin;
    for (int t = 0; t < clip_len; ++t) {
        int i = std::clamp(t, action_begin, action_end) - action_begin;
        PatternOffsets off = pattern_offset(cls, i, steps);
        ActorState s;
        s.w = start.w + off.dsize;
        s.h = start.h + off.dsize;
        double lo_x = kMargin + 0.5 * s.w, hi_x = frame_size - kMargin - 0.5 * s.w;
        double lo_y = kMargin + 0.5 * s.h, hi_y = frame_size - kMargin - 0.5 * s.h;
        s.cx = reflect_into(start.cx + off.dx, lo_x, hi_x);
        s.cy = reflect_into(start.cy + off.dy, lo_y, hi_y);
        track[static_cast<size_t>(t)] = s;
    }
    return track;
}

Box state_box(const ActorState& s) {
    return Box{s.cx - 0.5 * s.w, s.cy - 0.5 * s.h, s.cx + 0.5 * s.w, s.cy + 0.5 * s.h};
}

bool tracks_collide(const std::vector<ActorState>& a, const std::vector<ActorState>& b, int r) {
    for (size_t t = 0; t < a.size(); ++t) {
        Box ba = state_box(a[t]), bb = state_box(b[t]);
        int ax = static_cast<int>(std::floor(ba.cx() / r));
        int ay = static_cast<int>(std::floor(ba.cy() / r));
        int bx = static_cast<int>(std::floor(bb.cx() / r));
        int by = static_cast<int>(std::floor(bb.cy() / r));
        if (ax == bx && ay == by) return true;
        double ix = std::min(ba.x2, bb.x2) - std::max(ba.x1, bb.x1);
        double iy = std::min(ba.y2, bb.y2) - std::max(ba.y1, bb.y1);
        if (ix > 0.0 && iy > 0.0) {
            double inter = ix * iy;
            if (inter / (ba.area() + bb.area() - inter) > 0.25) return true;
        }
    }
    return false;
}

} // namespace

void SynthConfig::validate() const {
    if (num_clips <= 0 || clip_len <= 0 || frame_size <= 0) {
        throw ConfigError("synth: num_clips, clip_len, frame_size must be positive");
    }
    if (num_classes < 1 || num_classes > 6) {
        throw ConfigError("synth: num_classes must be in [1, 6]");
    }
    if (num_knots < 1 || num_knots > 9) {
        throw ConfigError("synth: num_knots must be in [1, 9]");
    }
    if (actors_min < 1 || actors_max < actors_min) {
        throw ConfigError("synth: invalid actors_per_clip range");
    }
    if (noise_std < 0.0) throw ConfigError("synth: noise_std must be non-negative");
    if (frame_size < 32) throw ConfigError("synth: frame_size must be at least 32");
}

Dataset generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int T = cfg.clip_len, size = cfg.frame_size;
    const int stride_guess = 4; // collision spacing matches the model stride default

    // Stratified labels: exact class balance up to remainder, then shuffled.
    std::vector<int> labels(static_cast<size_t>(cfg.num_clips));
    for (int i = 0; i < cfg.num_clips; ++i) labels[static_cast<size_t>(i)] = i % cfg.num_classes;
    for (int i = cfg.num_clips - 1; i > 0; --i) {
        std::swap(labels[static_cast<size_t>(i)], labels[static_cast<size_t>(rng.uniform_int(0, i))]);
    }

    Dataset ds;
    ds.config = cfg;
    ds.clips.reserve(static_cast<size_t>(cfg.num_clips));

    for (int ci = 0; ci < cfg.num_clips; ++ci) {
        ClipData clip;
        clip.id = ci;
        clip.label = labels[static_cast<size_t>(ci)];
        int pad = cfg.trimmed ? 0 : std::max(1, T / 4);
        clip.action_begin = std::min(pad, T - 1);
        clip.action_end = std::max(clip.action_begin, T - 1 - pad);

        const int n_actors = rng.uniform_int(cfg.actors_min, cfg.actors_max);
        std::vector<std::vector<ActorState>> tracks;
        std::vector<double> fills; // per actor, 3 channels appended
        const int steps = clip.action_end - clip.action_begin;

        for (int ai = 0; ai < n_actors; ++ai) {
            bool placed = false;
            for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
                ActorState start;
                if (clip.label == 4) {
                    start.w = static_cast<double>(2 * rng.uniform_int(6, 8)); // grows by +6
                    start.h = static_cast<double>(2 * rng.uniform_int(6, 8));
                } else {
                    start.w = static_cast<double>(2 * rng.uniform_int(5, 11));
                    start.h = static_cast<double>(2 * rng.uniform_int(5, 11));
                }
                // Valid start region accounting for the whole trajectory.
                double lo_x = kMargin + 0.5 * start.w, hi_x = size - kMargin - 0.5 * start.w;
                double lo_y = kMargin + 0.5 * start.h, hi_y = size - kMargin - 0.5 * start.h;
                for (int i = 0; i <= steps; ++i) {
                    PatternOffsets off = pattern_offset(clip.label, i, steps);
                    double half = 0.5 * (start.w + off.dsize);
                    lo_x = std::max(lo_x, kMargin + half - off.dx);
                    hi_x = std::min(hi_x, size - kMargin - half - off.dx);
                    lo_y = std::max(lo_y, kMargin + half - off.dy);
                    hi_y = std::min(hi_y, size - kMargin - half - off.dy);
                }
                if (lo_x >= hi_x || lo_y >= hi_y) continue;
                start.cx = rng.uniform(lo_x, hi_x);
                start.cy = rng.uniform(lo_y, hi_y);
                auto track =
                    build_track(clip.label, start, T, clip.action_begin, clip.action_end, size);
                bool collides = false;
                for (const auto& other : tracks) {
                    if (tracks_collide(track, other, stride_guess)) {
                        collides = true;
                        break;
                    }
                }
                if (collides) continue;
                tracks.push_back(std::move(track));
                for (int c = 0; c < 3; ++c) fills.push_back(rng.uniform(0.45, 0.95));
                placed = true;
            }
            // Crowded frame: carry on with the actors already placed.
        }
        if (tracks.empty()) {
            // Guaranteed fallback: one centered static-start actor.
            ActorState start{size / 2.0, size / 2.0, 12.0, 12.0};
            tracks.push_back(
                build_track(clip.label, start, T, clip.action_begin, clip.action_end, size));
            for (int c = 0; c < 3; ++c) fills.push_back(rng.uniform(0.45, 0.95));
        }

        // Annotations for every frame, including pads (presence outside the
        // labeled extent).
        clip.frames.assign(static_cast<size_t>(T), {});
        for (int t = 0; t < T; ++t) {
            for (size_t ai = 0; ai < tracks.size(); ++ai) {
                ActorAnnotation ann;
                ann.box = state_box(tracks[ai][static_cast<size_t>(t)]);
                ann.class_id = clip.label;
                ann.actor_id = static_cast<int>(ai);
                for (int kx = 0; kx < cfg.num_knots; ++kx) {
                    ann.knots.push_back(
                        Point2{ann.box.x1 + kKnotAnchors[kx][0] * ann.box.width(),
                               ann.box.y1 + kKnotAnchors[kx][1] * ann.box.height()});
                }
                clip.frames[static_cast<size_t>(t)].push_back(std::move(ann));
            }
        }

        // Rasterize.
        clip.video = Tensor({T, 3, size, size});
        for (int t = 0; t < T; ++t) {
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        clip.video.at(t, c, y, x) = 0.08;
                    }
                }
            }
            for (size_t ai = 0; ai < tracks.size(); ++ai) {
                Box b = state_box(tracks[ai][static_cast<size_t>(t)]);
                int x0 = std::max(0, static_cast<int>(std::ceil(b.x1 - 0.5)));
                int x1 = std::min(size - 1, static_cast<int>(std::floor(b.x2 - 0.5)));
                int y0 = std::max(0, static_cast<int>(std::ceil(b.y1 - 0.5)));
                int y1 = std::min(size - 1, static_cast<int>(std::floor(b.y2 - 0.5)));
                for (int c = 0; c < 3; ++c) {
                    double fill = fills[ai * 3 + static_cast<size_t>(c)];
                    for (int y = y0; y <= y1; ++y) {
                        for (int x = x0; x <= x1; ++x) {
                            clip.video.at(t, c, y, x) = fill;
                        }
                    }
                }
            }
            if (cfg.noise_std > 0.0) {
                for (int c = 0; c < 3; ++c) {
                    for (int y = 0; y < size; ++y) {
                        for (int x = 0; x < size; ++x) {
                            double& px = clip.video.at(t, c, y, x);
                            px = std::clamp(px + rng.normal(0.0, cfg.noise_std), 0.0, 1.0);
                        }
                    }
                }
            }
        }
        ds.clips.push_back(std::move(clip));
    }
    return ds;
}

std::vector<double> motion_feature(const ClipData& clip, int actor_id) {
    double sum_dx = 0, sum_dy = 0, sum_adx = 0, sum_ady = 0, sum_dw = 0, sum_adw = 0;
    int count = 0;
    for (int t = clip.action_begin; t < clip.action_end; ++t) {
        const ActorAnnotation *cur = nullptr, *nxt = nullptr;
        for (const auto& a : clip.frames[static_cast<size_t>(t)]) {
            if (a.actor_id == actor_id) cur = &a;
        }
        for (const auto& a : clip.frames[static_cast<size_t>(t) + 1]) {
            if (a.actor_id == actor_id) nxt = &a;
        }
        if (!cur || !nxt) continue;
        double dx = nxt->box.cx() - cur->box.cx();
        double dy = nxt->box.cy() - cur->box.cy();
        double dw = nxt->box.width() - cur->box.width();
        sum_dx += dx;
        sum_dy += dy;
        sum_adx += std::fabs(dx);
        sum_ady += std::fabs(dy);
        sum_dw += dw;
        sum_adw += std::fabs(dw);
        ++count;
    }
    double inv = count > 0 ? 1.0 / count : 0.0;
    return {sum_dx * inv, sum_dy * inv, sum_adx * inv, sum_ady * inv, sum_dw * inv,
            sum_adw * inv};
}

} // namespace point3d
