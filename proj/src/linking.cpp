#include "point3d/linking.hpp"

#include <algorithm>
#include <cmath>

#include "point3d/error.hpp"
#include "point3d/eval.hpp"

namespace point3d {

namespace {

struct Segment {
    int begin = 0, end = 0; // inclusive frame range, every frame non-empty
};

std::vector<Segment> find_segments(const std::vector<std::vector<Detection>>& frames) {
    std::vector<Segment> segs;
    const int n = static_cast<int>(frames.size());
    int t = 0;
    while (t < n) {
        if (frames[static_cast<size_t>(t)].empty()) {
            ++t;
            continue;
        }
        int begin = t;
        while (t + 1 < n && !frames[static_cast<size_t>(t + 1)].empty()) ++t;
        segs.push_back({begin, t});
        ++t;
    }
    return segs;
}

// -1: a before b, 0: equal, +1: a after b, comparing box sequences.
int compare_paths(const std::vector<std::vector<Detection>>& frames, int begin,
                  const std::vector<int>& a, const std::vector<int>& b) {
    for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
        const Box& ba = frames[static_cast<size_t>(begin) + i][static_cast<size_t>(a[i])].box;
        const Box& bb = frames[static_cast<size_t>(begin) + i][static_cast<size_t>(b[i])].box;
        if (box_less(ba, bb)) return -1;
        if (box_less(bb, ba)) return 1;
    }
    return 0;
}

struct SegmentBest {
    double score = 0.0;
    std::vector<int> path; // detection index per frame of the segment
};

SegmentBest viterbi_segment(const std::vector<std::vector<Detection>>& frames,
                            const Segment& seg, double beta_link, LinkStats* stats) {
    const int len = seg.end - seg.begin + 1;
    const auto& first = frames[static_cast<size_t>(seg.begin)];
    if (len == 1) {
        // No links to sum; the detection's own confidence ranks the tube.
        int best = 0;
        for (int j = 1; j < static_cast<int>(first.size()); ++j) {
            const Detection &a = first[static_cast<size_t>(best)], &b = first[static_cast<size_t>(j)];
            if (b.score > a.score || (b.score == a.score && box_less(b.box, a.box))) best = j;
        }
        return {first[static_cast<size_t>(best)].score, {best}};
    }

    // dp[j] = best cumulative link score of a path ending at detection j of
    // the current frame; parent pointers reconstruct the path.
    std::vector<std::vector<int>> parents(static_cast<size_t>(len));
    std::vector<double> dp(first.size(), 0.0);
    parents[0].assign(first.size(), -1);

    auto reconstruct = [&](int upto, int j) {
        std::vector<int> path(static_cast<size_t>(upto) + 1);
        for (int t = upto; t >= 0; --t) {
            path[static_cast<size_t>(t)] = j;
            j = parents[static_cast<size_t>(t)][static_cast<size_t>(j)];
        }
        return path;
    };

    for (int t = 1; t < len; ++t) {
        const auto& prev = frames[static_cast<size_t>(seg.begin + t - 1)];
        const auto& cur = frames[static_cast<size_t>(seg.begin + t)];
        std::vector<double> next_dp(cur.size());
        parents[static_cast<size_t>(t)].assign(cur.size(), 0);
        for (int j = 0; j < static_cast<int>(cur.size()); ++j) {
            int best_i = -1;
            double best_score = 0.0;
            for (int i = 0; i < static_cast<int>(prev.size()); ++i) {
                double s = dp[static_cast<size_t>(i)] +
                           link_score(prev[static_cast<size_t>(i)], cur[static_cast<size_t>(j)],
                                      beta_link);
                if (stats) ++stats->pair_evaluations;
                if (best_i < 0 || s > best_score) {
                    best_i = i;
                    best_score = s;
                } else if (s == best_score) {
                    auto cand = reconstruct(t - 1, i);
                    auto held = reconstruct(t - 1, best_i);
                    if (compare_paths(frames, seg.begin, cand, held) < 0) best_i = i;
                }
            }
            next_dp[static_cast<size_t>(j)] = best_score;
            parents[static_cast<size_t>(t)][static_cast<size_t>(j)] = best_i;
        }
        dp = std::move(next_dp);
    }

    int best_j = 0;
    for (int j = 1; j < static_cast<int>(dp.size()); ++j) {
        if (dp[static_cast<size_t>(j)] > dp[static_cast<size_t>(best_j)]) {
            best_j = j;
        } else if (dp[static_cast<size_t>(j)] == dp[static_cast<size_t>(best_j)]) {
            auto cand = reconstruct(len - 1, j);
            auto held = reconstruct(len - 1, best_j);
            if (compare_paths(frames, seg.begin, cand, held) < 0) best_j = j;
        }
    }
    return {dp[static_cast<size_t>(best_j)], reconstruct(len - 1, best_j)};
}

Tube make_tube(const std::vector<std::vector<Detection>>& frames, const Segment& seg,
               const std::vector<int>& path) {
    Tube tube;
    double sum = 0.0;
    for (int t = 0; t < static_cast<int>(path.size()); ++t) {
        Detection d = frames[static_cast<size_t>(seg.begin + t)][static_cast<size_t>(path[t])];
        d.frame = seg.begin + t;
        sum += d.score;
        tube.dets.push_back(std::move(d));
    }
    tube.score = tube.dets.empty() ? 0.0 : sum / static_cast<double>(tube.dets.size());
    tube.class_id = tube.dets.empty() ? -1 : tube.dets.front().class_id;
    return tube;
}

// Global pick across segments: DP score, then earliest frame, then box
// sequence, matching the brute-force oracle exactly.
bool better_candidate(double score_a, const Segment& seg_a, const std::vector<int>& path_a,
                      double score_b, const Segment& seg_b, const std::vector<int>& path_b,
                      const std::vector<std::vector<Detection>>& frames) {
    if (score_a != score_b) return score_a > score_b;
    if (seg_a.begin != seg_b.begin) return seg_a.begin < seg_b.begin;
    // Same segment: compare box sequences.
    return compare_paths(frames, seg_a.begin, path_a, path_b) < 0;
}

} // namespace

double link_score(const Detection& a, const Detection& b, double beta_link) {
    if (b.frame != a.frame + 1) {
        throw ContractError("link_score: detections must be on adjacent frames");
    }
    return a.score + b.score + beta_link * iou_2d(a.box, b.box);
}

std::vector<Tube> viterbi_link(const std::vector<std::vector<Detection>>& dets_per_frame,
                               int max_tubes, double beta_link, LinkStats* stats) {
    if (dets_per_frame.empty()) {
        throw ContractError("viterbi_link: need at least one frame");
    }
    // Stamp frame indices and work on a mutable copy; extraction removes
    // detections so tubes come out detection-disjoint.
    std::vector<std::vector<Detection>> frames = dets_per_frame;
    for (size_t t = 0; t < frames.size(); ++t) {
        for (auto& d : frames[t]) d.frame = static_cast<int>(t);
    }

    std::vector<Tube> tubes;
    while (max_tubes <= 0 || static_cast<int>(tubes.size()) < max_tubes) {
        auto segments = find_segments(frames);
        if (segments.empty()) break;

        bool have = false;
        double best_score = 0.0;
        Segment best_seg;
        std::vector<int> best_path;
        for (const Segment& seg : segments) {
            SegmentBest sb = viterbi_segment(frames, seg, beta_link, stats);
            if (!have || better_candidate(sb.score, seg, sb.path, best_score, best_seg,
                                          best_path, frames)) {
                have = true;
                best_score = sb.score;
                best_seg = seg;
                best_path = std::move(sb.path);
            }
        }
        tubes.push_back(make_tube(frames, best_seg, best_path));
        for (int t = 0; t < static_cast<int>(best_path.size()); ++t) {
            auto& frame = frames[static_cast<size_t>(best_seg.begin + t)];
            frame.erase(frame.begin() + best_path[static_cast<size_t>(t)]);
        }
    }
    return tubes;
}

Tube brute_force_link(const std::vector<std::vector<Detection>>& dets_per_frame,
                      double beta_link) {
    std::vector<std::vector<Detection>> frames = dets_per_frame;
    for (size_t t = 0; t < frames.size(); ++t) {
        for (auto& d : frames[t]) d.frame = static_cast<int>(t);
    }
    auto segments = find_segments(frames);
    if (segments.empty()) return Tube{};

    bool have = false;
    double best_score = 0.0;
    Segment best_seg;
    std::vector<int> best_path;

    for (const Segment& seg : segments) {
        const int len = seg.end - seg.begin + 1;
        double paths = 1.0;
        for (int t = 0; t < len; ++t) {
            paths *= static_cast<double>(frames[static_cast<size_t>(seg.begin + t)].size());
            if (paths > 1e6) {
                throw ContractError("brute_force_link: more than 10^6 paths, refusing");
            }
        }
        std::vector<int> odo(static_cast<size_t>(len), 0);
        while (true) {
            double score = 0.0;
            if (len == 1) {
                score = frames[static_cast<size_t>(seg.begin)][static_cast<size_t>(odo[0])].score;
            } else {
                for (int t = 0; t + 1 < len; ++t) {
                    score += link_score(
                        frames[static_cast<size_t>(seg.begin + t)][static_cast<size_t>(odo[t])],
                        frames[static_cast<size_t>(seg.begin + t + 1)]
                              [static_cast<size_t>(odo[t + 1])],
                        beta_link);
                }
            }
            if (!have || better_candidate(score, seg, odo, best_score, best_seg, best_path,
                                          frames)) {
                have = true;
                best_score = score;
                best_seg = seg;
                best_path = odo;
            }
            int t = len - 1;
            while (t >= 0) {
                if (++odo[static_cast<size_t>(t)] <
                    static_cast<int>(frames[static_cast<size_t>(seg.begin + t)].size())) {
                    break;
                }
                odo[static_cast<size_t>(t)] = 0;
                --t;
            }
            if (t < 0) break;
        }
    }
    return make_tube(frames, best_seg, best_path);
}

} // namespace point3d
