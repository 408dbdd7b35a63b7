#pragma once

#include <cstdint>
#include <vector>

#include "point3d/decode.hpp"

namespace point3d {

// Temporally contiguous chain of detections, one per frame.
struct Tube {
    std::vector<Detection> dets; // frame indices strictly increasing by 1
    double score = 0.0;          // mean detection score
    int class_id = -1;

    int start_frame() const { return dets.empty() ? 0 : dets.front().frame; }
    int end_frame() const { return dets.empty() ? -1 : dets.back().frame; }
    int length() const { return static_cast<int>(dets.size()); }
};

struct LinkStats {
    int64_t pair_evaluations = 0; // link_score calls inside the DP
};

// a.score + b.score + beta * IoU(a.box, b.box); frames must be adjacent.
double link_score(const Detection& a, const Detection& b, double beta_link = 1.0);

// Max-sum dynamic program over one detection per frame. Frames with no
// detections split the sequence into maximal gap-free segments; each tube
// spans a whole segment. The best tube (by DP score, then earliest frame,
// then lexicographic box sequence) is extracted, its detections removed,
// and the process repeats until nothing is left or max_tubes is reached.
std::vector<Tube> viterbi_link(const std::vector<std::vector<Detection>>& dets_per_frame,
                               int max_tubes, double beta_link = 1.0,
                               LinkStats* stats = nullptr);

// Exhaustive-enumeration oracle for the single best tube under the same
// scoring and tie-break. Refuses instances with more than 10^6 paths.
Tube brute_force_link(const std::vector<std::vector<Detection>>& dets_per_frame,
                      double beta_link = 1.0);

} // namespace point3d
