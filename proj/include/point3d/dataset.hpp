#pragma once

#include <string>
#include <vector>

#include "point3d/eval.hpp"
#include "point3d/synth.hpp"

namespace point3d {

// On-disk layout: <dir>/annotations.json plus <dir>/clips/clip_NNNN.ptk1.
// Annotation schema:
//   {clips:[{id, video, label, action_range:[b,e],
//            frames:[{actors:[{box:[x1,y1,x2,y2], knots:[[x,y],...],
//                              class, actor_id}]}]}]}
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir, bool load_videos = true);

// Detections as JSON lines: {clip, frame, box, score, class, knots}.
struct ClipDetections {
    int clip = 0;
    std::vector<std::vector<Detection>> per_frame;
};

void save_detections_jsonl(const std::string& path, const std::vector<ClipDetections>& dets);
std::vector<ClipDetections> load_detections_jsonl(const std::string& path);

// Tubes: {tubes:[{clip, class, score, frames:[{frame, box, score}]}]}
void save_tubes_json(const std::string& path, const std::vector<TubeRecord>& tubes);
std::vector<TubeRecord> load_tubes_json(const std::string& path);

// Flatten ground truth for the evaluator.
std::vector<FrameGt> dataset_frame_gts(const Dataset& ds);
std::vector<TubeRecord> dataset_gt_tubes(const Dataset& ds);
std::vector<DetRecord> flatten_detections(const std::vector<ClipDetections>& dets);

} // namespace point3d
