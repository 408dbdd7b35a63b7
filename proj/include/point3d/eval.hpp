#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "point3d/linking.hpp"

namespace point3d {

double iou_2d(const Box& a, const Box& b);

// Temporal IoU of the frame ranges times the mean spatial IoU over the
// frames both tubes cover; 0 when temporally disjoint.
double iou_tube(const Tube& a, const Tube& b);

// Ground-truth box for evaluation. Boxes outside the action's labeled
// temporal extent (inside_extent = false) are presence annotations: they
// never count as matchable GT but feed the time-error bucket.
struct FrameGt {
    int clip = 0, frame = 0;
    Box box;
    int class_id = 0;
    int actor_id = 0;
    bool inside_extent = true;
};

struct DetRecord {
    int clip = 0, frame = 0;
    Box box;
    double score = 0.0;
    int class_id = 0;
};

struct PrPoint {
    double recall = 0.0, precision = 0.0;
};

struct ClassAp {
    double ap = 0.0;
    int num_gt = 0;
    std::vector<PrPoint> curve;
};

struct ApReport {
    double map = 0.0;
    std::map<int, ClassAp> per_class;  // classes with at least one GT
    std::vector<int> skipped_classes;  // seen only in detections, excluded
};

// Per-class greedy matching by descending score (highest-IoU match wins),
// AP as the exact area under the interpolated precision-recall curve,
// mAP as the unweighted mean over classes with GT.
ApReport frame_map(std::span<const DetRecord> dets, std::span<const FrameGt> gts,
                   double iou_thr = 0.5);

struct TubeRecord {
    int clip = 0;
    Tube tube; // class_id set on the tube
};

ApReport video_map_at(std::span<const TubeRecord> tubes, std::span<const TubeRecord> gt_tubes,
                      double iou_thr);

// EL/EC/ET/EO: share of false positives per category, integrated over the
// precision-recall walk (see error_taxonomy in eval.cpp for the exact
// weighting); EM: fraction of GT boxes never matched.
struct ErrorTaxonomy {
    double el = 0.0, ec = 0.0, et = 0.0, eo = 0.0, em = 0.0;
};

ErrorTaxonomy error_taxonomy(std::span<const DetRecord> dets, std::span<const FrameGt> gts,
                             double iou_thr = 0.5);

struct EvalReport {
    ApReport frame_ap;                                // at IoU 0.5
    std::vector<std::pair<double, double>> video_map; // (threshold, mAP)
    double video_map_50_95 = 0.0;                     // mean over 0.5:0.95 step 0.05
    ErrorTaxonomy errors;
};

// Thresholds the report always carries: 0.2, 0.5, 0.75 and the 0.5:0.95 band.
EvalReport evaluate(std::span<const DetRecord> dets, std::span<const FrameGt> gts,
                    std::span<const TubeRecord> tubes, std::span<const TubeRecord> gt_tubes,
                    double frame_iou_thr = 0.5);

std::string report_to_json(const EvalReport& report);
std::string pr_curves_to_csv(const ApReport& report);

} // namespace point3d
