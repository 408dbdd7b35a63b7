#include "point3d/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "point3d/error.hpp"

namespace point3d {

double iou_2d(const Box& a, const Box& b) {
    double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double iou_tube(const Tube& a, const Tube& b) {
    if (a.dets.empty() || b.dets.empty()) return 0.0;
    int lo = std::max(a.start_frame(), b.start_frame());
    int hi = std::min(a.end_frame(), b.end_frame());
    if (lo > hi) return 0.0;
    int inter = hi - lo + 1;
    int uni = a.length() + b.length() - inter;
    double temporal = static_cast<double>(inter) / static_cast<double>(uni);
    double spatial = 0.0;
    for (int f = lo; f <= hi; ++f) {
        spatial += iou_2d(a.dets[static_cast<size_t>(f - a.start_frame())].box,
                          b.dets[static_cast<size_t>(f - b.start_frame())].box);
    }
    return temporal * (spatial / inter);
}

namespace {

// Exact area under the interpolated precision-recall step curve.
double ap_from_flags(const std::vector<char>& tp, int num_gt, std::vector<PrPoint>* curve) {
    if (num_gt <= 0) return 0.0;
    const size_t n = tp.size();
    std::vector<double> prec(n), rec(n);
    int tp_count = 0;
    for (size_t i = 0; i < n; ++i) {
        tp_count += tp[i] ? 1 : 0;
        prec[i] = static_cast<double>(tp_count) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp_count) / num_gt;
    }
    if (curve) {
        curve->clear();
        for (size_t i = 0; i < n; ++i) curve->push_back({rec[i], prec[i]});
    }
    for (size_t i = n; i-- > 1;) {
        prec[i - 1] = std::max(prec[i - 1], prec[i]);
    }
    double ap = 0.0, prev_r = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (rec[i] > prev_r) {
            ap += (rec[i] - prev_r) * prec[i];
            prev_r = rec[i];
        }
    }
    return ap;
}

bool det_order(const DetRecord& a, const DetRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.clip, a.frame, a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
           std::tie(b.clip, b.frame, b.box.x1, b.box.y1, b.box.x2, b.box.y2);
}

// Greedy matcher shared by frame-level AP and the error taxonomy. Returns
// TP flags aligned with the (sorted) detection order and fills `matched_gt`
// with indices into `gts`.
std::vector<char> match_class(std::vector<DetRecord>& dets, const std::vector<size_t>& gt_idx,
                              std::span<const FrameGt> gts, double iou_thr,
                              std::vector<char>* gt_matched_out) {
    std::sort(dets.begin(), dets.end(), det_order);
    std::vector<char> gt_matched(gt_idx.size(), 0);
    std::vector<char> tp(dets.size(), 0);
    for (size_t di = 0; di < dets.size(); ++di) {
        const DetRecord& d = dets[di];
        double best_iou = 0.0;
        int best = -1;
        for (size_t gi = 0; gi < gt_idx.size(); ++gi) {
            if (gt_matched[gi]) continue;
            const FrameGt& g = gts[gt_idx[gi]];
            if (g.clip != d.clip || g.frame != d.frame) continue;
            double v = iou_2d(d.box, g.box);
            if (v >= iou_thr && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0) {
            gt_matched[static_cast<size_t>(best)] = 1;
            tp[di] = 1;
        }
    }
    if (gt_matched_out) *gt_matched_out = std::move(gt_matched);
    return tp;
}

} // namespace

ApReport frame_map(std::span<const DetRecord> dets, std::span<const FrameGt> gts,
                   double iou_thr) {
    std::set<int> det_classes;
    for (const auto& d : dets) det_classes.insert(d.class_id);

    std::map<int, std::vector<size_t>> gt_by_class;
    for (size_t i = 0; i < gts.size(); ++i) {
        if (gts[i].inside_extent) gt_by_class[gts[i].class_id].push_back(i);
    }

    ApReport report;
    double sum = 0.0;
    for (const auto& [cls, gt_idx] : gt_by_class) {
        std::vector<DetRecord> cls_dets;
        for (const auto& d : dets) {
            if (d.class_id == cls) cls_dets.push_back(d);
        }
        std::vector<char> tp = match_class(cls_dets, gt_idx, gts, iou_thr, nullptr);
        ClassAp entry;
        entry.num_gt = static_cast<int>(gt_idx.size());
        entry.ap = ap_from_flags(tp, entry.num_gt, &entry.curve);
        sum += entry.ap;
        report.per_class[cls] = std::move(entry);
        det_classes.erase(cls);
    }
    report.skipped_classes.assign(det_classes.begin(), det_classes.end());
    report.map = report.per_class.empty() ? 0.0 : sum / static_cast<double>(report.per_class.size());
    return report;
}

ApReport video_map_at(std::span<const TubeRecord> tubes, std::span<const TubeRecord> gt_tubes,
                      double iou_thr) {
    std::set<int> det_classes;
    for (const auto& t : tubes) det_classes.insert(t.tube.class_id);

    std::map<int, std::vector<size_t>> gt_by_class;
    for (size_t i = 0; i < gt_tubes.size(); ++i) {
        gt_by_class[gt_tubes[i].tube.class_id].push_back(i);
    }

    ApReport report;
    double sum = 0.0;
    for (const auto& [cls, gt_idx] : gt_by_class) {
        std::vector<const TubeRecord*> cls_tubes;
        for (const auto& t : tubes) {
            if (t.tube.class_id == cls) cls_tubes.push_back(&t);
        }
        std::sort(cls_tubes.begin(), cls_tubes.end(), [](const TubeRecord* a, const TubeRecord* b) {
            if (a->tube.score != b->tube.score) return a->tube.score > b->tube.score;
            if (a->clip != b->clip) return a->clip < b->clip;
            if (a->tube.start_frame() != b->tube.start_frame()) {
                return a->tube.start_frame() < b->tube.start_frame();
            }
            return a->tube.dets.empty() || b->tube.dets.empty()
                       ? a->tube.length() < b->tube.length()
                       : box_less(a->tube.dets.front().box, b->tube.dets.front().box);
        });
        std::vector<char> gt_matched(gt_idx.size(), 0);
        std::vector<char> tp(cls_tubes.size(), 0);
        for (size_t di = 0; di < cls_tubes.size(); ++di) {
            double best_iou = 0.0;
            int best = -1;
            for (size_t gi = 0; gi < gt_idx.size(); ++gi) {
                if (gt_matched[gi]) continue;
                const TubeRecord& g = gt_tubes[gt_idx[gi]];
                if (g.clip != cls_tubes[di]->clip) continue;
                double v = iou_tube(cls_tubes[di]->tube, g.tube);
                if (v >= iou_thr && v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(gi);
                }
            }
            if (best >= 0) {
                gt_matched[static_cast<size_t>(best)] = 1;
                tp[di] = 1;
            }
        }
        ClassAp entry;
        entry.num_gt = static_cast<int>(gt_idx.size());
        entry.ap = ap_from_flags(tp, entry.num_gt, &entry.curve);
        sum += entry.ap;
        report.per_class[cls] = std::move(entry);
        det_classes.erase(cls);
    }
    report.skipped_classes.assign(det_classes.begin(), det_classes.end());
    report.map = report.per_class.empty() ? 0.0 : sum / static_cast<double>(report.per_class.size());
    return report;
}

ErrorTaxonomy error_taxonomy(std::span<const DetRecord> dets, std::span<const FrameGt> gts,
                             double iou_thr) {
    enum Cat { kEl = 0, kEc, kEt, kEo, kNumCats };

    std::map<int, std::vector<size_t>> gt_by_class;
    int total_gt = 0;
    for (size_t i = 0; i < gts.size(); ++i) {
        if (gts[i].inside_extent) {
            gt_by_class[gts[i].class_id].push_back(i);
            ++total_gt;
        }
    }

    ErrorTaxonomy out;
    int classes = 0;
    int total_matched = 0;
    double cat_auc[kNumCats] = {0, 0, 0, 0};

    for (const auto& [cls, gt_idx] : gt_by_class) {
        std::vector<DetRecord> cls_dets;
        for (const auto& d : dets) {
            if (d.class_id == cls) cls_dets.push_back(d);
        }
        std::vector<char> gt_matched;
        std::vector<char> tp = match_class(cls_dets, gt_idx, gts, iou_thr, &gt_matched);
        for (char m : gt_matched) total_matched += m ? 1 : 0;

        // Classify each false positive.
        std::vector<int> fp_cat(cls_dets.size(), -1);
        for (size_t di = 0; di < cls_dets.size(); ++di) {
            if (tp[di]) continue;
            const DetRecord& d = cls_dets[di];
            double iou_same = 0.0, iou_other = 0.0, iou_time = 0.0;
            for (const FrameGt& g : gts) {
                if (g.clip != d.clip || g.frame != d.frame) continue;
                double v = iou_2d(d.box, g.box);
                if (g.inside_extent) {
                    if (g.class_id == cls) {
                        iou_same = std::max(iou_same, v);
                    } else {
                        iou_other = std::max(iou_other, v);
                    }
                } else if (g.class_id == cls) {
                    iou_time = std::max(iou_time, v);
                }
            }
            if (iou_same >= 0.1 && iou_same < iou_thr) {
                fp_cat[di] = kEl;
            } else if (iou_other >= iou_thr) {
                fp_cat[di] = kEc;
            } else if (iou_time >= iou_thr) {
                fp_cat[di] = kEt;
            } else {
                fp_cat[di] = kEo;
            }
        }

        // Walk the ranked list; at every recall point take the category
        // composition of the false positives seen so far, then extend the
        // final composition to recall 1 so fully unrecalled classes still
        // report their errors.
        const int num_gt = static_cast<int>(gt_idx.size());
        int counts[kNumCats] = {0, 0, 0, 0};
        int fp_total = 0, tp_total = 0;
        double prev_r = 0.0;
        double auc[kNumCats] = {0, 0, 0, 0};
        for (size_t di = 0; di < cls_dets.size(); ++di) {
            if (tp[di]) {
                ++tp_total;
                double r = static_cast<double>(tp_total) / num_gt;
                if (fp_total > 0) {
                    for (int c = 0; c < kNumCats; ++c) {
                        auc[c] += (r - prev_r) * counts[c] / fp_total;
                    }
                }
                prev_r = r;
            } else {
                ++counts[fp_cat[di]];
                ++fp_total;
            }
        }
        if (fp_total > 0 && prev_r < 1.0) {
            for (int c = 0; c < kNumCats; ++c) {
                auc[c] += (1.0 - prev_r) * counts[c] / fp_total;
            }
        }
        for (int c = 0; c < kNumCats; ++c) cat_auc[c] += auc[c];
        ++classes;
    }

    if (classes > 0) {
        out.el = cat_auc[kEl] / classes;
        out.ec = cat_auc[kEc] / classes;
        out.et = cat_auc[kEt] / classes;
        out.eo = cat_auc[kEo] / classes;
    }
    out.em = total_gt > 0 ? 1.0 - static_cast<double>(total_matched) / total_gt : 0.0;
    return out;
}

EvalReport evaluate(std::span<const DetRecord> dets, std::span<const FrameGt> gts,
                    std::span<const TubeRecord> tubes, std::span<const TubeRecord> gt_tubes,
                    double frame_iou_thr) {
    EvalReport report;
    report.frame_ap = frame_map(dets, gts, frame_iou_thr);
    for (double thr : {0.2, 0.5, 0.75}) {
        report.video_map.emplace_back(thr, video_map_at(tubes, gt_tubes, thr).map);
    }
    double acc = 0.0;
    for (int i = 0; i < 10; ++i) {
        double thr = 0.5 + 0.05 * i;
        acc += video_map_at(tubes, gt_tubes, thr).map;
    }
    report.video_map_50_95 = acc / 10.0;
    report.errors = error_taxonomy(dets, gts, frame_iou_thr);
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["frame_map"] = {{"iou", 0.5}, {"map", report.frame_ap.map}};
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, entry] : report.frame_ap.per_class) {
        per_class[std::to_string(cls)] = {{"ap", entry.ap}, {"num_gt", entry.num_gt}};
    }
    j["frame_map"]["per_class"] = per_class;
    if (!report.frame_ap.skipped_classes.empty()) {
        j["frame_map"]["skipped_classes"] = report.frame_ap.skipped_classes;
    }
    nlohmann::json vm = nlohmann::json::object();
    for (const auto& [thr, value] : report.video_map) {
        std::ostringstream key;
        key << thr;
        vm[key.str()] = value;
    }
    vm["0.5:0.95"] = report.video_map_50_95;
    j["video_map"] = vm;
    j["errors"] = {{"EL", report.errors.el},
                   {"EC", report.errors.ec},
                   {"ET", report.errors.et},
                   {"EO", report.errors.eo},
                   {"EM", report.errors.em}};
    return j.dump(2);
}

std::string pr_curves_to_csv(const ApReport& report) {
    std::ostringstream os;
    os << "class,recall,precision\n";
    for (const auto& [cls, entry] : report.per_class) {
        for (const PrPoint& p : entry.curve) {
            os << cls << "," << p.recall << "," << p.precision << "\n";
        }
    }
    return os.str();
}

} // namespace point3d
