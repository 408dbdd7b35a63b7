#include "point3d/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "point3d/error.hpp"
#include "point3d/io.hpp"

namespace point3d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string clip_filename(int id) {
    std::ostringstream os;
    os << "clips/clip_" << std::setw(4) << std::setfill('0') << id << ".ptk1";
    return os.str();
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw DataError("annotation box must be [x1,y1,x2,y2]");
    return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json write_json_or_throw(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
    if (!os) throw DataError("write failed for " + path);
    return j;
}

json read_json_or_throw(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

} // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "clips");
    json root;
    root["num_classes"] = ds.config.num_classes;
    root["num_knots"] = ds.config.num_knots;
    root["clip_len"] = ds.config.clip_len;
    root["frame_size"] = ds.config.frame_size;
    root["clips"] = json::array();
    for (const ClipData& clip : ds.clips) {
        std::string rel = clip_filename(clip.id);
        if (!clip.video.empty()) {
            save_tensor((fs::path(dir) / rel).string(), clip.video);
        }
        json jc;
        jc["id"] = clip.id;
        jc["video"] = rel;
        jc["label"] = clip.label;
        jc["action_range"] = json::array({clip.action_begin, clip.action_end});
        jc["frames"] = json::array();
        for (const auto& frame : clip.frames) {
            json jf;
            jf["actors"] = json::array();
            for (const ActorAnnotation& a : frame) {
                json ja;
                ja["box"] = box_to_json(a.box);
                json knots = json::array();
                for (const Point2& p : a.knots) knots.push_back(json::array({p.x, p.y}));
                ja["knots"] = knots;
                ja["class"] = a.class_id;
                ja["actor_id"] = a.actor_id;
                jf["actors"].push_back(std::move(ja));
            }
            jc["frames"].push_back(std::move(jf));
        }
        root["clips"].push_back(std::move(jc));
    }
    write_json_or_throw((fs::path(dir) / "annotations.json").string(), root);
}

Dataset load_dataset(const std::string& dir, bool load_videos) {
    json root = read_json_or_throw((fs::path(dir) / "annotations.json").string());
    if (!root.contains("clips") || !root["clips"].is_array()) {
        throw DataError("annotations.json: missing clips array");
    }
    Dataset ds;
    int max_class = 0;
    size_t knots_seen = 0;
    for (const json& jc : root["clips"]) {
        ClipData clip;
        clip.id = jc.at("id").get<int>();
        clip.label = jc.at("label").get<int>();
        const json& jframes = jc.at("frames");
        clip.action_begin = 0;
        clip.action_end = static_cast<int>(jframes.size()) - 1;
        if (jc.contains("action_range")) {
            clip.action_begin = jc["action_range"][0].get<int>();
            clip.action_end = jc["action_range"][1].get<int>();
        }
        for (const json& jf : jframes) {
            std::vector<ActorAnnotation> actors;
            for (const json& ja : jf.at("actors")) {
                ActorAnnotation a;
                a.box = box_from_json(ja.at("box"));
                for (const json& jp : ja.at("knots")) {
                    a.knots.push_back(Point2{jp[0].get<double>(), jp[1].get<double>()});
                }
                a.class_id = ja.at("class").get<int>();
                a.actor_id = ja.at("actor_id").get<int>();
                max_class = std::max(max_class, a.class_id);
                knots_seen = std::max(knots_seen, a.knots.size());
                actors.push_back(std::move(a));
            }
            clip.frames.push_back(std::move(actors));
        }
        if (load_videos && jc.contains("video")) {
            fs::path vp = fs::path(dir) / jc["video"].get<std::string>();
            if (fs::exists(vp)) clip.video = load_tensor(vp.string());
        }
        ds.clips.push_back(std::move(clip));
    }
    ds.config.num_clips = static_cast<int>(ds.clips.size());
    ds.config.num_classes = root.value("num_classes", max_class + 1);
    ds.config.num_knots = root.value("num_knots", static_cast<int>(knots_seen));
    if (!ds.clips.empty()) {
        ds.config.clip_len =
            root.value("clip_len", static_cast<int>(ds.clips.front().frames.size()));
        int fallback = ds.clips.front().video.empty() ? 0 : ds.clips.front().video.dim(2);
        ds.config.frame_size = root.value("frame_size", fallback);
    }
    return ds;
}

void save_detections_jsonl(const std::string& path, const std::vector<ClipDetections>& dets) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (const ClipDetections& cd : dets) {
        for (size_t f = 0; f < cd.per_frame.size(); ++f) {
            for (const Detection& d : cd.per_frame[f]) {
                json j;
                j["clip"] = cd.clip;
                j["frame"] = static_cast<int>(f);
                j["box"] = box_to_json(d.box);
                j["score"] = d.score;
                j["class"] = d.class_id;
                json knots = json::array();
                for (const Point2& p : d.knots) knots.push_back(json::array({p.x, p.y}));
                j["knots"] = knots;
                os << j.dump() << "\n";
            }
        }
    }
}

std::vector<ClipDetections> load_detections_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    std::map<int, std::map<int, std::vector<Detection>>> by_clip;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Detection d;
        d.frame = j.at("frame").get<int>();
        d.box = box_from_json(j.at("box"));
        d.score = j.at("score").get<double>();
        d.class_id = j.at("class").get<int>();
        if (j.contains("knots")) {
            for (const json& jp : j["knots"]) {
                d.knots.push_back(Point2{jp[0].get<double>(), jp[1].get<double>()});
            }
        }
        by_clip[j.at("clip").get<int>()][d.frame].push_back(std::move(d));
    }
    std::vector<ClipDetections> out;
    for (auto& [clip, frames] : by_clip) {
        ClipDetections cd;
        cd.clip = clip;
        int max_frame = frames.empty() ? -1 : frames.rbegin()->first;
        cd.per_frame.assign(static_cast<size_t>(max_frame) + 1, {});
        for (auto& [f, v] : frames) cd.per_frame[static_cast<size_t>(f)] = std::move(v);
        out.push_back(std::move(cd));
    }
    return out;
}

void save_tubes_json(const std::string& path, const std::vector<TubeRecord>& tubes) {
    json root;
    root["tubes"] = json::array();
    for (const TubeRecord& tr : tubes) {
        json jt;
        jt["clip"] = tr.clip;
        jt["class"] = tr.tube.class_id;
        jt["score"] = tr.tube.score;
        jt["frames"] = json::array();
        for (const Detection& d : tr.tube.dets) {
            jt["frames"].push_back(
                {{"frame", d.frame}, {"box", box_to_json(d.box)}, {"score", d.score}});
        }
        root["tubes"].push_back(std::move(jt));
    }
    write_json_or_throw(path, root);
}

std::vector<TubeRecord> load_tubes_json(const std::string& path) {
    json root = read_json_or_throw(path);
    std::vector<TubeRecord> out;
    for (const json& jt : root.at("tubes")) {
        TubeRecord tr;
        tr.clip = jt.at("clip").get<int>();
        tr.tube.class_id = jt.at("class").get<int>();
        tr.tube.score = jt.at("score").get<double>();
        for (const json& jf : jt.at("frames")) {
            Detection d;
            d.frame = jf.at("frame").get<int>();
            d.box = box_from_json(jf.at("box"));
            d.score = jf.at("score").get<double>();
            d.class_id = tr.tube.class_id;
            tr.tube.dets.push_back(std::move(d));
        }
        out.push_back(std::move(tr));
    }
    return out;
}

std::vector<FrameGt> dataset_frame_gts(const Dataset& ds) {
    std::vector<FrameGt> out;
    for (const ClipData& clip : ds.clips) {
        for (int t = 0; t < static_cast<int>(clip.frames.size()); ++t) {
            bool inside = t >= clip.action_begin && t <= clip.action_end;
            for (const ActorAnnotation& a : clip.frames[static_cast<size_t>(t)]) {
                out.push_back(FrameGt{clip.id, t, a.box, a.class_id, a.actor_id, inside});
            }
        }
    }
    return out;
}

std::vector<TubeRecord> dataset_gt_tubes(const Dataset& ds) {
    std::vector<TubeRecord> out;
    for (const ClipData& clip : ds.clips) {
        std::map<int, Tube> tubes;
        for (int t = clip.action_begin; t <= clip.action_end; ++t) {
            if (t < 0 || t >= static_cast<int>(clip.frames.size())) continue;
            for (const ActorAnnotation& a : clip.frames[static_cast<size_t>(t)]) {
                Detection d;
                d.frame = t;
                d.box = a.box;
                d.score = 1.0;
                d.class_id = a.class_id;
                Tube& tube = tubes[a.actor_id];
                tube.class_id = a.class_id;
                tube.dets.push_back(std::move(d));
            }
        }
        for (auto& [actor, tube] : tubes) {
            tube.score = 1.0;
            out.push_back(TubeRecord{clip.id, std::move(tube)});
        }
    }
    return out;
}

std::vector<DetRecord> flatten_detections(const std::vector<ClipDetections>& dets) {
    std::vector<DetRecord> out;
    for (const ClipDetections& cd : dets) {
        for (size_t f = 0; f < cd.per_frame.size(); ++f) {
            for (const Detection& d : cd.per_frame[f]) {
                out.push_back(
                    DetRecord{cd.clip, static_cast<int>(f), d.box, d.score, d.class_id});
            }
        }
    }
    return out;
}

} // namespace point3d
