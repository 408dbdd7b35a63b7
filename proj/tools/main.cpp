// point3d command-line interface.
//
// Exit codes: 0 success, 1 usage, 2 config, 3 data, 4 numeric failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "point3d/config.hpp"
#include "point3d/dataset.hpp"
#include "point3d/error.hpp"
#include "point3d/experiment.hpp"
#include "point3d/gradcheck_suite.hpp"
#include "point3d/kernels.hpp"
#include "point3d/visualize.hpp"

namespace fs = std::filesystem;
using namespace point3d;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    int threads = -1; // -1: leave config value
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "key = value config file");
    cmd->add_option("--set", opts.overrides, "override a config key (key=value), repeatable");
    cmd->add_option("--threads", opts.threads, "cap OpenMP worker threads (0 = hardware)");
}

RunConfig build_config(const CommonOpts& opts) {
    RunConfig cfg = parse_config_file(opts.config_path);
    for (const std::string& kv : opts.overrides) apply_override_kv(cfg, kv);
    if (opts.threads >= 0) cfg.threads = opts.threads;
    cfg.validate();
    kernels::set_max_threads(cfg.threads);
    return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "effective_config.toml");
    if (!os) throw DataError("cannot write effective config into " + dir);
    os << dump_config(cfg);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << text;
}

// Keep the model geometry in sync with the dataset the command consumes.
void adopt_dataset_geometry(RunConfig& cfg, const Dataset& ds) {
    cfg.model.clip_len = ds.config.clip_len;
    cfg.model.input_size = ds.config.frame_size;
    cfg.model.num_knots = ds.config.num_knots;
    if (cfg.model.num_classes < ds.config.num_classes) {
        cfg.model.num_classes = ds.config.num_classes;
    }
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir) {
    RunConfig cfg = build_config(opts);
    Dataset ds = generate_dataset(cfg.synth);
    save_dataset(out_dir, ds);
    echo_config(cfg, out_dir);
    std::printf("wrote %d clips (%d classes, T=%d, %dx%d) to %s\n", cfg.synth.num_clips,
                cfg.synth.num_classes, cfg.synth.clip_len, cfg.synth.frame_size,
                cfg.synth.frame_size, out_dir.c_str());
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& data_dir, const std::string& run_dir) {
    RunConfig cfg = build_config(opts);
    Dataset ds = load_dataset(data_dir);
    adopt_dataset_geometry(cfg, ds);
    cfg.validate();
    echo_config(cfg, run_dir);
    std::ofstream trace(fs::path(run_dir) / "loss_trace.jsonl");
    if (!trace) throw DataError("cannot write loss trace into " + run_dir);
    TrainResult result = train_model(ds, cfg, &trace, run_dir);
    if (!result.trace.empty()) {
        const LossBreakdown& last = result.trace.back();
        std::printf("trained %d steps; final overall loss %.6f (cls %.4f)\n", cfg.train.steps,
                    last.overall, last.cls);
    }
    std::printf("checkpoint: %s\n", (fs::path(run_dir) / "checkpoint_final").string().c_str());
    return 0;
}

int cmd_decode(const CommonOpts& opts, const std::string& data_dir, const std::string& ckpt_dir,
               const std::string& out_path) {
    RunConfig cfg = build_config(opts);
    Checkpoint ck = load_checkpoint(ckpt_dir);
    cfg.model = ck.config;
    Dataset ds = load_dataset(data_dir);
    std::vector<ClipDetections> dets = decode_dataset(ds, ck.params, cfg);
    save_detections_jsonl(out_path, dets);
    size_t n = 0;
    for (const auto& cd : dets) {
        for (const auto& f : cd.per_frame) n += f.size();
    }
    std::printf("decoded %zu detections over %zu clips -> %s\n", n, dets.size(),
                out_path.c_str());
    return 0;
}

int cmd_link(const CommonOpts& opts, const std::string& dets_path, const std::string& out_path) {
    RunConfig cfg = build_config(opts);
    std::vector<ClipDetections> dets = load_detections_jsonl(dets_path);
    std::vector<TubeRecord> tubes = link_dataset(dets, cfg);
    save_tubes_json(out_path, tubes);
    std::printf("linked %zu tubes -> %s\n", tubes.size(), out_path.c_str());
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& data_dir, const std::string& dets_path,
             const std::string& tubes_path, const std::string& out_path,
             const std::string& pr_csv) {
    RunConfig cfg = build_config(opts);
    Dataset ds = load_dataset(data_dir, /*load_videos=*/false);
    std::vector<ClipDetections> dets = load_detections_jsonl(dets_path);
    std::vector<TubeRecord> tubes;
    if (!tubes_path.empty()) tubes = load_tubes_json(tubes_path);
    std::vector<DetRecord> flat = flatten_detections(dets);
    std::vector<FrameGt> gts = dataset_frame_gts(ds);
    std::vector<TubeRecord> gt_tubes = dataset_gt_tubes(ds);
    EvalReport report = evaluate(flat, gts, tubes, gt_tubes, cfg.eval.iou);
    write_text(out_path, report_to_json(report) + "\n");
    if (!pr_csv.empty()) write_text(pr_csv, pr_curves_to_csv(report.frame_ap));
    std::printf("frame-mAP@%.2f %.4f", cfg.eval.iou, report.frame_ap.map);
    for (const auto& [thr, v] : report.video_map) std::printf("  video-mAP@%.2f %.4f", thr, v);
    std::printf("  video-mAP@0.5:0.95 %.4f\n", report.video_map_50_95);
    std::printf("report -> %s\n", out_path.c_str());
    return 0;
}

int cmd_gradcheck(const CommonOpts& opts, int seeds) {
    build_config(opts);
    GradCheckReport report = run_gradcheck_suite(seeds);
    for (const GradCheckEntry& e : report.entries) {
        std::printf("%-42s max err %.3g  (tol %.0e)  %s\n", e.name.c_str(), e.max_err, e.tol,
                    e.pass ? "ok" : "FAIL");
    }
    std::printf("gradient suite finished in %.1f s\n", report.seconds);
    return report.all_pass() ? 0 : 4;
}

int cmd_visualize(const CommonOpts& opts, const std::string& data_dir,
                  const std::string& dets_path, int clip_id, const std::string& out_dir,
                  const std::string& format, bool no_gt) {
    build_config(opts);
    Dataset ds = load_dataset(data_dir);
    const ClipData* clip = nullptr;
    for (const ClipData& c : ds.clips) {
        if (c.id == clip_id) clip = &c;
    }
    if (!clip) throw DataError("clip " + std::to_string(clip_id) + " not found in " + data_dir);
    std::vector<std::vector<Detection>> dets;
    if (!dets_path.empty()) {
        for (const ClipDetections& cd : load_detections_jsonl(dets_path)) {
            if (cd.clip == clip_id) dets = cd.per_frame;
        }
    }
    visualize_clip(out_dir, *clip, dets, !no_gt, format);
    std::printf("wrote %d %s frames to %s\n", clip->video.dim(0), format.c_str(),
                out_dir.c_str());
    return 0;
}

int cmd_inspect_attention(const CommonOpts& opts, const std::string& data_dir,
                          const std::string& ckpt_dir, int clip_id, const std::string& out_path) {
    RunConfig cfg = build_config(opts);
    Checkpoint ck = load_checkpoint(ckpt_dir);
    cfg.model = ck.config;
    Dataset ds = load_dataset(data_dir);
    const ClipData* clip = nullptr;
    for (const ClipData& c : ds.clips) {
        if (c.id == clip_id) clip = &c;
    }
    if (!clip) throw DataError("clip " + std::to_string(clip_id) + " not found in " + data_dir);
    Tensor m = clip_attention(*clip, ck.params, cfg);
    std::ostringstream os;
    for (int i = 0; i < m.dim(0); ++i) {
        for (int j = 0; j < m.dim(1); ++j) {
            os << (j ? "," : "") << m.at(i, j);
        }
        os << "\n";
    }
    write_text(out_path, os.str());
    std::printf("attention matrix (%dx%d) -> %s\n", m.dim(0), m.dim(1), out_path.c_str());
    return 0;
}

// Config sweeps mirroring the component studies: each arm trains on its own
// freshly generated dataset and reports frame/video mAP into a CSV row.
int cmd_ablate(const CommonOpts& opts, const std::string& study, const std::string& out_path) {
    RunConfig base = build_config(opts);

    struct Arm {
        std::string name;
        RunConfig cfg;
    };
    std::vector<Arm> arms;
    if (study == "head3d-input") {
        const bool sel[7][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0},
                                {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
        const char* names[7] = {"features_twa", "raw_clip",          "heatmaps",
                                "features+raw", "features+heatmaps", "raw+heatmaps",
                                "all"};
        for (int i = 0; i < 7; ++i) {
            Arm arm{names[i], base};
            arm.cfg.model.head3d_features = sel[i][0];
            arm.cfg.model.head3d_raw_clip = sel[i][1];
            arm.cfg.model.head3d_heatmaps = sel[i][2];
            arms.push_back(std::move(arm));
        }
    } else if (study == "loss-weights") {
        const double lw[7][2] = {{1, 1}, {1, 5}, {1, 10}, {1, 15}, {5, 1}, {10, 1}, {15, 1}};
        for (auto& [loc, cls] : lw) {
            Arm arm{"loc" + std::to_string(static_cast<int>(loc)) + "_cls" +
                        std::to_string(static_cast<int>(cls)),
                    base};
            arm.cfg.loss.loc = loc;
            arm.cfg.loss.cls = cls;
            arms.push_back(std::move(arm));
        }
    } else if (study == "temporal-length") {
        for (int t : {1, 2, 4, 8}) {
            Arm arm{"T" + std::to_string(t), base};
            arm.cfg.model.clip_len = t;
            arm.cfg.synth.clip_len = t;
            arms.push_back(std::move(arm));
        }
    } else {
        throw ConfigError("unknown study '" + study +
                          "' (expected head3d-input, loss-weights, temporal-length)");
    }

    std::ostringstream csv;
    csv << "arm,frame_map_50,video_map_20,video_map_50,video_map_75,video_map_50_95\n";
    for (Arm& arm : arms) {
        arm.cfg.validate();
        Dataset train_ds = generate_dataset(arm.cfg.synth);
        SynthConfig eval_cfg = arm.cfg.synth;
        eval_cfg.seed = arm.cfg.synth.seed + 7777;
        eval_cfg.num_clips = std::max(arm.cfg.synth.num_clips / 4, 8);
        Dataset eval_ds = generate_dataset(eval_cfg);
        TrainResult tr = train_model(train_ds, arm.cfg);
        EvalReport rep = evaluate_model(eval_ds, tr.params, arm.cfg);
        csv << arm.name << "," << rep.frame_ap.map;
        for (const auto& [thr, v] : rep.video_map) csv << "," << v;
        csv << "," << rep.video_map_50_95 << "\n";
        std::printf("[%s] frame-mAP %.4f\n", arm.name.c_str(), rep.frame_ap.map);
    }
    write_text(out_path, csv.str());
    std::printf("comparison table -> %s\n", out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point3D: anchor-free spatio-temporal action detection on synthetic video"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string out_dir, data_dir, ckpt_dir, dets_path, tubes_path, out_path, pr_csv, format,
        study;
    int clip_id = 0, seeds = 20;
    bool no_gt = false;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, opts);
    synth->add_option("-o,--out", out_dir, "output dataset directory")->required();

    CLI::App* train = app.add_subcommand("train", "train the model on a dataset");
    add_common(train, opts);
    train->add_option("-d,--data", data_dir, "dataset directory")->required();
    train->add_option("-o,--out", out_dir, "run directory")->required();

    CLI::App* decode = app.add_subcommand("decode", "decode per-frame detections");
    add_common(decode, opts);
    decode->add_option("-d,--data", data_dir, "dataset directory")->required();
    decode->add_option("-k,--ckpt", ckpt_dir, "checkpoint directory")->required();
    decode->add_option("-o,--out", out_path, "detections JSONL path")->required();

    CLI::App* link = app.add_subcommand("link", "link detections into tubes");
    add_common(link, opts);
    link->add_option("--dets", dets_path, "detections JSONL")->required();
    link->add_option("-o,--out", out_path, "tubes JSON path")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate detections and tubes");
    add_common(eval_cmd, opts);
    eval_cmd->add_option("-d,--data", data_dir, "dataset directory (ground truth)")->required();
    eval_cmd->add_option("--dets", dets_path, "detections JSONL")->required();
    eval_cmd->add_option("--tubes", tubes_path, "tubes JSON (optional)");
    eval_cmd->add_option("-o,--out", out_path, "report JSON path")->required();
    eval_cmd->add_option("--pr-csv", pr_csv, "write PR curves CSV");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the gradient-check suite");
    add_common(gradcheck, opts);
    gradcheck->add_option("--seeds", seeds, "random seeds per check (default 20)");

    CLI::App* ablate = app.add_subcommand("ablate", "run a config sweep and emit a CSV table");
    add_common(ablate, opts);
    ablate->add_option("--study", study, "head3d-input | loss-weights | temporal-length")
        ->required();
    ablate->add_option("-o,--out", out_path, "CSV output path")->required();

    CLI::App* viz = app.add_subcommand("visualize", "overlay boxes/knots on frames");
    add_common(viz, opts);
    viz->add_option("-d,--data", data_dir, "dataset directory")->required();
    viz->add_option("--dets", dets_path, "detections JSONL (optional)");
    viz->add_option("--clip", clip_id, "clip id")->required();
    viz->add_option("-o,--out", out_dir, "output directory")->required();
    viz->add_option("--format", format, "ppm | svg")->default_val("ppm");
    viz->add_flag("--no-gt", no_gt, "skip ground-truth boxes");

    CLI::App* attn = app.add_subcommand("inspect-attention", "dump the TWA matrix as CSV");
    add_common(attn, opts);
    attn->add_option("-d,--data", data_dir, "dataset directory")->required();
    attn->add_option("-k,--ckpt", ckpt_dir, "checkpoint directory")->required();
    attn->add_option("--clip", clip_id, "clip id")->required();
    attn->add_option("-o,--out", out_path, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(opts, out_dir);
        if (train->parsed()) return cmd_train(opts, data_dir, out_dir);
        if (decode->parsed()) return cmd_decode(opts, data_dir, ckpt_dir, out_path);
        if (link->parsed()) return cmd_link(opts, dets_path, out_path);
        if (eval_cmd->parsed()) {
            return cmd_eval(opts, data_dir, dets_path, tubes_path, out_path, pr_csv);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(opts, seeds);
        if (ablate->parsed()) return cmd_ablate(opts, study, out_path);
        if (viz->parsed()) {
            return cmd_visualize(opts, data_dir, dets_path, clip_id, out_dir, format, no_gt);
        }
        if (attn->parsed()) {
            return cmd_inspect_attention(opts, data_dir, ckpt_dir, clip_id, out_path);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
