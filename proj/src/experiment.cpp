#include "point3d/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "point3d/error.hpp"
#include "point3d/rng.hpp"

namespace point3d {

namespace fs = std::filesystem;

namespace {

void check_dataset_matches(const Dataset& ds, const ModelConfig& m) {
    if (ds.clips.empty()) throw DataError("dataset has no clips");
    if (ds.config.clip_len != m.clip_len) {
        throw ConfigError("dataset clip_len " + std::to_string(ds.config.clip_len) +
                          " does not match model.clip_len " + std::to_string(m.clip_len));
    }
    if (ds.config.frame_size != m.input_size) {
        throw ConfigError("dataset frame_size " + std::to_string(ds.config.frame_size) +
                          " does not match model.input_size " + std::to_string(m.input_size));
    }
    if (ds.config.num_knots != m.num_knots) {
        throw ConfigError("dataset num_knots " + std::to_string(ds.config.num_knots) +
                          " does not match model.num_knots " + std::to_string(m.num_knots));
    }
    if (ds.config.num_classes > m.num_classes) {
        throw ConfigError("dataset has more classes than model.num_classes");
    }
}

int argmax_class(const Tensor& logits) {
    int best = 0;
    for (int i = 1; i < logits.dim(0); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

} // namespace

std::string loss_breakdown_jsonl(const LossBreakdown& bd) {
    nlohmann::json j;
    j["step"] = bd.step;
    j["l_cp_h"] = bd.cp_h;
    j["l_cp_s"] = bd.cp_s;
    j["l_cp_o"] = bd.cp_o;
    j["l_kp"] = bd.kp;
    j["l_cls"] = bd.cls;
    j["l_overall"] = bd.overall;
    return j.dump();
}

TrainResult train_model(const Dataset& train_ds, const RunConfig& cfg, std::ostream* jsonl_trace,
                        const std::string& run_dir) {
    cfg.validate();
    check_dataset_matches(train_ds, cfg.model);

    TrainResult result;
    result.params = init_parameters(cfg.model);
    AdamState opt;
    Rng sampler(cfg.train.seed);
    const int n = static_cast<int>(train_ds.clips.size());
    std::string nan_dir = run_dir.empty() ? "" : (fs::path(run_dir) / "nan_dump").string();

    for (int step = 0; step < cfg.train.steps; ++step) {
        std::vector<TrainItem> batch;
        for (int b = 0; b < cfg.train.batch_size; ++b) {
            const ClipData& clip = train_ds.clips[static_cast<size_t>(sampler.uniform_int(0, n - 1))];
            batch.push_back(TrainItem{&clip.video, &clip.frames, clip.label});
        }
        LossBreakdown bd = train_step(batch, result.params, opt, cfg.model, cfg.loss, {}, nan_dir);
        bd.step = step;
        if (cfg.train.log_every > 0 && step % cfg.train.log_every == 0) {
            if (jsonl_trace) (*jsonl_trace) << loss_breakdown_jsonl(bd) << "\n";
        }
        result.trace.push_back(bd);
        if (!run_dir.empty() && cfg.train.checkpoint_every > 0 &&
            (step + 1) % cfg.train.checkpoint_every == 0) {
            save_checkpoint((fs::path(run_dir) / ("checkpoint_step" + std::to_string(step + 1)))
                                .string(),
                            result.params, cfg.model, step + 1);
        }
    }
    if (!run_dir.empty()) {
        save_checkpoint((fs::path(run_dir) / "checkpoint_final").string(), result.params,
                        cfg.model, cfg.train.steps);
    }
    return result;
}

std::vector<ClipDetections> decode_dataset(const Dataset& ds, const Parameters& params,
                                           const RunConfig& cfg) {
    check_dataset_matches(ds, cfg.model);
    std::vector<ClipDetections> out;
    out.reserve(ds.clips.size());
    for (const ClipData& clip : ds.clips) {
        if (clip.video.empty()) {
            throw DataError("decode: clip " + std::to_string(clip.id) + " has no video tensor");
        }
        Tape tape;
        ParamVars pv = declare_params(tape, params);
        ClipForward fwd = forward_clip(tape, clip.video, pv, params, cfg.model);
        int cls = argmax_class(tape.value(fwd.logits));

        ClipDetections cd;
        cd.clip = clip.id;
        cd.per_frame.resize(static_cast<size_t>(cfg.model.clip_len));
        for (int t = 0; t < cfg.model.clip_len; ++t) {
            CPOutputs cp = cp_outputs(tape, fwd, t);
            std::vector<Detection> dets = decode_boxes(cp, cfg.decode, cfg.model.stride);
            if (cfg.decode.use_knots && !dets.empty()) {
                KPOutputs kp = kp_outputs(tape, fwd, t);
                for (Detection& d : dets) d = refine_with_knots(d, kp, cfg.decode, cfg.model.stride);
            }
            for (Detection& d : dets) {
                d.frame = t;
                d.class_id = cls;
            }
            cd.per_frame[static_cast<size_t>(t)] = std::move(dets);
        }
        out.push_back(std::move(cd));
    }
    return out;
}

std::vector<TubeRecord> link_dataset(const std::vector<ClipDetections>& dets,
                                     const RunConfig& cfg) {
    std::vector<TubeRecord> out;
    for (const ClipDetections& cd : dets) {
        if (cd.per_frame.empty()) continue;
        std::vector<Tube> tubes = viterbi_link(cd.per_frame, cfg.link.max_tubes, cfg.link.beta);
        for (Tube& t : tubes) {
            if (t.dets.empty()) continue;
            t.class_id = t.dets.front().class_id;
            out.push_back(TubeRecord{cd.clip, std::move(t)});
        }
    }
    return out;
}

EvalReport evaluate_model(const Dataset& eval_ds, const Parameters& params,
                          const RunConfig& cfg) {
    std::vector<ClipDetections> dets = decode_dataset(eval_ds, params, cfg);
    std::vector<TubeRecord> tubes = link_dataset(dets, cfg);
    std::vector<DetRecord> flat = flatten_detections(dets);
    std::vector<FrameGt> gts = dataset_frame_gts(eval_ds);
    std::vector<TubeRecord> gt_tubes = dataset_gt_tubes(eval_ds);
    return evaluate(flat, gts, tubes, gt_tubes, cfg.eval.iou);
}

Tensor clip_attention(const ClipData& clip, const Parameters& params, const RunConfig& cfg) {
    if (!cfg.model.use_twa) {
        throw ConfigError("clip_attention: model was configured without TWA");
    }
    Tape tape;
    ParamVars pv = declare_params(tape, params);
    ClipForward fwd = forward_clip(tape, clip.video, pv, params, cfg.model);
    return tape.value(fwd.attention);
}

} // namespace point3d
