#include "point3d/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "point3d/error.hpp"
#include "point3d/io.hpp"
#include "point3d/kernels.hpp"
#include "point3d/rng.hpp"
#include "point3d/twa.hpp"

namespace point3d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kHeatmapBiasInit = -2.19; // sigmoid^-1(~0.1)

int mid_channels(const ModelConfig& cfg) { return std::max(cfg.channels / 2, 4); }
int head_hidden(const ModelConfig& cfg) { return std::max(cfg.channels / 2, 4); }
int backbone3d_channels(const ModelConfig& cfg) { return std::clamp(cfg.channels, 4, 32); }

int head3d_in_channels(const ModelConfig& cfg) {
    int c = 0;
    if (cfg.head3d_features) c += cfg.channels;
    if (cfg.head3d_raw_clip) c += 3;
    if (cfg.head3d_heatmaps) c += 1 + cfg.num_knots;
    return c;
}

Tensor uniform_init(Rng& rng, std::vector<int> shape, int fan_in) {
    // ReLU-gain uniform init: var = 2/fan_in keeps activation variance flat
    // through the stack, which the fixed SGD learning rate of the 3D head
    // depends on.
    Tensor t(std::move(shape));
    double a = std::sqrt(6.0 / std::max(fan_in, 1));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-a, a);
    return t;
}

Tensor slice_frame(const Tensor& clip, int t) {
    const int c = clip.dim(1), h = clip.dim(2), w = clip.dim(3);
    Tensor frame({c, h, w});
    const int64_t plane = static_cast<int64_t>(c) * h * w;
    std::copy(clip.data() + t * plane, clip.data() + (t + 1) * plane, frame.data());
    return frame;
}

const char* group_tag(OptimGroup g) {
    return g == OptimGroup::point_head ? "point_head" : "head3d";
}

OptimGroup group_from_tag(const std::string& tag) {
    if (tag == "point_head") return OptimGroup::point_head;
    if (tag == "head3d") return OptimGroup::head3d;
    throw DataError("checkpoint: unknown optimizer group tag '" + tag + "'");
}

struct BranchVars {
    Var conv_w, conv_b, out_w, out_b;
};

struct ParamIndex {
    // Offsets into Parameters::items / ParamVars::vars by name lookup once.
    const Parameters* params;
    const ParamVars* pv;

    Var operator[](const std::string& name) const {
        for (size_t i = 0; i < params->items.size(); ++i) {
            if (params->items[i].name == name) return pv->vars[i];
        }
        throw ContractError("model: unknown parameter " + name);
    }
};

Var dense(Tape& tape, Var x, Var w, Var b) {
    const int in = tape.value(x).dim(0);
    const int out = tape.value(w).dim(1);
    Var y = tape.matmul(tape.reshape(x, {1, in}), w);
    y = tape.add(y, tape.reshape(b, {1, out}));
    return tape.reshape(y, {out});
}

// 3x3 conv + ReLU + 1x1 conv, the shared Point Head branch shape.
Var head_branch(Tape& tape, Var features, const BranchVars& b, bool apply_sigmoid) {
    Var h = tape.relu(tape.add_channel_bias(tape.conv2d(features, b.conv_w, 1, 1), b.conv_b));
    Var out = tape.add_channel_bias(tape.conv2d(h, b.out_w, 1, 0), b.out_b);
    return apply_sigmoid ? tape.sigmoid(out) : out;
}

} // namespace

void ModelConfig::validate() const {
    if (input_size <= 0 || stride <= 0 || input_size % stride != 0) {
        throw ConfigError("model: stride must divide input_size");
    }
    if (clip_len < 1) throw ConfigError("model: clip_len must be >= 1");
    if (channels < 1 || num_knots < 1 || num_classes < 2) {
        throw ConfigError("model: channels >= 1, num_knots >= 1, num_classes >= 2 required");
    }
    if (!head3d_features && !head3d_raw_clip && !head3d_heatmaps) {
        throw ConfigError("model: head3d input selection is empty");
    }
}

const Param& Parameters::find(const std::string& name) const {
    for (const Param& p : items) {
        if (p.name == name) return p;
    }
    throw ContractError("Parameters: unknown parameter " + name);
}

Param& Parameters::find(const std::string& name) {
    for (Param& p : items) {
        if (p.name == name) return p;
    }
    throw ContractError("Parameters: unknown parameter " + name);
}

Parameters init_parameters(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int mid = mid_channels(cfg), c = cfg.channels, hidden = head_hidden(cfg);
    const int k = cfg.num_knots, c3d = backbone3d_channels(cfg);
    const int cin3d = head3d_in_channels(cfg);

    Parameters p;
    auto add = [&](const std::string& name, Tensor value, OptimGroup g) {
        p.items.push_back(Param{name, std::move(value), g});
    };
    auto conv = [&](const std::string& name, int cout, int cin, int kh, int kw, OptimGroup g,
                    double bias_init = 0.0) {
        add(name + ".w", uniform_init(rng, {cout, cin, kh, kw}, cin * kh * kw), g);
        add(name + ".b", Tensor::full({cout}, bias_init), g);
    };

    conv("extractor.conv1", mid, 3, 3, 3, OptimGroup::point_head);
    conv("extractor.conv2", c, mid, 3, 3, OptimGroup::point_head);

    auto branch = [&](const std::string& name, int out_ch, double out_bias) {
        conv("head." + name + ".conv", hidden, c, 3, 3, OptimGroup::point_head);
        conv("head." + name + ".out", out_ch, hidden, 1, 1, OptimGroup::point_head, out_bias);
    };
    branch("cp_heat", 1, kHeatmapBiasInit);
    // The shape output is scaled by the stride in the forward pass; bias 4
    // starts the prediction at a typical box size (4 * stride px).
    branch("cp_shape", 2, 4.0);
    branch("cp_offset", 2, 0.0);
    branch("kp_heat", k, kHeatmapBiasInit);
    branch("kp_dist", 2 * k, 0.0);
    branch("kp_offset", 2, 0.0);

    add("head3d.conv1.w", uniform_init(rng, {c3d, cin3d, 3, 3, 3}, cin3d * 27),
        OptimGroup::head3d);
    add("head3d.conv1.b", Tensor({c3d}), OptimGroup::head3d);
    add("head3d.conv2.w", uniform_init(rng, {c3d, c3d, 3, 3, 3}, c3d * 27), OptimGroup::head3d);
    add("head3d.conv2.b", Tensor({c3d}), OptimGroup::head3d);
    add("head3d.mix1.w", uniform_init(rng, {c3d, c3d}, c3d), OptimGroup::head3d);
    add("head3d.mix1.b", Tensor({c3d}), OptimGroup::head3d);
    add("head3d.mix2.w", uniform_init(rng, {c3d, c3d}, c3d), OptimGroup::head3d);
    add("head3d.mix2.b", Tensor({c3d}), OptimGroup::head3d);
    add("head3d.fc.w", uniform_init(rng, {c3d, cfg.num_classes}, c3d), OptimGroup::head3d);
    add("head3d.fc.b", Tensor({cfg.num_classes}), OptimGroup::head3d);
    return p;
}

ParamVars declare_params(Tape& tape, const Parameters& params) {
    ParamVars pv;
    pv.vars.reserve(params.items.size());
    for (const Param& p : params.items) {
        pv.vars.push_back(tape.input(p.value));
    }
    return pv;
}

ClipForward forward_clip(Tape& tape, const Tensor& clip, const ParamVars& pv,
                         const Parameters& params, const ModelConfig& cfg) {
    cfg.validate();
    if (clip.rank() != 4 || clip.dim(0) != cfg.clip_len || clip.dim(1) != 3 ||
        clip.dim(2) != cfg.input_size || clip.dim(3) != cfg.input_size) {
        std::ostringstream os;
        os << "forward_clip: clip " << clip.shape_str() << " does not match config (T="
           << cfg.clip_len << ", 3x" << cfg.input_size << "x" << cfg.input_size << ")";
        throw DimensionError(os.str());
    }
    ParamIndex idx{&params, &pv};
    const int g = cfg.grid();
    const int k = cfg.num_knots;

    BranchVars cp_heat{idx["head.cp_heat.conv.w"], idx["head.cp_heat.conv.b"],
                       idx["head.cp_heat.out.w"], idx["head.cp_heat.out.b"]};
    BranchVars cp_shape{idx["head.cp_shape.conv.w"], idx["head.cp_shape.conv.b"],
                        idx["head.cp_shape.out.w"], idx["head.cp_shape.out.b"]};
    BranchVars cp_offset{idx["head.cp_offset.conv.w"], idx["head.cp_offset.conv.b"],
                         idx["head.cp_offset.out.w"], idx["head.cp_offset.out.b"]};
    BranchVars kp_heat{idx["head.kp_heat.conv.w"], idx["head.kp_heat.conv.b"],
                       idx["head.kp_heat.out.w"], idx["head.kp_heat.out.b"]};
    BranchVars kp_dist{idx["head.kp_dist.conv.w"], idx["head.kp_dist.conv.b"],
                       idx["head.kp_dist.out.w"], idx["head.kp_dist.out.b"]};
    BranchVars kp_offset{idx["head.kp_offset.conv.w"], idx["head.kp_offset.conv.b"],
                         idx["head.kp_offset.out.w"], idx["head.kp_offset.out.b"]};

    Var e1w = idx["extractor.conv1.w"], e1b = idx["extractor.conv1.b"];
    Var e2w = idx["extractor.conv2.w"], e2b = idx["extractor.conv2.b"];

    ClipForward fwd;
    std::vector<Var> frame_feats, heatmap_stacks, raw_stacks;
    for (int t = 0; t < cfg.clip_len; ++t) {
        Var x = tape.constant(slice_frame(clip, t));
        Var h1 = tape.relu(tape.add_channel_bias(tape.conv2d(x, e1w, 2, 1), e1b));
        Var feat = tape.relu(tape.add_channel_bias(tape.conv2d(h1, e2w, 2, 1), e2b));

        CpPredVars cp;
        cp.heatmap = head_branch(tape, feat, cp_heat, true);
        // Shape targets are whole-box sizes in input pixels; predicting them
        // in stride units keeps this branch on the same scale as the others.
        cp.shape = tape.scale(head_branch(tape, feat, cp_shape, false), cfg.stride);
        cp.offset = head_branch(tape, feat, cp_offset, false);
        KpPredVars kpv;
        kpv.heatmap = head_branch(tape, feat, kp_heat, true);
        kpv.distance = head_branch(tape, feat, kp_dist, false);
        kpv.offset = head_branch(tape, feat, kp_offset, false);
        fwd.cp.push_back(cp);
        fwd.kp.push_back(kpv);

        frame_feats.push_back(tape.reshape(feat, {1, cfg.channels, g, g}));
        if (cfg.head3d_heatmaps) {
            std::vector<Var> maps{cp.heatmap, kpv.heatmap};
            heatmap_stacks.push_back(tape.reshape(tape.concat0(maps), {1, 1 + k, g, g}));
        }
        if (cfg.head3d_raw_clip) {
            raw_stacks.push_back(tape.constant(
                Tensor({1, 3, g, g}, kernels::avg_pool2d(slice_frame(clip, t), cfg.stride).vec())));
        }
    }

    fwd.features = tape.concat0(frame_feats);
    if (cfg.use_twa) {
        TwaResult twa = twa_forward(tape, fwd.features, cfg.twa_use_raw_gram);
        fwd.twa_out = twa.output;
        fwd.attention = twa.attention;
    } else {
        fwd.twa_out = fwd.features;
        fwd.attention = Var{};
    }

    std::vector<Var> parts;
    if (cfg.head3d_features) parts.push_back(fwd.twa_out);
    if (cfg.head3d_raw_clip) parts.push_back(tape.concat0(raw_stacks));
    if (cfg.head3d_heatmaps) parts.push_back(tape.concat0(heatmap_stacks));
    Var combined = parts.size() == 1 ? parts[0] : tape.concat1(parts);

    Var volume = tape.swap01(combined); // C' x T x H' x W'
    Var z1 = tape.relu(tape.add_channel_bias(tape.conv3d(volume, idx["head3d.conv1.w"], 2, 1),
                                             idx["head3d.conv1.b"]));
    Var z2 = tape.relu(tape.add_channel_bias(tape.conv3d(z1, idx["head3d.conv2.w"], 2, 1),
                                             idx["head3d.conv2.b"]));
    Var pooled = tape.global_avg_pool(z2);
    Var a1 = tape.relu(dense(tape, pooled, idx["head3d.mix1.w"], idx["head3d.mix1.b"]));
    Var a2 = tape.relu(dense(tape, a1, idx["head3d.mix2.w"], idx["head3d.mix2.b"]));
    fwd.logits = dense(tape, a2, idx["head3d.fc.w"], idx["head3d.fc.b"]);
    return fwd;
}

CPOutputs cp_outputs(const Tape& tape, const ClipForward& fwd, int frame) {
    const auto& cp = fwd.cp[static_cast<size_t>(frame)];
    return CPOutputs{tape.value(cp.heatmap), tape.value(cp.shape), tape.value(cp.offset)};
}

KPOutputs kp_outputs(const Tape& tape, const ClipForward& fwd, int frame) {
    const auto& kp = fwd.kp[static_cast<size_t>(frame)];
    return KPOutputs{tape.value(kp.heatmap), tape.value(kp.distance), tape.value(kp.offset)};
}

namespace {

void dump_nonfinite(const Tape& tape, const ClipForward& fwd, const std::string& dir,
                    std::ostringstream& report) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    auto dump = [&](Var v, const std::string& name) {
        if (!v.valid()) return;
        const Tensor& t = tape.value(v);
        if (!t.all_finite()) {
            save_tensor((fs::path(dir) / (name + ".ptk1")).string(), t);
            report << " " << name;
        }
    };
    for (size_t t = 0; t < fwd.cp.size(); ++t) {
        std::string f = "frame" + std::to_string(t);
        dump(fwd.cp[t].heatmap, f + ".cp_heatmap");
        dump(fwd.cp[t].shape, f + ".cp_shape");
        dump(fwd.cp[t].offset, f + ".cp_offset");
        dump(fwd.kp[t].heatmap, f + ".kp_heatmap");
        dump(fwd.kp[t].distance, f + ".kp_distance");
        dump(fwd.kp[t].offset, f + ".kp_offset");
    }
    dump(fwd.logits, "logits");
}

} // namespace

LossBreakdown train_step(std::span<const TrainItem> batch, Parameters& params, AdamState& opt,
                         const ModelConfig& cfg, const LossWeights& weights,
                         const OptimizerConfig& opt_cfg, const std::string& nan_dump_dir) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    weights.validate();

    Tape tape;
    ParamVars pv = declare_params(tape, params);
    LossBreakdown bd;

    std::vector<Var> batch_losses;
    std::vector<ClipForward> fwds;
    for (const TrainItem& item : batch) {
        ClipForward fwd = forward_clip(tape, *item.clip, pv, params, cfg);
        std::vector<Var> frame_loc;
        for (int t = 0; t < cfg.clip_len; ++t) {
            FrameTargets targets = render_frame_targets((*item.frames)[static_cast<size_t>(t)],
                                                        cfg.num_knots, cfg.input_size,
                                                        cfg.input_size, cfg.stride);
            CpLossVars cl = cp_loss(tape, fwd.cp[static_cast<size_t>(t)], targets, weights);
            KpLossVars kl =
                kp_loss(tape, fwd.kp[static_cast<size_t>(t)], targets, weights, cfg.num_knots);
            frame_loc.push_back(tape.add(cl.total, kl.total));
            bd.cp_h += tape.value(cl.heatmap)[0];
            bd.cp_s += tape.value(cl.shape)[0];
            bd.cp_o += tape.value(cl.offset)[0];
            bd.kp += tape.value(kl.total)[0];
        }
        Var cls = cls_loss(tape, fwd.logits, item.label);
        bd.cls += tape.value(cls)[0];
        batch_losses.push_back(overall_loss(tape, frame_loc, cls, weights));
        fwds.push_back(std::move(fwd));
    }

    Var total = batch_losses[0];
    for (size_t i = 1; i < batch_losses.size(); ++i) total = tape.add(total, batch_losses[i]);
    total = tape.scale(total, 1.0 / static_cast<double>(batch_losses.size()));

    const double denom = static_cast<double>(batch.size());
    bd.cp_h /= denom * cfg.clip_len;
    bd.cp_s /= denom * cfg.clip_len;
    bd.cp_o /= denom * cfg.clip_len;
    bd.kp /= denom * cfg.clip_len;
    bd.cls /= denom;
    bd.overall = tape.value(total)[0];

    if (!std::isfinite(bd.overall)) {
        std::ostringstream report;
        report << "train_step: non-finite loss " << bd.overall << "; offending tensors:";
        for (const ClipForward& fwd : fwds) dump_nonfinite(tape, fwd, nan_dump_dir, report);
        if (!nan_dump_dir.empty()) report << " (dumped to " << nan_dump_dir << ")";
        throw NumericError(report.str());
    }

    tape.backward(total);

    if (opt.m.empty()) {
        opt.m.assign(params.items.size(), Tensor{});
        opt.v.assign(params.items.size(), Tensor{});
        opt.sgd_velocity.assign(params.items.size(), Tensor{});
    }
    ++opt.step;
    const double bias1 = 1.0 - std::pow(opt_cfg.adam_beta1, static_cast<double>(opt.step));
    const double bias2 = 1.0 - std::pow(opt_cfg.adam_beta2, static_cast<double>(opt.step));

    for (size_t i = 0; i < params.items.size(); ++i) {
        Param& p = params.items[i];
        const Tensor& g = tape.grad(pv.vars[i]);
        if (p.group == OptimGroup::head3d) {
            if (g.empty()) continue;
            Tensor& vel = opt.sgd_velocity[i];
            if (vel.empty()) vel = Tensor(p.value.shape());
            for (int64_t j = 0; j < p.value.numel(); ++j) {
                vel[j] = opt_cfg.sgd_momentum * vel[j] + g[j];
                p.value[j] -= opt_cfg.sgd_lr * vel[j];
            }
        } else {
            Tensor& m = opt.m[i];
            Tensor& v = opt.v[i];
            if (m.empty()) {
                m = Tensor(p.value.shape());
                v = Tensor(p.value.shape());
            }
            for (int64_t j = 0; j < p.value.numel(); ++j) {
                double gj = g.empty() ? 0.0 : g[j];
                m[j] = opt_cfg.adam_beta1 * m[j] + (1.0 - opt_cfg.adam_beta1) * gj;
                v[j] = opt_cfg.adam_beta2 * v[j] + (1.0 - opt_cfg.adam_beta2) * gj * gj;
                double mhat = m[j] / bias1;
                double vhat = v[j] / bias2;
                p.value[j] -= opt_cfg.adam_lr * mhat / (std::sqrt(vhat) + opt_cfg.adam_eps);
            }
        }
    }
    return bd;
}

void save_checkpoint(const std::string& dir, const Parameters& params, const ModelConfig& cfg,
                     int64_t step) {
    fs::create_directories(dir);
    json manifest;
    manifest["step"] = step;
    manifest["config"] = {{"input_size", cfg.input_size},
                          {"stride", cfg.stride},
                          {"channels", cfg.channels},
                          {"clip_len", cfg.clip_len},
                          {"num_knots", cfg.num_knots},
                          {"num_classes", cfg.num_classes},
                          {"seed", cfg.seed},
                          {"use_twa", cfg.use_twa},
                          {"twa_use_raw_gram", cfg.twa_use_raw_gram},
                          {"head3d_features", cfg.head3d_features},
                          {"head3d_raw_clip", cfg.head3d_raw_clip},
                          {"head3d_heatmaps", cfg.head3d_heatmaps}};
    manifest["params"] = json::array();
    for (const Param& p : params.items) {
        std::string file = p.name + ".ptk1";
        save_tensor((fs::path(dir) / file).string(), p.value);
        manifest["params"].push_back({{"name", p.name},
                                      {"file", file},
                                      {"shape", p.value.shape()},
                                      {"group", group_tag(p.group)}});
    }
    std::ofstream os((fs::path(dir) / "manifest.json").string());
    if (!os) throw DataError("save_checkpoint: cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream is((fs::path(dir) / "manifest.json").string());
    if (!is) throw DataError("load_checkpoint: no manifest.json in " + dir);
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw DataError(std::string("load_checkpoint: malformed manifest: ") + e.what());
    }
    Checkpoint ck;
    ck.step = manifest.at("step").get<int64_t>();
    const json& jc = manifest.at("config");
    ck.config.input_size = jc.at("input_size").get<int>();
    ck.config.stride = jc.at("stride").get<int>();
    ck.config.channels = jc.at("channels").get<int>();
    ck.config.clip_len = jc.at("clip_len").get<int>();
    ck.config.num_knots = jc.at("num_knots").get<int>();
    ck.config.num_classes = jc.at("num_classes").get<int>();
    ck.config.seed = jc.at("seed").get<uint64_t>();
    ck.config.use_twa = jc.at("use_twa").get<bool>();
    ck.config.twa_use_raw_gram = jc.at("twa_use_raw_gram").get<bool>();
    ck.config.head3d_features = jc.at("head3d_features").get<bool>();
    ck.config.head3d_raw_clip = jc.at("head3d_raw_clip").get<bool>();
    ck.config.head3d_heatmaps = jc.at("head3d_heatmaps").get<bool>();
    for (const json& jp : manifest.at("params")) {
        Param p;
        p.name = jp.at("name").get<std::string>();
        p.group = group_from_tag(jp.at("group").get<std::string>());
        p.value = load_tensor((fs::path(dir) / jp.at("file").get<std::string>()).string());
        std::vector<int> shape = jp.at("shape").get<std::vector<int>>();
        if (shape != p.value.shape()) {
            throw DataError("load_checkpoint: shape mismatch for " + p.name);
        }
        ck.params.items.push_back(std::move(p));
    }
    return ck;
}

} // namespace point3d
