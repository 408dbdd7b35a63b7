#include "point3d/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "point3d/error.hpp"

namespace point3d {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

struct KeyEntry {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string fmt_double(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// head3d_inputs round-trips as a comma list of enabled sources.
std::string head3d_to_string(const ModelConfig& m) {
    std::vector<std::string> parts;
    if (m.head3d_features) parts.push_back("features_twa");
    if (m.head3d_raw_clip) parts.push_back("raw_clip");
    if (m.head3d_heatmaps) parts.push_back("heatmaps");
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ",";
        out += parts[i];
    }
    return out;
}

void head3d_from_string(ModelConfig& m, const std::string& v) {
    m.head3d_features = m.head3d_raw_clip = m.head3d_heatmaps = false;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item == "features_twa") {
            m.head3d_features = true;
        } else if (item == "raw_clip") {
            m.head3d_raw_clip = true;
        } else if (item == "heatmaps") {
            m.head3d_heatmaps = true;
        } else if (!item.empty()) {
            throw ConfigError("model.head3d_inputs: unknown source '" + item +
                              "' (expected features_twa, raw_clip, heatmaps)");
        }
    }
}

const std::vector<KeyEntry>& key_table() {
#define INT_KEY(name, field)                                                        \
    KeyEntry {                                                                      \
        name, [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); }, \
            [](const RunConfig& c) { return std::to_string(c.field); }              \
    }
#define DBL_KEY(name, field)                                                           \
    KeyEntry {                                                                         \
        name, [](RunConfig& c, const std::string& v) { c.field = parse_double(name, v); }, \
            [](const RunConfig& c) { return fmt_double(c.field); }                     \
    }
#define BOOL_KEY(name, field)                                                        \
    KeyEntry {                                                                       \
        name, [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
            [](const RunConfig& c) { return c.field ? "true" : "false"; }            \
    }
    static const std::vector<KeyEntry> table = {
        INT_KEY("model.input_size", model.input_size),
        INT_KEY("model.stride", model.stride),
        INT_KEY("model.channels", model.channels),
        INT_KEY("model.clip_len", model.clip_len),
        INT_KEY("model.num_knots", model.num_knots),
        INT_KEY("model.num_classes", model.num_classes),
        KeyEntry{"model.seed",
                 [](RunConfig& c, const std::string& v) {
                     c.model.seed = parse_u64("model.seed", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.model.seed); }},
        BOOL_KEY("model.use_twa", model.use_twa),
        BOOL_KEY("model.twa_use_raw_gram", model.twa_use_raw_gram),
        KeyEntry{"model.head3d_inputs",
                 [](RunConfig& c, const std::string& v) { head3d_from_string(c.model, v); },
                 [](const RunConfig& c) { return head3d_to_string(c.model); }},
        DBL_KEY("loss.cp_h", loss.cp_h),
        DBL_KEY("loss.cp_s", loss.cp_s),
        DBL_KEY("loss.cp_o", loss.cp_o),
        DBL_KEY("loss.kp_h", loss.kp_h),
        DBL_KEY("loss.kp_d", loss.kp_d),
        DBL_KEY("loss.kp_o", loss.kp_o),
        DBL_KEY("loss.lambda_loc", loss.loc),
        DBL_KEY("loss.lambda_cls", loss.cls),
        DBL_KEY("loss.focal_alpha", loss.focal_alpha),
        DBL_KEY("loss.focal_beta", loss.focal_beta),
        INT_KEY("synth.num_clips", synth.num_clips),
        INT_KEY("synth.clip_len", synth.clip_len),
        INT_KEY("synth.frame_size", synth.frame_size),
        INT_KEY("synth.num_classes", synth.num_classes),
        INT_KEY("synth.num_knots", synth.num_knots),
        INT_KEY("synth.actors_min", synth.actors_min),
        INT_KEY("synth.actors_max", synth.actors_max),
        DBL_KEY("synth.noise_std", synth.noise_std),
        KeyEntry{"synth.seed",
                 [](RunConfig& c, const std::string& v) {
                     c.synth.seed = parse_u64("synth.seed", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.synth.seed); }},
        BOOL_KEY("synth.trimmed", synth.trimmed),
        DBL_KEY("decode.threshold", decode.threshold),
        INT_KEY("decode.max_det", decode.max_det),
        BOOL_KEY("decode.use_knots", decode.use_knots),
        DBL_KEY("link.beta", link.beta),
        INT_KEY("link.max_tubes", link.max_tubes),
        DBL_KEY("eval.iou", eval.iou),
        INT_KEY("train.steps", train.steps),
        INT_KEY("train.batch_size", train.batch_size),
        INT_KEY("train.log_every", train.log_every),
        INT_KEY("train.checkpoint_every", train.checkpoint_every),
        KeyEntry{"train.seed",
                 [](RunConfig& c, const std::string& v) {
                     c.train.seed = parse_u64("train.seed", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        INT_KEY("threads", threads),
    };
#undef INT_KEY
#undef DBL_KEY
#undef BOOL_KEY
    return table;
}

} // namespace

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    synth.validate();
    if (decode.threshold < 0.0 || decode.threshold > 1.0) {
        throw ConfigError("decode.threshold must be in [0, 1]");
    }
    if (decode.max_det < 1) throw ConfigError("decode.max_det must be >= 1");
    if (link.max_tubes < 1) throw ConfigError("link.max_tubes must be >= 1");
    if (eval.iou <= 0.0 || eval.iou > 1.0) throw ConfigError("eval.iou must be in (0, 1]");
    if (train.steps < 0 || train.batch_size < 1) {
        throw ConfigError("train.steps must be >= 0 and train.batch_size >= 1");
    }
    if (threads < 0) throw ConfigError("threads must be >= 0");
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const KeyEntry& e : key_table()) {
        if (key == e.key) {
            e.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override_kv(RunConfig& cfg, const std::string& kv) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must be key=value, got '" + kv + "'");
    }
    apply_override(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

RunConfig parse_config_file(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        try {
            apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const KeyEntry& e : key_table()) {
        os << e.key << " = " << e.get(cfg) << "\n";
    }
    return os.str();
}

} // namespace point3d
