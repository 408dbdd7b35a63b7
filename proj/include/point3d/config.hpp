#pragma once

#include <string>

#include "point3d/decode.hpp"
#include "point3d/losses.hpp"
#include "point3d/model.hpp"
#include "point3d/synth.hpp"

namespace point3d {

// Run-wide configuration. Loaded from a key = value config file (one dotted
// key per line, # comments) with CLI --set overrides applied on top.
// Unknown keys are rejected; the effective config is echoed into the run
// directory by every command.
struct RunConfig {
    ModelConfig model;
    LossWeights loss;
    SynthConfig synth;
    DecodeConfig decode;

    struct Link {
        double beta = 1.0;
        int max_tubes = 4;
    } link;

    struct Eval {
        double iou = 0.5;
    } eval;

    struct Train {
        int steps = 600;
        int batch_size = 2;
        int log_every = 1;
        int checkpoint_every = 0; // 0 = final checkpoint only
        uint64_t seed = 0;
    } train;

    int threads = 0; // 0 = hardware default

    void validate() const;
};

RunConfig parse_config_file(const std::string& path);
// key must be a known dotted key; value parsed per field type.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
// "key=value" form used by the CLI --set flag.
void apply_override_kv(RunConfig& cfg, const std::string& kv);
std::string dump_config(const RunConfig& cfg);

} // namespace point3d
