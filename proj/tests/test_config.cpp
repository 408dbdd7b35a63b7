#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "point3d/config.hpp"
#include "point3d/error.hpp"

using namespace point3d;

TEST_SUITE("config") {

TEST_CASE("defaults validate and carry the documented values") {
    RunConfig cfg;
    cfg.validate();
    CHECK(cfg.model.stride == 4);
    CHECK(cfg.model.channels == 32);
    CHECK(cfg.model.clip_len == 8);
    CHECK(cfg.loss.loc == 10.0);
    CHECK(cfg.loss.cls == 1.0);
    CHECK(cfg.loss.cp_s == 0.1);
    CHECK(cfg.loss.focal_alpha == 2.0);
    CHECK(cfg.loss.focal_beta == 4.0);
    CHECK(cfg.decode.threshold == 0.3);
    CHECK(cfg.decode.max_det == 10);
}

TEST_CASE("overrides parse typed values") {
    RunConfig cfg;
    apply_override_kv(cfg, "model.clip_len=4");
    apply_override_kv(cfg, "loss.lambda_loc=2.5");
    apply_override_kv(cfg, "model.use_twa=false");
    apply_override_kv(cfg, "model.head3d_inputs=raw_clip,heatmaps");
    CHECK(cfg.model.clip_len == 4);
    CHECK(cfg.loss.loc == 2.5);
    CHECK_FALSE(cfg.model.use_twa);
    CHECK_FALSE(cfg.model.head3d_features);
    CHECK(cfg.model.head3d_raw_clip);
    CHECK(cfg.model.head3d_heatmaps);
}

TEST_CASE("unknown keys and malformed values are rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(apply_override_kv(cfg, "model.bogus=1"), ConfigError);
    CHECK_THROWS_AS(apply_override_kv(cfg, "model.clip_len=abc"), ConfigError);
    CHECK_THROWS_AS(apply_override_kv(cfg, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override_kv(cfg, "model.head3d_inputs=bogus_source"), ConfigError);
}

TEST_CASE("config file round trip through dump_config") {
    namespace fs = std::filesystem;
    RunConfig cfg;
    cfg.model.clip_len = 6;
    cfg.synth.num_clips = 42;
    cfg.decode.threshold = 0.45;
    fs::path path = fs::temp_directory_path() / "point3d_cfg_test.toml";
    {
        std::ofstream os(path);
        os << dump_config(cfg);
    }
    RunConfig back = parse_config_file(path.string());
    CHECK(back.model.clip_len == 6);
    CHECK(back.synth.num_clips == 42);
    CHECK(back.decode.threshold == 0.45);
    fs::remove(path);
}

TEST_CASE("config file with comments and bad lines") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "point3d_cfg_test2.toml";
    {
        std::ofstream os(path);
        os << "# comment line\n";
        os << "model.clip_len = 4  # trailing comment\n";
        os << "\n";
        os << "synth.noise_std = 0.05\n";
    }
    RunConfig cfg = parse_config_file(path.string());
    CHECK(cfg.model.clip_len == 4);
    CHECK(cfg.synth.noise_std == 0.05);
    {
        std::ofstream os(path);
        os << "model.clip_len: 4\n";
    }
    CHECK_THROWS_AS(parse_config_file(path.string()), ConfigError);
    fs::remove(path);
}

TEST_CASE("validation catches out-of-range values") {
    RunConfig cfg;
    cfg.decode.threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.loss.loc = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.train.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

} // TEST_SUITE
