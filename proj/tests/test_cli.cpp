// End-to-end smoke of the operator surface: synth -> train -> decode ->
// link -> eval -> visualize -> inspect-attention on a tiny config, plus the
// documented exit codes.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    std::string cmd = POINT3D_CLI_PATH " "s + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("full pipeline on a tiny dataset") {
    fs::path dir = fs::temp_directory_path() / "point3d_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::string d = dir.string();
    std::string common = " --set synth.num_clips=6 --set synth.clip_len=4"
                         " --set synth.frame_size=32 --set synth.num_classes=2"
                         " --set model.clip_len=4 --set model.input_size=32"
                         " --set model.channels=8 --set model.num_classes=2"
                         " --set train.steps=8 --set train.batch_size=1 --threads 2";

    CHECK(run("synth -o " + d + "/data" + common) == 0);
    CHECK(fs::exists(dir / "data/annotations.json"));
    CHECK(fs::exists(dir / "data/effective_config.toml"));

    CHECK(run("train -d " + d + "/data -o " + d + "/run" + common) == 0);
    CHECK(fs::exists(dir / "run/checkpoint_final/manifest.json"));
    CHECK(fs::exists(dir / "run/loss_trace.jsonl"));

    CHECK(run("decode -d " + d + "/data -k " + d + "/run/checkpoint_final -o " + d +
              "/dets.jsonl" + common) == 0);
    CHECK(fs::exists(dir / "dets.jsonl"));

    CHECK(run("link --dets " + d + "/dets.jsonl -o " + d + "/tubes.json" + common) == 0);
    CHECK(fs::exists(dir / "tubes.json"));

    CHECK(run("eval -d " + d + "/data --dets " + d + "/dets.jsonl --tubes " + d +
              "/tubes.json -o " + d + "/report.json --pr-csv " + d + "/pr.csv" + common) == 0);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "pr.csv"));
    {
        std::ifstream is(dir / "report.json");
        std::string body((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
        CHECK(body.find("frame_map") != std::string::npos);
        CHECK(body.find("video_map") != std::string::npos);
    }

    CHECK(run("visualize -d " + d + "/data --clip 0 -o " + d + "/viz --format ppm" + common) ==
          0);
    CHECK(fs::exists(dir / "viz/frame_00.ppm"));
    CHECK(run("visualize -d " + d + "/data --dets " + d + "/dets.jsonl --clip 0 -o " + d +
              "/viz_svg --format svg" + common) == 0);
    CHECK(fs::exists(dir / "viz_svg/frame_00.svg"));

    CHECK(run("inspect-attention -d " + d + "/data -k " + d + "/run/checkpoint_final --clip 0 -o " +
              d + "/attention.csv" + common) == 0);
    CHECK(fs::exists(dir / "attention.csv"));

    fs::remove_all(dir);
}

TEST_CASE("exit codes: usage 1, config 2, data 3") {
    CHECK(run("definitely-not-a-command") == 1);
    CHECK(run("synth") == 1); // missing required --out
    CHECK(run("synth -o /tmp/point3d_cli_cfg --set bogus.key=1") == 2);
    CHECK(run("synth -o /tmp/point3d_cli_cfg --set synth.num_classes=99") == 2);
    CHECK(run("train -d /nonexistent/dataset -o /tmp/point3d_cli_run") == 3);
    CHECK(run("eval -d /nonexistent --dets /nonexistent -o /tmp/x.json") == 3);
    fs::remove_all("/tmp/point3d_cli_cfg");
    fs::remove_all("/tmp/point3d_cli_run");
}

TEST_CASE("gradcheck command runs a reduced suite and exits 0") {
    CHECK(run("gradcheck --seeds 1") == 0);
}

} // TEST_SUITE
