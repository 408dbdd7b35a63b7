#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "point3d/decode.hpp"
#include "point3d/targets.hpp"

using namespace point3d;

namespace {

ActorAnnotation corner_actor(Box box, int k = 4) {
    ActorAnnotation a;
    a.box = box;
    const double fx[4] = {0, 1, 1, 0}, fy[4] = {0, 0, 1, 1};
    for (int i = 0; i < k; ++i) {
        a.knots.push_back(
            Point2{box.x1 + fx[i % 4] * box.width(), box.y1 + fy[i % 4] * box.height()});
    }
    return a;
}

CPOutputs perfect_cp(const FrameTargets& t) {
    return CPOutputs{t.cp_heatmap, t.cp_shape, t.cp_offset};
}

KPOutputs perfect_kp(const FrameTargets& t) {
    return KPOutputs{t.kp_heatmap, t.kp_distance, t.kp_offset};
}

} // namespace

TEST_SUITE("decode") {

TEST_CASE("perfect maps round-trip a single actor exactly") {
    auto a = corner_actor(Box{7.5, 10.0, 23.5, 26.0});
    FrameTargets t = render_frame_targets(std::vector{a}, 4, 64, 64, 4);
    DecodeConfig cfg;
    cfg.threshold = 0.99;
    auto dets = decode_boxes(perfect_cp(t), cfg, 4);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].box.x1 == doctest::Approx(a.box.x1).epsilon(1e-9));
    CHECK(dets[0].box.y1 == doctest::Approx(a.box.y1).epsilon(1e-9));
    CHECK(dets[0].box.x2 == doctest::Approx(a.box.x2).epsilon(1e-9));
    CHECK(dets[0].box.y2 == doctest::Approx(a.box.y2).epsilon(1e-9));
    CHECK(dets[0].score == 1.0);
}

TEST_CASE("all-zero heatmap decodes to nothing") {
    CPOutputs cp{Tensor({1, 8, 8}), Tensor({2, 8, 8}), Tensor({2, 8, 8})};
    CHECK(decode_boxes(cp, DecodeConfig{}, 4).empty());
}

TEST_CASE("top-k keeps the strongest peak") {
    CPOutputs cp{Tensor({1, 8, 8}), Tensor::full({2, 8, 8}, 8.0), Tensor({2, 8, 8})};
    cp.heatmap.at(0, 2, 2) = 0.9;
    cp.heatmap.at(0, 6, 5) = 0.6;
    DecodeConfig cfg;
    cfg.max_det = 1;
    auto dets = decode_boxes(cp, cfg, 4);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].score == doctest::Approx(0.9));
    CHECK(dets[0].peak_x == 2);
    CHECK(dets[0].peak_y == 2);
}

TEST_CASE("raising the threshold never adds detections") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor heat = oracle::random_tensor(rng, {1, 8, 8}, 0.0, 1.0);
        CPOutputs cp{heat, Tensor::full({2, 8, 8}, 6.0), Tensor({2, 8, 8})};
        size_t prev = SIZE_MAX;
        for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            DecodeConfig cfg;
            cfg.threshold = thr;
            cfg.max_det = 64;
            size_t n = decode_boxes(cp, cfg, 4).size();
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("ordering is total and deterministic: score desc then (y, x)") {
    CPOutputs cp{Tensor({1, 8, 8}), Tensor::full({2, 8, 8}, 8.0), Tensor({2, 8, 8})};
    cp.heatmap.at(0, 1, 6) = 0.7;
    cp.heatmap.at(0, 4, 2) = 0.7;
    cp.heatmap.at(0, 6, 6) = 0.9;
    auto dets = decode_boxes(cp, DecodeConfig{}, 4);
    REQUIRE(dets.size() == 3);
    CHECK(dets[0].peak_y == 6);
    CHECK(dets[1].peak_y == 1);
    CHECK(dets[2].peak_y == 4);
}

TEST_CASE("knot refinement: contained knots leave the box unchanged") {
    auto a = corner_actor(Box{8, 8, 24, 24});
    // Pull every knot strictly inside the box.
    for (auto& p : a.knots) {
        p.x = a.box.cx() + 0.25 * (p.x - a.box.cx());
        p.y = a.box.cy() + 0.25 * (p.y - a.box.cy());
    }
    FrameTargets t = render_frame_targets(std::vector{a}, 4, 64, 64, 4);
    DecodeConfig cfg;
    cfg.threshold = 0.99;
    auto dets = decode_boxes(perfect_cp(t), cfg, 4);
    REQUIRE(dets.size() == 1);
    Detection refined = refine_with_knots(dets[0], perfect_kp(t), cfg, 4);
    CHECK(refined.box.x1 == doctest::Approx(dets[0].box.x1));
    CHECK(refined.box.y1 == doctest::Approx(dets[0].box.y1));
    CHECK(refined.box.x2 == doctest::Approx(dets[0].box.x2));
    CHECK(refined.box.y2 == doctest::Approx(dets[0].box.y2));
    CHECK(refined.knots.size() == 4);
}

TEST_CASE("knot 5 px left of x1 grows the hull by 5") {
    auto a = corner_actor(Box{20, 20, 36, 36});
    a.knots[0] = Point2{15, 24}; // 5 px left of x1
    FrameTargets t = render_frame_targets(std::vector{a}, 4, 64, 64, 4);
    DecodeConfig cfg;
    cfg.threshold = 0.99;
    auto dets = decode_boxes(perfect_cp(t), cfg, 4);
    REQUIRE(dets.size() == 1);
    Detection refined = refine_with_knots(dets[0], perfect_kp(t), cfg, 4);
    CHECK(refined.box.x1 == doctest::Approx(15.0).epsilon(1e-9));
    CHECK(refined.box.x2 == doctest::Approx(36.0).epsilon(1e-9));
}

TEST_CASE("perfect maps recover knots within R/2") {
    Rng rng(77);
    const int r = 4;
    for (int rep = 0; rep < 25; ++rep) {
        double w = rng.uniform(12, 22), h = rng.uniform(12, 22);
        double cx = rng.uniform(w / 2 + 3, 64 - w / 2 - 3);
        double cy = rng.uniform(h / 2 + 3, 64 - h / 2 - 3);
        auto a = corner_actor(Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
        FrameTargets t = render_frame_targets(std::vector{a}, 4, 64, 64, r);
        DecodeConfig cfg;
        cfg.threshold = 0.5;
        auto dets = decode_boxes(perfect_cp(t), cfg, r);
        REQUIRE(dets.size() == 1);
        Detection refined = refine_with_knots(dets[0], perfect_kp(t), cfg, r);
        REQUIRE(refined.knots.size() == 4);
        for (int k = 0; k < 4; ++k) {
            CHECK(std::fabs(refined.knots[k].x - a.knots[k].x) <= r / 2.0);
            CHECK(std::fabs(refined.knots[k].y - a.knots[k].y) <= r / 2.0);
        }
    }
}

TEST_CASE("render-decode: 100 random frames, all boxes within R/2, no spurious above 0.5") {
    Rng rng(88);
    const int r = 4, size = 64;
    for (int rep = 0; rep < 100; ++rep) {
        // One or two well-separated actors.
        std::vector<ActorAnnotation> actors;
        int n = rng.uniform_int(1, 2);
        for (int i = 0; i < n && static_cast<int>(actors.size()) < n; ++i) {
            for (int attempt = 0; attempt < 30; ++attempt) {
                double w = rng.uniform(10, 20), h = rng.uniform(10, 20);
                double cx = rng.uniform(w / 2 + 2, size - w / 2 - 2);
                double cy = rng.uniform(h / 2 + 2, size - h / 2 - 2);
                Box box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
                bool clash = false;
                for (const auto& other : actors) {
                    if (std::floor(other.box.cx() / r) == std::floor(cx / r) &&
                        std::floor(other.box.cy() / r) == std::floor(cy / r)) {
                        clash = true;
                    }
                }
                if (clash) continue;
                auto a = corner_actor(box);
                a.actor_id = static_cast<int>(actors.size());
                actors.push_back(a);
                break;
            }
        }
        FrameTargets t = render_frame_targets(actors, 4, size, size, r);
        DecodeConfig cfg;
        cfg.threshold = 0.99;
        auto dets = decode_boxes(perfect_cp(t), cfg, r);
        REQUIRE(dets.size() == actors.size());
        for (const auto& a : actors) {
            bool found = false;
            for (const auto& d : dets) {
                if (std::fabs(d.box.x1 - a.box.x1) <= r / 2.0 &&
                    std::fabs(d.box.y1 - a.box.y1) <= r / 2.0 &&
                    std::fabs(d.box.x2 - a.box.x2) <= r / 2.0 &&
                    std::fabs(d.box.y2 - a.box.y2) <= r / 2.0) {
                    found = true;
                }
            }
            CHECK(found);
        }
        // No spurious detections above 0.5 beyond the rendered actors.
        DecodeConfig loose;
        loose.threshold = 0.5;
        loose.max_det = 64;
        CHECK(decode_boxes(perfect_cp(t), loose, r).size() == actors.size());
    }
}

} // TEST_SUITE
