#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "point3d/grad_check.hpp"
#include "point3d/twa.hpp"

using namespace point3d;

namespace {

Tensor run_twa(const Tensor& f, bool raw_gram = false) {
    Tape tape;
    return tape.value(twa_forward(tape, tape.constant(f), raw_gram).output);
}

Tensor run_attention(const Tensor& f) {
    Tape tape;
    return tape.value(twa_forward(tape, tape.constant(f)).attention);
}

} // namespace

TEST_SUITE("twa") {

TEST_CASE("T=1 forces M=[[1]] and Y=2F") {
    Rng rng(1);
    Tensor f = oracle::random_tensor(rng, {1, 2, 3, 3});
    Tensor m = run_attention(f);
    CHECK(m.numel() == 1);
    CHECK(m[0] == doctest::Approx(1.0).epsilon(1e-15));
    Tensor y = run_twa(f);
    for (int64_t i = 0; i < f.numel(); ++i) {
        CHECK(y[i] == doctest::Approx(2.0 * f[i]).epsilon(1e-12));
    }
}

TEST_CASE("T=2 D=1 hand case") {
    Tensor f({2, 1, 1, 1}, {1.0, 2.0});
    Tensor m = run_attention(f);
    CHECK(m.at(0, 0) == doctest::Approx(0.26894).epsilon(1e-4));
    CHECK(m.at(0, 1) == doctest::Approx(0.73106).epsilon(1e-4));
    CHECK(m.at(1, 0) == doctest::Approx(0.11920).epsilon(1e-4));
    CHECK(m.at(1, 1) == doctest::Approx(0.88080).epsilon(1e-4));
    Tensor y = run_twa(f);
    CHECK(std::fabs(y[0] - 2.73106) < 1e-5);
    CHECK(std::fabs(y[1] - 3.88080) < 1e-5);
}

TEST_CASE("rows of M sum to 1 within 1e-12; output shape preserved") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        int t = rng.uniform_int(1, 6);
        Tensor f = oracle::random_tensor(rng, {t, 2, 2, 2});
        Tensor m = run_attention(f);
        REQUIRE(m.shape() == std::vector<int>{t, t});
        for (int i = 0; i < t; ++i) {
            double row = 0.0;
            for (int j = 0; j < t; ++j) row += m.at(i, j);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
        CHECK(run_twa(f).shape() == f.shape());
    }
}

TEST_CASE("permutation equivariance over the T axis, exact, 50 instances") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        int t = rng.uniform_int(2, 6);
        int c = rng.uniform_int(1, 3), hw = rng.uniform_int(1, 3);
        Tensor f = oracle::random_tensor(rng, {t, c, hw, hw});
        std::vector<int> perm(static_cast<size_t>(t));
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = t - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

        const int64_t inner = f.numel() / t;
        Tensor fp(f.shape());
        for (int i = 0; i < t; ++i) {
            std::copy(f.data() + perm[i] * inner, f.data() + (perm[i] + 1) * inner,
                      fp.data() + i * inner);
        }
        Tensor y = run_twa(f);
        Tensor yp = run_twa(fp);
        for (int i = 0; i < t; ++i) {
            for (int64_t j = 0; j < inner; ++j) {
                CHECK(yp[i * inner + j] == y[perm[i] * inner + j]);
            }
        }
    }
}

TEST_CASE("identical frames give uniform attention and Y = 2F") {
    Rng rng(4);
    const int t = 5;
    Tensor frame = oracle::random_tensor(rng, {1, 2, 3, 3});
    Tensor f({t, 2, 3, 3});
    for (int i = 0; i < t; ++i) {
        std::copy(frame.data(), frame.data() + frame.numel(), f.data() + i * frame.numel());
    }
    Tensor m = run_attention(f);
    for (int64_t i = 0; i < m.numel(); ++i) {
        CHECK(m[i] == doctest::Approx(1.0 / t).epsilon(1e-12));
    }
    Tensor y = run_twa(f);
    for (int64_t i = 0; i < y.numel(); ++i) {
        CHECK(y[i] == doctest::Approx(2.0 * f[i]).epsilon(1e-12));
    }
}

TEST_CASE("raw-gram flag mixes with G instead of M") {
    Tensor f({2, 1, 1, 1}, {1.0, 2.0});
    Tensor y = run_twa(f, /*raw_gram=*/true);
    // G = [[1,2],[2,4]]; G*F = [5, 10]; Y = F + S = [6, 12]
    CHECK(y[0] == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("twa_forward passes grad check") {
    Rng rng(6);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Tensor f = oracle::random_tensor(rng, {3, 2, 2, 2});
        Tensor probe = oracle::random_tensor(rng, f.shape());
        CHECK(grad_check(
                  [&](Tape& t, Var v) {
                      return t.sum(t.mul(twa_forward(t, v).output, t.constant(probe)));
                  },
                  f) < 1e-5);
    }
}

} // TEST_SUITE
