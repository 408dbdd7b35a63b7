#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace point3d {

// Deterministic RNG. Only the raw mt19937_64 bit stream is consumed, so
// sequences are reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    // Box-Muller without a cached spare; two draws per call keeps the
    // stream position independent of call history.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace point3d
