#pragma once

#include <string>
#include <vector>

#include "point3d/grad_check.hpp"

namespace point3d {

struct GradCheckEntry {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double seconds = 0.0;

    bool all_pass() const {
        for (const auto& e : entries) {
            if (!e.pass) return false;
        }
        return true;
    }
};

// Checks every loss term, twa_forward, conv2d/conv3d, and the full
// miniature model (T=2, 16x16, C=4) against central differences, `seeds`
// random instances each. Loss/op tolerance 1e-5, full model 1e-4.
GradCheckReport run_gradcheck_suite(int seeds = 20);

} // namespace point3d
