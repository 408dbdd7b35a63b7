#pragma once

#include <functional>

#include "point3d/tape.hpp"
#include "point3d/tensor.hpp"

namespace point3d {

// Scalar-valued function of one tensor, built on a fresh tape per call.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Central-difference gradient check.
///
/// Returns max over coordinates of |g_ad - g_fd| / max(1, |g_ad| + |g_fd|).
/// Coordinates whose one-sided differences disagree (straddling a kink such
/// as L1 at 0, or a clamp boundary) are resampled once at a nearby point
/// before being scored.
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-4);

} // namespace point3d
