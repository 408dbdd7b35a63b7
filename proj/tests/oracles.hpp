// Independent reference implementations used as test oracles. Everything
// here is written as plainly as possible and stays independent of the
// library code paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "point3d/kernels.hpp"
#include "point3d/rng.hpp"
#include "point3d/tensor.hpp"

namespace oracle {

using point3d::Rng;
using point3d::Tensor;

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Six-loop cross-correlation, zero padding.
inline Tensor conv2d_naive(const Tensor& x, const Tensor& w, int stride, int pad) {
    const int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (ww + 2 * pad - kw) / stride + 1;
    Tensor y({cout, oh, ow});
    for (int oc = 0; oc < cout; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int ic = 0; ic < cin; ++ic) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            int iy = oy * stride + ky - pad;
                            int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                            acc += x.at(ic, iy, ix) * w.at(oc, ic, ky, kx);
                        }
                    }
                }
                y.at(oc, oy, ox) = acc;
            }
        }
    }
    return y;
}

inline Tensor conv3d_naive(const Tensor& x, const Tensor& w, int stride, int pad) {
    const int cin = x.dim(0), t = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int cout = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const int ot = (t + 2 * pad - kt) / stride + 1;
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (ww + 2 * pad - kw) / stride + 1;
    Tensor y({cout, ot, oh, ow});
    for (int oc = 0; oc < cout; ++oc) {
        for (int oz = 0; oz < ot; ++oz) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int ic = 0; ic < cin; ++ic) {
                        for (int kz = 0; kz < kt; ++kz) {
                            for (int ky = 0; ky < kh; ++ky) {
                                for (int kx = 0; kx < kw; ++kx) {
                                    int iz = oz * stride + kz - pad;
                                    int iy = oy * stride + ky - pad;
                                    int ix = ox * stride + kx - pad;
                                    if (iz < 0 || iz >= t || iy < 0 || iy >= h || ix < 0 ||
                                        ix >= ww) {
                                        continue;
                                    }
                                    acc += x.at(ic, iz, iy, ix) *
                                           w[(((static_cast<int64_t>(oc) * cin + ic) * kt + kz) *
                                                  kh +
                                              ky) *
                                                 kw +
                                             kx];
                                }
                            }
                        }
                    }
                    y.at(oc, oz, oy, ox) = acc;
                }
            }
        }
    }
    return y;
}

// Direct per-pixel summation of the penalty-reduced focal loss.
inline double focal_naive(const Tensor& pred, const Tensor& gt, int n_actors, double alpha,
                          double beta) {
    double total = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        double p = std::clamp(pred[i], 1e-7, 1.0 - 1e-7);
        if (gt[i] == 1.0) {
            total += std::pow(1.0 - p, alpha) * std::log(p);
        } else {
            total += std::pow(1.0 - gt[i], beta) * std::pow(p, alpha) * std::log(1.0 - p);
        }
    }
    return -total / std::max(n_actors, 1);
}

// Direct exp/normalize row softmax.
inline Tensor softmax_rows_naive(const Tensor& x) {
    Tensor y(x.shape());
    for (int i = 0; i < x.dim(0); ++i) {
        double denom = 0.0;
        for (int j = 0; j < x.dim(1); ++j) denom += std::exp(x.at(i, j));
        for (int j = 0; j < x.dim(1); ++j) y.at(i, j) = std::exp(x.at(i, j)) / denom;
    }
    return y;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace oracle
