#include "point3d/kernels.hpp"

#include <algorithm>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "point3d/error.hpp"

namespace point3d::kernels {

namespace {
int g_max_threads = 0; // 0 = hardware default
} // namespace

void set_max_threads(int n) {
    g_max_threads = n;
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

int max_threads() { return g_max_threads; }

bool parallel_enabled() {
#ifdef _OPENMP
    return g_max_threads != 1;
#else
    return false;
#endif
}

void Conv2dSpec::validate() const {
    if (cin <= 0 || h <= 0 || w <= 0 || cout <= 0 || kh <= 0 || kw <= 0 || stride <= 0 ||
        pad < 0) {
        throw ContractError("conv2d: non-positive dimension in spec");
    }
    if (kh > h + 2 * pad || kw > w + 2 * pad) {
        std::ostringstream os;
        os << "conv2d: kernel " << kh << "x" << kw << " larger than padded input " << (h + 2 * pad)
           << "x" << (w + 2 * pad);
        throw DimensionError(os.str());
    }
}

void Conv3dSpec::validate() const {
    if (cin <= 0 || t <= 0 || h <= 0 || w <= 0 || cout <= 0 || kt <= 0 || kh <= 0 || kw <= 0 ||
        stride <= 0 || pad < 0) {
        throw ContractError("conv3d: non-positive dimension in spec");
    }
    if (kt > t + 2 * pad || kh > h + 2 * pad || kw > w + 2 * pad) {
        std::ostringstream os;
        os << "conv3d: kernel " << kt << "x" << kh << "x" << kw << " larger than padded input "
           << (t + 2 * pad) << "x" << (h + 2 * pad) << "x" << (w + 2 * pad);
        throw DimensionError(os.str());
    }
}

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        for (int p = 0; p < k; ++p) {
            double aip = a[static_cast<size_t>(i) * k + p];
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void matmul_omp(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        for (int p = 0; p < k; ++p) {
            double aip = a[static_cast<size_t>(i) * k + p];
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    if (parallel_enabled() && m > 1 && static_cast<int64_t>(m) * k * n > 16384) {
        matmul_omp(a, b, c, m, k, n);
    } else {
        matmul_serial(a, b, c, m, k, n);
    }
}

#define CONV2D_BODY(oc_begin, oc_end)                                                          \
    const int oh = s.out_h(), ow = s.out_w();                                                  \
    for (int oc = (oc_begin); oc < (oc_end); ++oc) {                                           \
        for (int oy = 0; oy < oh; ++oy) {                                                      \
            for (int ox = 0; ox < ow; ++ox) {                                                  \
                double acc = 0.0;                                                              \
                for (int ic = 0; ic < s.cin; ++ic) {                                           \
                    for (int ky = 0; ky < s.kh; ++ky) {                                        \
                        int iy = oy * s.stride + ky - s.pad;                                   \
                        if (iy < 0 || iy >= s.h) continue;                                     \
                        for (int kx = 0; kx < s.kw; ++kx) {                                    \
                            int ix = ox * s.stride + kx - s.pad;                               \
                            if (ix < 0 || ix >= s.w) continue;                                 \
                            acc += x[(static_cast<size_t>(ic) * s.h + iy) * s.w + ix] *        \
                                   w[((static_cast<size_t>(oc) * s.cin + ic) * s.kh + ky) *    \
                                         s.kw +                                                \
                                     kx];                                                      \
                        }                                                                      \
                    }                                                                          \
                }                                                                              \
                y[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = acc;                        \
            }                                                                                  \
        }                                                                                      \
    }

void conv2d_serial(const double* x, const double* w, double* y, const Conv2dSpec& s) {
    s.validate();
    CONV2D_BODY(0, s.cout)
}

void conv2d_omp(const double* x, const double* w, double* y, const Conv2dSpec& s) {
    s.validate();
#pragma omp parallel for schedule(static)
    for (int oc0 = 0; oc0 < s.cout; ++oc0) {
        CONV2D_BODY(oc0, oc0 + 1)
    }
}

#undef CONV2D_BODY

int64_t conv2d_work(const Conv2dSpec& s) {
    return static_cast<int64_t>(s.cout) * s.out_h() * s.out_w() * s.cin * s.kh * s.kw;
}

void conv2d(const double* x, const double* w, double* y, const Conv2dSpec& s) {
    if (parallel_enabled() && s.cout > 1 && conv2d_work(s) > 200000) {
        conv2d_omp(x, w, y, s);
    } else {
        conv2d_serial(x, w, y, s);
    }
}

// gx[ic][iy][ix] = sum over (oc, ky, kx) hitting that input position.
#define CONV2D_GRAD_X_BODY(ic_begin, ic_end)                                                   \
    const int oh = s.out_h(), ow = s.out_w();                                                  \
    for (int ic = (ic_begin); ic < (ic_end); ++ic) {                                           \
        for (int iy = 0; iy < s.h; ++iy) {                                                     \
            for (int ix = 0; ix < s.w; ++ix) {                                                 \
                double acc = 0.0;                                                              \
                for (int ky = 0; ky < s.kh; ++ky) {                                            \
                    int num_y = iy + s.pad - ky;                                               \
                    if (num_y < 0 || num_y % s.stride != 0) continue;                          \
                    int oy = num_y / s.stride;                                                 \
                    if (oy >= oh) continue;                                                    \
                    for (int kx = 0; kx < s.kw; ++kx) {                                        \
                        int num_x = ix + s.pad - kx;                                           \
                        if (num_x < 0 || num_x % s.stride != 0) continue;                      \
                        int ox = num_x / s.stride;                                             \
                        if (ox >= ow) continue;                                                \
                        for (int oc = 0; oc < s.cout; ++oc) {                                  \
                            acc += gy[(static_cast<size_t>(oc) * oh + oy) * ow + ox] *         \
                                   w[((static_cast<size_t>(oc) * s.cin + ic) * s.kh + ky) *    \
                                         s.kw +                                                \
                                     kx];                                                      \
                        }                                                                      \
                    }                                                                          \
                }                                                                              \
                gx[(static_cast<size_t>(ic) * s.h + iy) * s.w + ix] = acc;                     \
            }                                                                                  \
        }                                                                                      \
    }

void conv2d_grad_x_serial(const double* gy, const double* w, double* gx, const Conv2dSpec& s) {
    CONV2D_GRAD_X_BODY(0, s.cin)
}

void conv2d_grad_x_omp(const double* gy, const double* w, double* gx, const Conv2dSpec& s) {
#pragma omp parallel for schedule(static)
    for (int ic0 = 0; ic0 < s.cin; ++ic0) {
        CONV2D_GRAD_X_BODY(ic0, ic0 + 1)
    }
}

#undef CONV2D_GRAD_X_BODY

void conv2d_grad_x(const double* gy, const double* w, double* gx, const Conv2dSpec& s) {
    if (parallel_enabled() && s.cin > 1 && conv2d_work(s) > 200000) {
        conv2d_grad_x_omp(gy, w, gx, s);
    } else {
        conv2d_grad_x_serial(gy, w, gx, s);
    }
}

#define CONV2D_GRAD_W_BODY(oc_begin, oc_end)                                                   \
    const int oh = s.out_h(), ow = s.out_w();                                                  \
    for (int oc = (oc_begin); oc < (oc_end); ++oc) {                                           \
        for (int ic = 0; ic < s.cin; ++ic) {                                                   \
            for (int ky = 0; ky < s.kh; ++ky) {                                                \
                for (int kx = 0; kx < s.kw; ++kx) {                                            \
                    double acc = 0.0;                                                          \
                    for (int oy = 0; oy < oh; ++oy) {                                          \
                        int iy = oy * s.stride + ky - s.pad;                                   \
                        if (iy < 0 || iy >= s.h) continue;                                     \
                        for (int ox = 0; ox < ow; ++ox) {                                      \
                            int ix = ox * s.stride + kx - s.pad;                               \
                            if (ix < 0 || ix >= s.w) continue;                                 \
                            acc += gy[(static_cast<size_t>(oc) * oh + oy) * ow + ox] *         \
                                   x[(static_cast<size_t>(ic) * s.h + iy) * s.w + ix];         \
                        }                                                                      \
                    }                                                                          \
                    gw[((static_cast<size_t>(oc) * s.cin + ic) * s.kh + ky) * s.kw + kx] =     \
                        acc;                                                                   \
                }                                                                              \
            }                                                                                  \
        }                                                                                      \
    }

void conv2d_grad_w_serial(const double* x, const double* gy, double* gw, const Conv2dSpec& s) {
    CONV2D_GRAD_W_BODY(0, s.cout)
}

void conv2d_grad_w_omp(const double* x, const double* gy, double* gw, const Conv2dSpec& s) {
#pragma omp parallel for schedule(static)
    for (int oc0 = 0; oc0 < s.cout; ++oc0) {
        CONV2D_GRAD_W_BODY(oc0, oc0 + 1)
    }
}

#undef CONV2D_GRAD_W_BODY

void conv2d_grad_w(const double* x, const double* gy, double* gw, const Conv2dSpec& s) {
    if (parallel_enabled() && s.cout > 1 && conv2d_work(s) > 200000) {
        conv2d_grad_w_omp(x, gy, gw, s);
    } else {
        conv2d_grad_w_serial(x, gy, gw, s);
    }
}

#define CONV3D_BODY(oc_begin, oc_end)                                                          \
    const int ot = s.out_t(), oh = s.out_h(), ow = s.out_w();                                  \
    for (int oc = (oc_begin); oc < (oc_end); ++oc) {                                           \
        for (int oz = 0; oz < ot; ++oz) {                                                      \
            for (int oy = 0; oy < oh; ++oy) {                                                  \
                for (int ox = 0; ox < ow; ++ox) {                                              \
                    double acc = 0.0;                                                          \
                    for (int ic = 0; ic < s.cin; ++ic) {                                       \
                        for (int kz = 0; kz < s.kt; ++kz) {                                    \
                            int iz = oz * s.stride + kz - s.pad;                               \
                            if (iz < 0 || iz >= s.t) continue;                                 \
                            for (int ky = 0; ky < s.kh; ++ky) {                                \
                                int iy = oy * s.stride + ky - s.pad;                           \
                                if (iy < 0 || iy >= s.h) continue;                             \
                                for (int kx = 0; kx < s.kw; ++kx) {                            \
                                    int ix = ox * s.stride + kx - s.pad;                       \
                                    if (ix < 0 || ix >= s.w) continue;                         \
                                    acc += x[((static_cast<size_t>(ic) * s.t + iz) * s.h +     \
                                              iy) *                                            \
                                                 s.w +                                         \
                                             ix] *                                             \
                                           w[(((static_cast<size_t>(oc) * s.cin + ic) * s.kt + \
                                               kz) *                                           \
                                                  s.kh +                                       \
                                              ky) *                                            \
                                                 s.kw +                                        \
                                             kx];                                              \
                                }                                                              \
                            }                                                                  \
                        }                                                                      \
                    }                                                                          \
                    y[((static_cast<size_t>(oc) * ot + oz) * oh + oy) * ow + ox] = acc;        \
                }                                                                              \
            }                                                                                  \
        }                                                                                      \
    }

void conv3d_serial(const double* x, const double* w, double* y, const Conv3dSpec& s) {
    s.validate();
    CONV3D_BODY(0, s.cout)
}

void conv3d_omp(const double* x, const double* w, double* y, const Conv3dSpec& s) {
    s.validate();
#pragma omp parallel for schedule(static)
    for (int oc0 = 0; oc0 < s.cout; ++oc0) {
        CONV3D_BODY(oc0, oc0 + 1)
    }
}

#undef CONV3D_BODY

int64_t conv3d_work(const Conv3dSpec& s) {
    return static_cast<int64_t>(s.cout) * s.out_t() * s.out_h() * s.out_w() * s.cin * s.kt *
           s.kh * s.kw;
}

void conv3d(const double* x, const double* w, double* y, const Conv3dSpec& s) {
    if (parallel_enabled() && s.cout > 1 && conv3d_work(s) > 200000) {
        conv3d_omp(x, w, y, s);
    } else {
        conv3d_serial(x, w, y, s);
    }
}

#define CONV3D_GRAD_X_BODY(ic_begin, ic_end)                                                   \
    const int ot = s.out_t(), oh = s.out_h(), ow = s.out_w();                                  \
    for (int ic = (ic_begin); ic < (ic_end); ++ic) {                                           \
        for (int iz = 0; iz < s.t; ++iz) {                                                     \
            for (int iy = 0; iy < s.h; ++iy) {                                                 \
                for (int ix = 0; ix < s.w; ++ix) {                                             \
                    double acc = 0.0;                                                          \
                    for (int kz = 0; kz < s.kt; ++kz) {                                        \
                        int num_z = iz + s.pad - kz;                                           \
                        if (num_z < 0 || num_z % s.stride != 0) continue;                      \
                        int oz = num_z / s.stride;                                             \
                        if (oz >= ot) continue;                                                \
                        for (int ky = 0; ky < s.kh; ++ky) {                                    \
                            int num_y = iy + s.pad - ky;                                       \
                            if (num_y < 0 || num_y % s.stride != 0) continue;                  \
                            int oy = num_y / s.stride;                                         \
                            if (oy >= oh) continue;                                            \
                            for (int kx = 0; kx < s.kw; ++kx) {                                \
                                int num_x = ix + s.pad - kx;                                   \
                                if (num_x < 0 || num_x % s.stride != 0) continue;              \
                                int ox = num_x / s.stride;                                     \
                                if (ox >= ow) continue;                                        \
                                for (int oc = 0; oc < s.cout; ++oc) {                          \
                                    acc += gy[((static_cast<size_t>(oc) * ot + oz) * oh +      \
                                               oy) *                                           \
                                                  ow +                                         \
                                              ox] *                                            \
                                           w[(((static_cast<size_t>(oc) * s.cin + ic) * s.kt + \
                                               kz) *                                           \
                                                  s.kh +                                       \
                                              ky) *                                            \
                                                 s.kw +                                        \
                                             kx];                                              \
                                }                                                              \
                            }                                                                  \
                        }                                                                      \
                    }                                                                          \
                    gx[((static_cast<size_t>(ic) * s.t + iz) * s.h + iy) * s.w + ix] = acc;    \
                }                                                                              \
            }                                                                                  \
        }                                                                                      \
    }

void conv3d_grad_x_serial(const double* gy, const double* w, double* gx, const Conv3dSpec& s) {
    CONV3D_GRAD_X_BODY(0, s.cin)
}

void conv3d_grad_x_omp(const double* gy, const double* w, double* gx, const Conv3dSpec& s) {
#pragma omp parallel for schedule(static)
    for (int ic0 = 0; ic0 < s.cin; ++ic0) {
        CONV3D_GRAD_X_BODY(ic0, ic0 + 1)
    }
}

#undef CONV3D_GRAD_X_BODY

void conv3d_grad_x(const double* gy, const double* w, double* gx, const Conv3dSpec& s) {
    if (parallel_enabled() && s.cin > 1 && conv3d_work(s) > 200000) {
        conv3d_grad_x_omp(gy, w, gx, s);
    } else {
        conv3d_grad_x_serial(gy, w, gx, s);
    }
}

#define CONV3D_GRAD_W_BODY(oc_begin, oc_end)                                                   \
    const int ot = s.out_t(), oh = s.out_h(), ow = s.out_w();                                  \
    for (int oc = (oc_begin); oc < (oc_end); ++oc) {                                           \
        for (int ic = 0; ic < s.cin; ++ic) {                                                   \
            for (int kz = 0; kz < s.kt; ++kz) {                                                \
                for (int ky = 0; ky < s.kh; ++ky) {                                            \
                    for (int kx = 0; kx < s.kw; ++kx) {                                        \
                        double acc = 0.0;                                                      \
                        for (int oz = 0; oz < ot; ++oz) {                                      \
                            int iz = oz * s.stride + kz - s.pad;                               \
                            if (iz < 0 || iz >= s.t) continue;                                 \
                            for (int oy = 0; oy < oh; ++oy) {                                  \
                                int iy = oy * s.stride + ky - s.pad;                           \
                                if (iy < 0 || iy >= s.h) continue;                             \
                                for (int ox = 0; ox < ow; ++ox) {                              \
                                    int ix = ox * s.stride + kx - s.pad;                       \
                                    if (ix < 0 || ix >= s.w) continue;                         \
                                    acc += gy[((static_cast<size_t>(oc) * ot + oz) * oh +      \
                                               oy) *                                           \
                                                  ow +                                         \
                                              ox] *                                            \
                                           x[((static_cast<size_t>(ic) * s.t + iz) * s.h +     \
                                              iy) *                                            \
                                                 s.w +                                         \
                                             ix];                                              \
                                }                                                              \
                            }                                                                  \
                        }                                                                      \
                        gw[(((static_cast<size_t>(oc) * s.cin + ic) * s.kt + kz) * s.kh + ky) * \
                               s.kw +                                                          \
                           kx] = acc;                                                          \
                    }                                                                          \
                }                                                                              \
            }                                                                                  \
        }                                                                                      \
    }

void conv3d_grad_w_serial(const double* x, const double* gy, double* gw, const Conv3dSpec& s) {
    CONV3D_GRAD_W_BODY(0, s.cout)
}

void conv3d_grad_w_omp(const double* x, const double* gy, double* gw, const Conv3dSpec& s) {
#pragma omp parallel for schedule(static)
    for (int oc0 = 0; oc0 < s.cout; ++oc0) {
        CONV3D_GRAD_W_BODY(oc0, oc0 + 1)
    }
}

#undef CONV3D_GRAD_W_BODY

void conv3d_grad_w(const double* x, const double* gy, double* gw, const Conv3dSpec& s) {
    if (parallel_enabled() && s.cout > 1 && conv3d_work(s) > 200000) {
        conv3d_grad_w_omp(x, gy, gw, s);
    } else {
        conv3d_grad_w_serial(x, gy, gw, s);
    }
}

Tensor local_maxima(const Tensor& h) {
    if (h.rank() != 3) {
        throw DimensionError("local_maxima: expected rank-3 heatmap, got " + h.shape_str());
    }
    const int channels = h.dim(0), rows = h.dim(1), cols = h.dim(2);
    Tensor mask(h.shape());
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < rows; ++y) {
            for (int x = 0; x < cols; ++x) {
                double v = h.at(c, y, x);
                bool is_max = true;
                for (int dy = -1; dy <= 1 && is_max; ++dy) {
                    int ny = std::clamp(y + dy, 0, rows - 1);
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = std::clamp(x + dx, 0, cols - 1);
                        if (h.at(c, ny, nx) > v) {
                            is_max = false;
                            break;
                        }
                    }
                }
                mask.at(c, y, x) = is_max ? 1.0 : 0.0;
            }
        }
    }
    return mask;
}

Tensor avg_pool2d(const Tensor& x, int k) {
    if (x.rank() != 3) {
        throw DimensionError("avg_pool2d: expected rank-3 input, got " + x.shape_str());
    }
    if (k <= 0 || x.dim(1) % k != 0 || x.dim(2) % k != 0) {
        throw ContractError("avg_pool2d: pool size must divide spatial dims");
    }
    const int c = x.dim(0), oh = x.dim(1) / k, ow = x.dim(2) / k;
    Tensor y({c, oh, ow});
    const double inv = 1.0 / (k * k);
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < k; ++dy) {
                    for (int dx = 0; dx < k; ++dx) {
                        acc += x.at(ch, oy * k + dy, ox * k + dx);
                    }
                }
                y.at(ch, oy, ox) = acc * inv;
            }
        }
    }
    return y;
}

} // namespace point3d::kernels
