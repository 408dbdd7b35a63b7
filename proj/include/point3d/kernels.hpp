#pragma once

#include "point3d/tensor.hpp"

// Dense inner-loop kernels. Every kernel ships in two variants: a serial
// reference (`*_serial`) kept for testing, and an OpenMP version (`*_omp`)
// parallelized over independent output elements only, so results are
// bitwise identical regardless of thread count. The unsuffixed entry
// points dispatch on the configured worker cap. bench/ compares the two.
namespace point3d::kernels {

// n <= 1 selects the serial kernels everywhere.
void set_max_threads(int n);
int max_threads();
bool parallel_enabled();

struct Conv2dSpec {
    int cin = 0, h = 0, w = 0;
    int cout = 0, kh = 0, kw = 0;
    int stride = 1, pad = 0;

    int out_h() const { return (h + 2 * pad - kh) / stride + 1; }
    int out_w() const { return (w + 2 * pad - kw) / stride + 1; }
    void validate() const; // throws DimensionError when the kernel does not fit
};

struct Conv3dSpec {
    int cin = 0, t = 0, h = 0, w = 0;
    int cout = 0, kt = 0, kh = 0, kw = 0;
    int stride = 1, pad = 0;

    int out_t() const { return (t + 2 * pad - kt) / stride + 1; }
    int out_h() const { return (h + 2 * pad - kh) / stride + 1; }
    int out_w() const { return (w + 2 * pad - kw) / stride + 1; }
    void validate() const;
};

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_omp(const double* a, const double* b, double* c, int m, int k, int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// Cross-correlation (no kernel flip). x: cin x h x w, w: cout x cin x kh x kw.
void conv2d_serial(const double* x, const double* w, double* y, const Conv2dSpec& s);
void conv2d_omp(const double* x, const double* w, double* y, const Conv2dSpec& s);
void conv2d(const double* x, const double* w, double* y, const Conv2dSpec& s);

// Gradients written as gathers over the output coordinate so each output
// element of gx/gw is owned by exactly one loop iteration.
void conv2d_grad_x_serial(const double* gy, const double* w, double* gx, const Conv2dSpec& s);
void conv2d_grad_x_omp(const double* gy, const double* w, double* gx, const Conv2dSpec& s);
void conv2d_grad_x(const double* gy, const double* w, double* gx, const Conv2dSpec& s);

void conv2d_grad_w_serial(const double* x, const double* gy, double* gw, const Conv2dSpec& s);
void conv2d_grad_w_omp(const double* x, const double* gy, double* gw, const Conv2dSpec& s);
void conv2d_grad_w(const double* x, const double* gy, double* gw, const Conv2dSpec& s);

void conv3d_serial(const double* x, const double* w, double* y, const Conv3dSpec& s);
void conv3d_omp(const double* x, const double* w, double* y, const Conv3dSpec& s);
void conv3d(const double* x, const double* w, double* y, const Conv3dSpec& s);

void conv3d_grad_x_serial(const double* gy, const double* w, double* gx, const Conv3dSpec& s);
void conv3d_grad_x_omp(const double* gy, const double* w, double* gx, const Conv3dSpec& s);
void conv3d_grad_x(const double* gy, const double* w, double* gx, const Conv3dSpec& s);

void conv3d_grad_w_serial(const double* x, const double* gy, double* gw, const Conv3dSpec& s);
void conv3d_grad_w_omp(const double* x, const double* gy, double* gw, const Conv3dSpec& s);
void conv3d_grad_w(const double* x, const double* gy, double* gw, const Conv3dSpec& s);

// Binary mask of 3x3 local maxima per channel, edge-clamped neighborhoods,
// ties kept. Constant regions are therefore all-ones; callers compose with
// a score threshold (see decode).
Tensor local_maxima(const Tensor& heatmaps);

// Non-overlapping k x k mean pooling over each channel of a rank-3 tensor.
Tensor avg_pool2d(const Tensor& x, int k);

} // namespace point3d::kernels
