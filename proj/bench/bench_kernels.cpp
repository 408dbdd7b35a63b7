// Compares the serial reference kernels against the OpenMP variants on the
// shapes the model actually runs. Usage: bench_kernels [threads]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "point3d/kernels.hpp"
#include "point3d/rng.hpp"
#include "point3d/tensor.hpp"

using namespace point3d;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms, double max_diff) {
    std::printf("%-28s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   max|diff| %.3g\n", name,
                serial_ms, omp_ms, serial_ms / omp_ms, max_diff);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace

int main(int argc, char** argv) {
    int threads = argc > 1 ? std::atoi(argv[1]) : 0;
    kernels::set_max_threads(threads);
    Rng rng(7);

    {
        const int m = 128, k = 4096, n = 128;
        Tensor a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n});
        Tensor cs({m, n}), cp({m, n});
        double ts = time_ms([&] { kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n); }, 5);
        double tp = time_ms([&] { kernels::matmul_omp(a.data(), b.data(), cp.data(), m, k, n); }, 5);
        report("matmul 128x4096x128", ts, tp, max_abs_diff(cs, cp));
    }
    {
        kernels::Conv2dSpec s{32, 64, 64, 32, 3, 3, 1, 1};
        Tensor x = random_tensor(rng, {s.cin, s.h, s.w});
        Tensor w = random_tensor(rng, {s.cout, s.cin, s.kh, s.kw});
        Tensor ys({s.cout, s.out_h(), s.out_w()}), yp(ys.shape());
        double ts = time_ms([&] { kernels::conv2d_serial(x.data(), w.data(), ys.data(), s); }, 3);
        double tp = time_ms([&] { kernels::conv2d_omp(x.data(), w.data(), yp.data(), s); }, 3);
        report("conv2d 32x64x64 k3", ts, tp, max_abs_diff(ys, yp));

        Tensor gxs({s.cin, s.h, s.w}), gxp(gxs.shape());
        double bs = time_ms([&] { kernels::conv2d_grad_x_serial(ys.data(), w.data(), gxs.data(), s); }, 3);
        double bp = time_ms([&] { kernels::conv2d_grad_x_omp(ys.data(), w.data(), gxp.data(), s); }, 3);
        report("conv2d grad_x", bs, bp, max_abs_diff(gxs, gxp));

        Tensor gws(w.shape()), gwp(w.shape());
        double ws_ms = time_ms([&] { kernels::conv2d_grad_w_serial(x.data(), ys.data(), gws.data(), s); }, 3);
        double wp_ms = time_ms([&] { kernels::conv2d_grad_w_omp(x.data(), ys.data(), gwp.data(), s); }, 3);
        report("conv2d grad_w", ws_ms, wp_ms, max_abs_diff(gws, gwp));
    }
    {
        kernels::Conv3dSpec s{32, 8, 16, 16, 32, 3, 3, 3, 2, 1};
        Tensor x = random_tensor(rng, {s.cin, s.t, s.h, s.w});
        Tensor w = random_tensor(rng, {s.cout, s.cin, s.kt, s.kh, s.kw});
        Tensor ys({s.cout, s.out_t(), s.out_h(), s.out_w()}), yp(ys.shape());
        double ts = time_ms([&] { kernels::conv3d_serial(x.data(), w.data(), ys.data(), s); }, 3);
        double tp = time_ms([&] { kernels::conv3d_omp(x.data(), w.data(), yp.data(), s); }, 3);
        report("conv3d 32x8x16x16 k3 s2", ts, tp, max_abs_diff(ys, yp));
    }
    return 0;
}
