// Timing comparison of the serial reference kernels against the OpenMP
// variants. Build in Release; run with no arguments for the default grid.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "mmreid/kernels.hpp"
#include "mmreid/rng.hpp"

using namespace mmreid;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> random_vec(int n, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

}  // namespace

int main() {
    Rng rng(1);
    std::printf("threads available: %d\n\n", kernels::max_threads());
    std::printf("%-28s %10s %10s %8s\n", "kernel", "serial ms", "omp ms", "speedup");

    const std::vector<std::array<int, 3>> matmul_sizes = {
        {64, 64, 64}, {128, 128, 128}, {256, 256, 256}, {96, 512, 96}};
    for (auto [m, k, n] : matmul_sizes) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        std::vector<double> c(static_cast<std::size_t>(m) * n);
        const int reps = m <= 128 ? 50 : 10;
        const double ts = time_ms([&] { kernels::matmul_nn_serial(a.data(), b.data(), c.data(), m, k, n); }, reps);
        const double tp = time_ms([&] { kernels::matmul_nn_parallel(a.data(), b.data(), c.data(), m, k, n); }, reps);
        char label[64];
        std::snprintf(label, sizeof(label), "matmul_nn %dx%dx%d", m, k, n);
        std::printf("%-28s %10.3f %10.3f %7.2fx\n", label, ts, tp, ts / tp);
    }

    const std::vector<std::array<int, 2>> row_sizes = {{512, 512}, {2048, 256}};
    for (auto [rows, cols] : row_sizes) {
        auto x = random_vec(rows * cols, rng);
        std::vector<double> y(x.size());
        const double ts = time_ms([&] { kernels::softmax_rows_serial(x.data(), y.data(), rows, cols); }, 50);
        const double tp = time_ms([&] { kernels::softmax_rows_parallel(x.data(), y.data(), rows, cols); }, 50);
        char label[64];
        std::snprintf(label, sizeof(label), "softmax_rows %dx%d", rows, cols);
        std::printf("%-28s %10.3f %10.3f %7.2fx\n", label, ts, tp, ts / tp);

        auto gamma = random_vec(cols, rng);
        auto beta = random_vec(cols, rng);
        std::vector<double> h(x.size());
        std::vector<double> s(static_cast<std::size_t>(rows));
        const double ls = time_ms([&] {
            kernels::layer_norm_rows_serial(x.data(), gamma.data(), beta.data(), y.data(),
                                            h.data(), s.data(), rows, cols, 1e-5);
        }, 50);
        const double lp = time_ms([&] {
            kernels::layer_norm_rows_parallel(x.data(), gamma.data(), beta.data(), y.data(),
                                              h.data(), s.data(), rows, cols, 1e-5);
        }, 50);
        std::snprintf(label, sizeof(label), "layer_norm %dx%d", rows, cols);
        std::printf("%-28s %10.3f %10.3f %7.2fx\n", label, ls, lp, ls / lp);
    }
    return 0;
}
