#include "mmreid/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmreid::kernels {

namespace {

std::atomic<int> g_threads{0};  // 0 = uninitialized, resolve lazily

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int thread_count() {
    int t = g_threads.load(std::memory_order_relaxed);
    if (t == 0) {
        t = max_threads();
        g_threads.store(t, std::memory_order_relaxed);
    }
    return t;
}

void set_thread_count(int n) {
    g_threads.store(std::clamp(n, 1, std::max(1, max_threads())), std::memory_order_relaxed);
}

// ---------------------------------------------------------------- matmul

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
#else
    matmul_nn_serial(a, b, c, m, k, n, accumulate);
#endif
}

namespace {
// tiny matmuls lose more to fork/join than they gain from threads
inline bool parallel_worthwhile(int m, long long flops) {
    return thread_count() > 1 && m > 1 && flops >= (1 << 17);
}
}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (parallel_worthwhile(m, 2LL * m * k * n)) {
        matmul_nn_parallel(a, b, c, m, k, n, accumulate);
    } else {
        matmul_nn_serial(a, b, c, m, k, n, accumulate);
    }
}

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void matmul_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
#else
    matmul_nt_serial(a, b, c, m, k, n, accumulate);
#endif
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (parallel_worthwhile(m, 2LL * m * k * n)) {
        matmul_nt_parallel(a, b, c, m, k, n, accumulate);
    } else {
        matmul_nt_serial(a, b, c, m, k, n, accumulate);
    }
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    // a is k x m, b is k x n
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<std::size_t>(p) * m + i];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<std::size_t>(p) * m + i];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
#else
    matmul_tn_serial(a, b, c, m, k, n, accumulate);
#endif
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (parallel_worthwhile(m, 2LL * m * k * n)) {
        matmul_tn_parallel(a, b, c, m, k, n, accumulate);
    } else {
        matmul_tn_serial(a, b, c, m, k, n, accumulate);
    }
}

// ------------------------------------------------------------ elementwise

void vec_add(const double* a, const double* b, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void vec_sub(const double* a, const double* b, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void vec_mul(const double* a, const double* b, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void vec_scale(const double* a, double alpha, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = a[i] * alpha;
}

void vec_acc(double* y, const double* x, int n) {
    for (int i = 0; i < n; ++i) y[i] += x[i];
}

void vec_acc_scaled(double* y, const double* x, double alpha, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vec_exp(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void vec_log(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = std::log(x[i]);
}

void relu_fwd(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* gy, double* gx_acc, int n) {
    for (int i = 0; i < n; ++i) {
        if (x[i] > 0.0) gx_acc[i] += gy[i];
    }
}

void gelu_fwd(const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) {
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    }
}

void gelu_bwd(const double* x, const double* gy, double* gx_acc, int n) {
    for (int i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        gx_acc[i] += gy[i] * (cdf + x[i] * pdf);
    }
}

// --------------------------------------------------------------- softmax

void softmax_rows_serial(const double* x, double* y, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* xr = x + static_cast<std::size_t>(i) * cols;
        double* yr = y + static_cast<std::size_t>(i) * cols;
        double mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            denom += yr[j];
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

void softmax_rows_parallel(const double* x, double* y, int rows, int cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int i = 0; i < rows; ++i) {
        softmax_rows_serial(x + static_cast<std::size_t>(i) * cols,
                            y + static_cast<std::size_t>(i) * cols, 1, cols);
    }
#else
    softmax_rows_serial(x, y, rows, cols);
#endif
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
    if (parallel_worthwhile(rows, 8LL * rows * cols)) {
        softmax_rows_parallel(x, y, rows, cols);
    } else {
        softmax_rows_serial(x, y, rows, cols);
    }
}

void softmax_rows_bwd(const double* y, const double* gy, double* gx_acc, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* yr = y + static_cast<std::size_t>(i) * cols;
        const double* gr = gy + static_cast<std::size_t>(i) * cols;
        double* xr = gx_acc + static_cast<std::size_t>(i) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += yr[j] * gr[j];
        for (int j = 0; j < cols; ++j) xr[j] += yr[j] * (gr[j] - dot);
    }
}

void log_softmax_rows(const double* x, double* y, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* xr = x + static_cast<std::size_t>(i) * cols;
        double* yr = y + static_cast<std::size_t>(i) * cols;
        double mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) denom += std::exp(xr[j] - mx);
        const double lse = mx + std::log(denom);
        for (int j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
    }
}

void log_softmax_rows_bwd(const double* logp, const double* gy, double* gx_acc, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* lr = logp + static_cast<std::size_t>(i) * cols;
        const double* gr = gy + static_cast<std::size_t>(i) * cols;
        double* xr = gx_acc + static_cast<std::size_t>(i) * cols;
        double gsum = 0.0;
        for (int j = 0; j < cols; ++j) gsum += gr[j];
        for (int j = 0; j < cols; ++j) xr[j] += gr[j] - std::exp(lr[j]) * gsum;
    }
}

// ------------------------------------------------------------ layer norm

void layer_norm_rows_serial(const double* x, const double* gamma, const double* beta,
                            double* y, double* xhat, double* inv_std, int rows, int cols, double eps) {
    for (int i = 0; i < rows; ++i) {
        const double* xr = x + static_cast<std::size_t>(i) * cols;
        double* yr = y + static_cast<std::size_t>(i) * cols;
        double* hr = xhat + static_cast<std::size_t>(i) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += xr[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= cols;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = istd;
        for (int j = 0; j < cols; ++j) {
            hr[j] = (xr[j] - mean) * istd;
            yr[j] = gamma[j] * hr[j] + beta[j];
        }
    }
}

void layer_norm_rows_parallel(const double* x, const double* gamma, const double* beta,
                              double* y, double* xhat, double* inv_std, int rows, int cols, double eps) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int i = 0; i < rows; ++i) {
        layer_norm_rows_serial(x + static_cast<std::size_t>(i) * cols, gamma, beta,
                               y + static_cast<std::size_t>(i) * cols,
                               xhat + static_cast<std::size_t>(i) * cols,
                               inv_std + i, 1, cols, eps);
    }
#else
    layer_norm_rows_serial(x, gamma, beta, y, xhat, inv_std, rows, cols, eps);
#endif
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     double* y, double* xhat, double* inv_std, int rows, int cols, double eps) {
    if (parallel_worthwhile(rows, 10LL * rows * cols)) {
        layer_norm_rows_parallel(x, gamma, beta, y, xhat, inv_std, rows, cols, eps);
    } else {
        layer_norm_rows_serial(x, gamma, beta, y, xhat, inv_std, rows, cols, eps);
    }
}

void layer_norm_rows_bwd(const double* xhat, const double* inv_std, const double* gamma,
                         const double* gy, double* gx_acc, double* ggamma_acc, double* gbeta_acc,
                         int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* hr = xhat + static_cast<std::size_t>(i) * cols;
        const double* gr = gy + static_cast<std::size_t>(i) * cols;
        double* xr = gx_acc + static_cast<std::size_t>(i) * cols;
        double sum_g = 0.0;
        double sum_gh = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double gg = gamma[j] * gr[j];
            sum_g += gg;
            sum_gh += gg * hr[j];
        }
        const double inv_n = 1.0 / cols;
        for (int j = 0; j < cols; ++j) {
            const double gg = gamma[j] * gr[j];
            xr[j] += inv_std[i] * (gg - inv_n * sum_g - hr[j] * inv_n * sum_gh);
        }
    }
    // column reductions; parallel over columns keeps accumulation order fixed
    for (int j = 0; j < cols; ++j) {
        double dg = 0.0;
        double db = 0.0;
        for (int i = 0; i < rows; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
            dg += gy[idx] * xhat[idx];
            db += gy[idx];
        }
        ggamma_acc[j] += dg;
        gbeta_acc[j] += db;
    }
}

// ---------------------------------------------------------- l2 normalize

void l2_normalize_rows(const double* x, double* y, double* inv_norm,
                       int rows, int cols, double eps, std::vector<int>* degenerate) {
    for (int i = 0; i < rows; ++i) {
        const double* xr = x + static_cast<std::size_t>(i) * cols;
        double* yr = y + static_cast<std::size_t>(i) * cols;
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += xr[j] * xr[j];
        const double norm = std::sqrt(s);
        if (norm < eps) {
            inv_norm[i] = 0.0;  // row passes through unchanged
            for (int j = 0; j < cols; ++j) yr[j] = xr[j];
            if (degenerate) degenerate->push_back(i);
        } else if (std::abs(norm - 1.0) < 1e-13) {
            // Snap: rows already at unit norm pass through bitwise, making
            // normalization idempotent. Gradient still uses the projection
            // rule with inv_norm = 1.
            inv_norm[i] = 1.0;
            for (int j = 0; j < cols; ++j) yr[j] = xr[j];
        } else {
            const double inv = 1.0 / norm;
            inv_norm[i] = inv;
            for (int j = 0; j < cols; ++j) yr[j] = xr[j] * inv;
        }
    }
}

void l2_normalize_rows_bwd(const double* y, const double* inv_norm, const double* gy,
                           double* gx_acc, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* yr = y + static_cast<std::size_t>(i) * cols;
        const double* gr = gy + static_cast<std::size_t>(i) * cols;
        double* xr = gx_acc + static_cast<std::size_t>(i) * cols;
        if (inv_norm[i] == 0.0) {  // degenerate row: identity
            for (int j = 0; j < cols; ++j) xr[j] += gr[j];
            continue;
        }
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += yr[j] * gr[j];
        for (int j = 0; j < cols; ++j) xr[j] += inv_norm[i] * (gr[j] - yr[j] * dot);
    }
}

}  // namespace mmreid::kernels
