#pragma once

#include <vector>

// Dense CPU kernels behind the tensor ops. Every kernel has a serial
// reference implementation and an OpenMP variant partitioned so that each
// output element is produced by exactly one thread with a fixed accumulation
// order; the two are bit-identical and the tests assert it. The dispatching
// entry points pick a variant from the global thread setting.
namespace mmreid::kernels {

int max_threads();
int thread_count();
void set_thread_count(int n);  // clamped to [1, max]; 1 selects the serial path

// C[m x n] = A[m x k] * B[k x n]          (accumulate: C += ...)
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_nn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
void matmul_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

void vec_add(const double* a, const double* b, double* y, int n);
void vec_sub(const double* a, const double* b, double* y, int n);
void vec_mul(const double* a, const double* b, double* y, int n);
void vec_scale(const double* a, double alpha, double* y, int n);
void vec_acc(double* y, const double* x, int n);                  // y += x
void vec_acc_scaled(double* y, const double* x, double alpha, int n);
void vec_exp(const double* x, double* y, int n);
void vec_log(const double* x, double* y, int n);

void relu_fwd(const double* x, double* y, int n);
void relu_bwd(const double* x, const double* gy, double* gx_acc, int n);
void gelu_fwd(const double* x, double* y, int n);
void gelu_bwd(const double* x, const double* gy, double* gx_acc, int n);

// Row-wise softmax with max subtraction.
void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_serial(const double* x, double* y, int rows, int cols);
void softmax_rows_parallel(const double* x, double* y, int rows, int cols);
// gx += y .* (gy - rowsum(gy .* y))
void softmax_rows_bwd(const double* y, const double* gy, double* gx_acc, int rows, int cols);

void log_softmax_rows(const double* x, double* y, int rows, int cols);
// gx += gy - exp(logp) * rowsum(gy)
void log_softmax_rows_bwd(const double* logp, const double* gy, double* gx_acc, int rows, int cols);

// y = gamma .* (x - mean)/sqrt(var + eps) + beta, per row; xhat and inv_std
// are saved for the backward pass.
void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     double* y, double* xhat, double* inv_std, int rows, int cols, double eps);
void layer_norm_rows_serial(const double* x, const double* gamma, const double* beta,
                            double* y, double* xhat, double* inv_std, int rows, int cols, double eps);
void layer_norm_rows_parallel(const double* x, const double* gamma, const double* beta,
                              double* y, double* xhat, double* inv_std, int rows, int cols, double eps);
void layer_norm_rows_bwd(const double* xhat, const double* inv_std, const double* gamma,
                         const double* gy, double* gx_acc, double* ggamma_acc, double* gbeta_acc,
                         int rows, int cols);

// Rows with norm < eps pass through unchanged and are reported in degenerate.
void l2_normalize_rows(const double* x, double* y, double* inv_norm,
                       int rows, int cols, double eps, std::vector<int>* degenerate);
void l2_normalize_rows_bwd(const double* y, const double* inv_norm, const double* gy,
                           double* gx_acc, int rows, int cols);

}  // namespace mmreid::kernels
