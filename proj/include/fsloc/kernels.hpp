#pragma once

// Dense inner loops used by the autodiff ops.
//
// Every kernel exists twice: the production version in `fsloc::kernels`
// (cache-friendly loop order, OpenMP over output rows when built with
// OpenMP) and a plain reference in `fsloc::kernels::serial` that the unit
// tests and the benchmark compare against. The production kernels partition
// work by output row only, so their results do not depend on the thread
// count.

#include <cstddef>

namespace fsloc::kernels {

/// C[m x n] (+)= A[m x k] * B[k x n]
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate);
/// C[m x k] (+)= G[m x n] * B[k x n]^T
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c,
               bool accumulate);
/// C[k x n] (+)= A[m x k]^T * G[m x n]
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* g, double* c,
               bool accumulate);

struct Conv1dShape {
  std::size_t batch, in_channels, length, out_channels, kernel, stride, pad_left, out_length;
};

/// y[b, o, t] = bias[o] + sum_{c, j} w[o, c, j] * x[b, c, t*stride + j - pad_left]
void conv1d_forward(const Conv1dShape& s, const double* x, const double* w, const double* bias, double* y);
/// Accumulates into dx, dw, dbias (any may be null).
void conv1d_backward(const Conv1dShape& s, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* dbias);

/// out[(i*n + j), :] = |x[i, :] - x[j, :]| for an n x d matrix.
void pairwise_absdiff(std::size_t n, std::size_t d, const double* x, double* out);
/// dx[i] += sum_j sign(x_i - x_j) * (g[i,j] + g[j,i])   (elementwise, sign(0) = 0)
void pairwise_absdiff_backward(std::size_t n, std::size_t d, const double* x, const double* g, double* dx);

namespace serial {
void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate);
void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c,
               bool accumulate);
void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* g, double* c,
               bool accumulate);
void conv1d_forward(const Conv1dShape& s, const double* x, const double* w, const double* bias, double* y);
void conv1d_backward(const Conv1dShape& s, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* dbias);
void pairwise_absdiff(std::size_t n, std::size_t d, const double* x, double* out);
void pairwise_absdiff_backward(std::size_t n, std::size_t d, const double* x, const double* g, double* dx);
}  // namespace serial

/// Threads available to the production kernels (1 without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace fsloc::kernels
