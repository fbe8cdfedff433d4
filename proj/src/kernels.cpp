#include "fsloc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fsloc::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

// ---------------------------------------------------------------------------
// production kernels

void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c,
               bool accumulate) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const double* gi = g + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      ci[p] = accumulate ? ci[p] + s : s;
    }
  }
}

void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* g, double* c,
               bool accumulate) {
  // Row i of C gathers column i of A; parallel over C rows keeps writes disjoint.
  const long rows = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < m; ++p) {
      const double api = a[p * k + i];
      if (api == 0.0) continue;
      const double* gp = g + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * gp[j];
    }
  }
}

void conv1d_forward(const Conv1dShape& s, const double* x, const double* w, const double* bias, double* y) {
  const long jobs = static_cast<long>(s.batch * s.out_channels);
#pragma omp parallel for schedule(static) if (s.batch * s.out_channels * s.out_length * s.in_channels * s.kernel > kParallelWork)
  for (long job = 0; job < jobs; ++job) {
    const std::size_t bi = job / s.out_channels;
    const std::size_t o = job % s.out_channels;
    double* yo = y + (bi * s.out_channels + o) * s.out_length;
    const double b0 = bias ? bias[o] : 0.0;
    for (std::size_t t = 0; t < s.out_length; ++t) yo[t] = b0;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* xc = x + (bi * s.in_channels + c) * s.length;
      const double* wc = w + (o * s.in_channels + c) * s.kernel;
      for (std::size_t j = 0; j < s.kernel; ++j) {
        const double wj = wc[j];
        for (std::size_t t = 0; t < s.out_length; ++t) {
          const long pos = static_cast<long>(t * s.stride + j) - static_cast<long>(s.pad_left);
          if (pos >= 0 && pos < static_cast<long>(s.length)) yo[t] += wj * xc[pos];
        }
      }
    }
  }
}

void conv1d_backward(const Conv1dShape& s, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* dbias) {
  const long batch = static_cast<long>(s.batch);
  const bool big = s.batch * s.out_channels * s.out_length * s.in_channels * s.kernel > kParallelWork;
  if (dx) {
#pragma omp parallel for schedule(static) if (big)
    for (long bi = 0; bi < batch; ++bi) {
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        const double* dyo = dy + (bi * s.out_channels + o) * s.out_length;
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          double* dxc = dx + (bi * s.in_channels + c) * s.length;
          const double* wc = w + (o * s.in_channels + c) * s.kernel;
          for (std::size_t j = 0; j < s.kernel; ++j) {
            for (std::size_t t = 0; t < s.out_length; ++t) {
              const long pos = static_cast<long>(t * s.stride + j) - static_cast<long>(s.pad_left);
              if (pos >= 0 && pos < static_cast<long>(s.length)) dxc[pos] += wc[j] * dyo[t];
            }
          }
        }
      }
    }
  }
  if (dw || dbias) {
    // Parallel over output channels; each thread owns its slice of dw/dbias.
    const long outs = static_cast<long>(s.out_channels);
#pragma omp parallel for schedule(static) if (big)
    for (long o = 0; o < outs; ++o) {
      for (std::size_t bi = 0; bi < s.batch; ++bi) {
        const double* dyo = dy + (bi * s.out_channels + o) * s.out_length;
        if (dbias)
          for (std::size_t t = 0; t < s.out_length; ++t) dbias[o] += dyo[t];
        if (!dw) continue;
        for (std::size_t c = 0; c < s.in_channels; ++c) {
          const double* xc = x + (bi * s.in_channels + c) * s.length;
          double* dwc = dw + (o * s.in_channels + c) * s.kernel;
          for (std::size_t j = 0; j < s.kernel; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < s.out_length; ++t) {
              const long pos = static_cast<long>(t * s.stride + j) - static_cast<long>(s.pad_left);
              if (pos >= 0 && pos < static_cast<long>(s.length)) acc += xc[pos] * dyo[t];
            }
            dwc[j] += acc;
          }
        }
      }
    }
  }
}

void pairwise_absdiff(std::size_t n, std::size_t d, const double* x, double* out) {
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * n * d > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const double* xi = x + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* xj = x + j * d;
      double* o = out + (i * n + j) * d;
#pragma omp simd
      for (std::size_t c = 0; c < d; ++c) o[c] = std::abs(xi[c] - xj[c]);
    }
  }
}

void pairwise_absdiff_backward(std::size_t n, std::size_t d, const double* x, const double* g, double* dx) {
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * n * d > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const double* xi = x + i * d;
    double* dxi = dx + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* xj = x + j * d;
      const double* gij = g + (i * n + j) * d;
      const double* gji = g + (j * n + i) * d;
      for (std::size_t c = 0; c < d; ++c) dxi[c] += sign(xi[c] - xj[c]) * (gij[c] + gji[c]);
    }
  }
}

// ---------------------------------------------------------------------------
// serial reference kernels

namespace serial {

void matmul_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void matmul_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
      c[i * k + p] = accumulate ? c[i * k + p] + s : s;
    }
}

void matmul_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* g, double* c,
               bool accumulate) {
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < m; ++p) s += a[p * k + i] * g[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
}

void conv1d_forward(const Conv1dShape& s, const double* x, const double* w, const double* bias, double* y) {
  for (std::size_t bi = 0; bi < s.batch; ++bi)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t t = 0; t < s.out_length; ++t) {
        double acc = bias ? bias[o] : 0.0;
        for (std::size_t c = 0; c < s.in_channels; ++c)
          for (std::size_t j = 0; j < s.kernel; ++j) {
            const long pos = static_cast<long>(t * s.stride + j) - static_cast<long>(s.pad_left);
            if (pos < 0 || pos >= static_cast<long>(s.length)) continue;
            acc += w[(o * s.in_channels + c) * s.kernel + j] * x[(bi * s.in_channels + c) * s.length + pos];
          }
        y[(bi * s.out_channels + o) * s.out_length + t] = acc;
      }
}

void conv1d_backward(const Conv1dShape& s, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* dbias) {
  for (std::size_t bi = 0; bi < s.batch; ++bi)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t t = 0; t < s.out_length; ++t) {
        const double g = dy[(bi * s.out_channels + o) * s.out_length + t];
        if (dbias) dbias[o] += g;
        for (std::size_t c = 0; c < s.in_channels; ++c)
          for (std::size_t j = 0; j < s.kernel; ++j) {
            const long pos = static_cast<long>(t * s.stride + j) - static_cast<long>(s.pad_left);
            if (pos < 0 || pos >= static_cast<long>(s.length)) continue;
            const std::size_t xi = (bi * s.in_channels + c) * s.length + pos;
            const std::size_t wi = (o * s.in_channels + c) * s.kernel + j;
            if (dx) dx[xi] += w[wi] * g;
            if (dw) dw[wi] += x[xi] * g;
          }
      }
}

void pairwise_absdiff(std::size_t n, std::size_t d, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) out[(i * n + j) * d + c] = std::abs(x[i * d + c] - x[j * d + c]);
}

void pairwise_absdiff_backward(std::size_t n, std::size_t d, const double* x, const double* g, double* dx) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) {
        const double s = sign(x[i * d + c] - x[j * d + c]);
        const double gg = g[(i * n + j) * d + c];
        dx[i * d + c] += s * gg;
        dx[j * d + c] -= s * gg;
      }
}

}  // namespace serial
}  // namespace fsloc::kernels
