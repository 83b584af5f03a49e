// AVX2 + FMA variants. This translation unit is built with -mavx2 -mfma and
// must only be entered after the dispatcher has checked the CPU flags.

#include "gptlab/kernels/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <vector>

namespace gptlab::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Every output element is a single fma chain over p = 0..k-1 whichever
// path computes it, so a row's result never depends on m, on its position in
// the blocking or on n. Blocks are 4 rows by 8 columns. A(r, p) is read at
// a[r * rs + p * ps], which covers both A and A^T without a copy.
template <std::size_t R>
inline void block_rows(std::size_t n, std::size_t k, const double* a, std::size_t rs,
                       std::size_t ps, const double* b, double* c, bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d lo[R], hi[R];
    for (std::size_t r = 0; r < R; ++r) {
      lo[r] = accumulate ? _mm256_loadu_pd(c + r * n + j) : _mm256_setzero_pd();
      hi[r] = accumulate ? _mm256_loadu_pd(c + r * n + j + 4) : _mm256_setzero_pd();
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
      const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
      for (std::size_t r = 0; r < R; ++r) {
        const __m256d av = _mm256_broadcast_sd(a + r * rs + p * ps);
        lo[r] = _mm256_fmadd_pd(av, b0, lo[r]);
        hi[r] = _mm256_fmadd_pd(av, b1, hi[r]);
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      _mm256_storeu_pd(c + r * n + j, lo[r]);
      _mm256_storeu_pd(c + r * n + j + 4, hi[r]);
    }
  }
  for (; j + 4 <= n; j += 4) {
    __m256d acc[R];
    for (std::size_t r = 0; r < R; ++r)
      acc[r] = accumulate ? _mm256_loadu_pd(c + r * n + j) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d bv = _mm256_loadu_pd(b + p * n + j);
      for (std::size_t r = 0; r < R; ++r)
        acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * rs + p * ps), bv, acc[r]);
    }
    for (std::size_t r = 0; r < R; ++r) _mm256_storeu_pd(c + r * n + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < R; ++r) {
      double acc = accumulate ? c[r * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[r * rs + p * ps], b[p * n + j], acc);
      c[r * n + j] = acc;
    }
  }
}

void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs,
                  std::size_t ps, const double* b, double* c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) block_rows<4>(n, k, a + i * rs, rs, ps, b, c + i * n, accumulate);
  for (; i < m; ++i) block_rows<1>(n, k, a + i * rs, rs, ps, b, c + i * n, accumulate);
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  gemm_strided(m, n, k, a, k, 1, b, c, accumulate);
}

// rows x cols -> cols x rows into a per-thread scratch buffer.
const double* transposed(const double* x, std::size_t rows, std::size_t cols) {
  thread_local std::vector<double> buf;
  buf.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q) buf[q * rows + r] = x[r * cols + q];
  return buf.data();
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4),
                           acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  gemm_nn(m, n, k, a, transposed(b, n, k), c, accumulate);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4),
                                                _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  gemm_strided(m, n, k, a, 1, m, b, c, accumulate);
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace

namespace detail {
const KernelTable& avx2_table() {
  static const KernelTable t{Isa::kAvx2, "avx2", gemm_nn, gemm_nt, gemm_tn,
                             dot,        axpy,   add,     mul,     scale};
  return t;
}
}  // namespace detail

}  // namespace gptlab::kernels
