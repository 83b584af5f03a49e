#include "gptlab/kernels/kernels.hpp"

#include <cstring>

namespace gptlab::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    if (!accumulate) std::memset(c_row, 0, n * sizeof(double));
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a_row[p];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

double dot(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot(k, a + i * k, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p) {
    const double* a_row = a + p * m;
    const double* b_row = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (a_row[i] != 0.0) axpy(n, a_row[i], b_row, c + i * n);
    }
  }
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

}  // namespace

namespace detail {
const KernelTable& scalar_table() {
  static const KernelTable t{Isa::kScalar, "scalar", gemm_nn, gemm_nt, gemm_tn,
                             dot,          axpy,     add,     mul,     scale};
  return t;
}
}  // namespace detail

}  // namespace gptlab::kernels
