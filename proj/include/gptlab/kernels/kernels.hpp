#pragma once

// Dense double-precision kernels behind a runtime dispatch table.
//
// Every kernel has a portable scalar reference implementation; SIMD variants
// live in their own translation units compiled with ISA-specific flags and
// are only installed when the host CPU reports support for them.
// Row-major storage everywhere. Row i of every GEMM output depends only on
// row i of the left operand, so results never depend on how many other rows
// are in the same call.

#include <cstddef>
#include <string_view>

namespace gptlab::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  // C[m x n] (+)= A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);

  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
};

bool isa_supported(Isa isa);

// Throws std::invalid_argument when the ISA is not available on this host.
const KernelTable& table(Isa isa);

// Best supported table, chosen once. GPT_LAB_SIMD=scalar|avx2 overrides the
// choice (an unsupported request falls back to scalar).
const KernelTable& active();

Isa parse_isa(std::string_view name);

namespace detail {
const KernelTable& scalar_table();
#if defined(GPTLAB_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
}  // namespace detail

}  // namespace gptlab::kernels
