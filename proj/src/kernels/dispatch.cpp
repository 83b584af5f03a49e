#include "gptlab/kernels/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gptlab::kernels {

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(GPTLAB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel ISA not supported on this host");
  }
#if defined(GPTLAB_HAVE_AVX2)
  if (isa == Isa::kAvx2) return detail::avx2_table();
#endif
  return detail::scalar_table();
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  throw std::invalid_argument("unknown kernel ISA '" + std::string(name) + "'");
}

namespace {

const KernelTable& select_best() {
  if (const char* env = std::getenv("GPT_LAB_SIMD"); env != nullptr && *env != '\0') {
    try {
      const Isa requested = parse_isa(env);
      if (isa_supported(requested)) return table(requested);
    } catch (const std::invalid_argument&) {
    }
    return detail::scalar_table();
  }
  if (isa_supported(Isa::kAvx2)) return table(Isa::kAvx2);
  return detail::scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& chosen = select_best();
  return chosen;
}

}  // namespace gptlab::kernels
