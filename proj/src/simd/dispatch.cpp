#include <atomic>
#include <string>
#include <cstdlib>
#include <stdexcept>
#include <string_view>

#include "distortlab/simd/kernels.hpp"

namespace distortlab::simd {

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(DISTORTLAB_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(DISTORTLAB_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable& table_for(Isa isa) {
  switch (isa) {
#if defined(DISTORTLAB_HAVE_AVX2)
    case Isa::Avx2: return avx2::table();
#endif
#if defined(DISTORTLAB_HAVE_NEON)
    case Isa::Neon: return neon::table();
#endif
    default: return scalar::table();
  }
}

}  // namespace

const KernelTable* table_for_isa(Isa isa) noexcept {
  return isa_available(isa) ? &table_for(isa) : nullptr;
}

namespace {

const KernelTable* select_default() {
  Isa best = Isa::Scalar;
  if (isa_available(Isa::Avx2)) best = Isa::Avx2;
  if (isa_available(Isa::Neon)) best = Isa::Neon;
  if (const char* env = std::getenv("DISTORTLAB_SIMD")) {
    const std::string_view want(env);
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (want == isa_name(isa) && isa_available(isa)) best = isa;
    }
  }
  return &table_for(best);
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{select_default()};
  return current;
}

}  // namespace

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument(std::string("ISA not available: ") + isa_name(isa));
  slot().store(&table_for(isa), std::memory_order_release);
}

}  // namespace distortlab::simd
