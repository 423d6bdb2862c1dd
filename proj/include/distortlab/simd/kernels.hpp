#pragma once

// Data-parallel double-precision kernels with a scalar reference and
// ISA-specific variants selected once per process.
//
// Reductions (sum, dot, gemv) may reassociate additions, so results agree
// with the scalar reference only to rounding. Elementwise division, argmax
// and max_abs_diff are bit-identical across variants.

#include <cstddef>
#include <span>

namespace distortlab::simd {

enum class Isa { Scalar, Avx2, Neon };

const char* isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[r] = sum_c m[r * cols + c] * x[c]
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y);
  void (*divide)(double* x, std::size_t n, double divisor);
  // First index holding the maximum; n must be > 0.
  std::size_t (*argmax)(const double* x, std::size_t n);
  double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
};

namespace scalar {
const KernelTable& table() noexcept;
}
namespace avx2 {
const KernelTable& table() noexcept;
}
namespace neon {
const KernelTable& table() noexcept;
}

bool isa_available(Isa isa) noexcept;

// Kernels for one ISA, or nullptr when it was not compiled in or the CPU lacks it.
const KernelTable* table_for_isa(Isa isa) noexcept;

// Chooses the widest available ISA on first use. DISTORTLAB_SIMD=scalar|avx2|neon
// in the environment overrides the choice when that ISA is available.
const KernelTable& active() noexcept;

// Test hook: pins the active table. Not thread-safe against concurrent kernel use.
void force_isa(Isa isa);

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline void divide(std::span<double> x, double divisor) {
  active().divide(x.data(), x.size(), divisor);
}

inline std::size_t argmax(std::span<const double> x) { return active().argmax(x.data(), x.size()); }

inline double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().max_abs_diff(x.data(), y.data(), x.size());
}

}  // namespace distortlab::simd
