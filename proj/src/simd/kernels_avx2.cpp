// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "distortlab/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace distortlab::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double sum(const double* x, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
  }
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double s = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(m + r * cols, x, cols);
}

void divide(double* x, std::size_t n, double divisor) {
  const __m256d d = _mm256_set1_pd(divisor);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_div_pd(_mm256_loadu_pd(x + i), d));
  for (; i < n; ++i) x[i] /= divisor;
}

std::size_t argmax(const double* x, std::size_t n) {
  double best = x[0];
  std::size_t i = 0;
  if (n >= 4) {
    __m256d m = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) m = _mm256_max_pd(m, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, m);
    for (double v : lanes) best = v > best ? v : best;
  }
  for (; i < n; ++i) best = x[i] > best ? x[i] : best;
  // first occurrence keeps the lowest-index tie-break of the scalar kernel
  for (std::size_t j = 0; j < n; ++j) {
    if (x[j] == best) return j;
  }
  return 0;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    m = _mm256_max_pd(m, _mm256_andnot_pd(sign, d));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double r = 0.0;
  for (double v : lanes) r = std::fmax(r, v);
  for (; i < n; ++i) r = std::fmax(r, std::fabs(x[i] - y[i]));
  return r;
}

constexpr KernelTable kTable{Isa::Avx2, sum, dot, gemv, divide, argmax, max_abs_diff};

}  // namespace

const KernelTable& table() noexcept { return kTable; }

}  // namespace distortlab::simd::avx2
