#include "distortlab/simd/kernels.hpp"

#include <arm_neon.h>

#include <cmath>

namespace distortlab::simd::neon {
namespace {

double sum(const double* x, std::size_t n) {
  float64x2_t a0 = vdupq_n_f64(0.0);
  float64x2_t a1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 = vaddq_f64(a0, vld1q_f64(x + i));
    a1 = vaddq_f64(a1, vld1q_f64(x + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(a0, a1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t a0 = vdupq_n_f64(0.0);
  float64x2_t a1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 = vfmaq_f64(a0, vld1q_f64(x + i), vld1q_f64(y + i));
    a1 = vfmaq_f64(a1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(a0, a1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(m + r * cols, x, cols);
}

void divide(double* x, std::size_t n, double divisor) {
  const float64x2_t d = vdupq_n_f64(divisor);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vdivq_f64(vld1q_f64(x + i), d));
  for (; i < n; ++i) x[i] /= divisor;
}

std::size_t argmax(const double* x, std::size_t n) {
  double best = x[0];
  std::size_t i = 0;
  if (n >= 2) {
    float64x2_t m = vld1q_f64(x);
    for (i = 2; i + 2 <= n; i += 2) m = vmaxq_f64(m, vld1q_f64(x + i));
    best = vmaxvq_f64(m);
  }
  for (; i < n; ++i) best = x[i] > best ? x[i] : best;
  for (std::size_t j = 0; j < n; ++j) {
    if (x[j] == best) return j;
  }
  return 0;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  float64x2_t m = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) m = vmaxq_f64(m, vabdq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  double r = vmaxvq_f64(m);
  for (; i < n; ++i) r = std::fmax(r, std::fabs(x[i] - y[i]));
  return r;
}

constexpr KernelTable kTable{Isa::Neon, sum, dot, gemv, divide, argmax, max_abs_diff};

}  // namespace

const KernelTable& table() noexcept { return kTable; }

}  // namespace distortlab::simd::neon
