#include "distortlab/simd/kernels.hpp"

#include <cmath>

namespace distortlab::simd::scalar {
namespace {

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(m + r * cols, x, cols);
}

void divide(double* x, std::size_t n, double divisor) {
  for (std::size_t i = 0; i < n; ++i) x[i] /= divisor;
}

std::size_t argmax(const double* x, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

double max_abs_diff(const double* x, const double* y, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::fmax(m, std::fabs(x[i] - y[i]));
  return m;
}

constexpr KernelTable kTable{Isa::Scalar, sum, dot, gemv, divide, argmax, max_abs_diff};

}  // namespace

const KernelTable& table() noexcept { return kTable; }

}  // namespace distortlab::simd::scalar
