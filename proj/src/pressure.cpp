#include "distortlab/pressure.hpp"

#include <cmath>

#include "distortlab/errors.hpp"
#include "distortlab/simd/kernels.hpp"

namespace distortlab {

namespace {

struct PowerIteration {
  double lambda = 0.0;
  std::vector<double> vec;
  std::size_t iterations = 0;
};

// Power iteration on a strictly positive n x n matrix, L1-normalizing each step.
PowerIteration dominant(const std::vector<double>& m, std::size_t n, const PressureOptions& options) {
  const auto& k = simd::active();
  PowerIteration out;
  out.vec.assign(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  double previous = 0.0;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    k.gemv(m.data(), n, n, out.vec.data(), next.data());
    const double lambda = k.sum(next.data(), n);  // vec sums to 1
    k.divide(next.data(), n, lambda);
    const double step = k.max_abs_diff(next.data(), out.vec.data(), n);
    out.vec.swap(next);
    out.lambda = lambda;
    out.iterations = it;
    if (it > 1 && std::abs(lambda - previous) <= options.tolerance * lambda && step <= options.tolerance) return out;
    previous = lambda;
  }
  throw Error(ErrorCode::NonConvergence,
              "power iteration did not converge in " + std::to_string(options.max_iterations) + " iterations");
}

}  // namespace

PressureResult transfer_pressure(const TokenModel& model, double tau, const PressureOptions& options) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    if (tau > 1.0) throw Error(ErrorCode::InvalidTau, "temperature tau must lie in (0, 1]");
    throw Error(ErrorCode::InvalidArgument, "temperature tau must lie in (0, 1]");
  }
  if (model.kind() == ModelKind::Remote) throw Error(ErrorCode::UnsupportedKind, "transfer pressure needs a table or n-gram model");
  if (model.order() > 1)
    throw Error(ErrorCode::UnsupportedOrder,
                "transfer pressure supports order 0 or 1; lift higher orders to the |V|^L state space first");

  const std::size_t n = model.vocab_size();
  std::vector<double> m(n * n);
  std::vector<double> mt(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId ctx[1] = {static_cast<TokenId>(i)};
    const CondDistribution row = model.next_distribution(std::span<const TokenId>(ctx, model.order()));
    for (std::size_t j = 0; j < n; ++j) {
      if (!(row[j] > 0.0))
        throw Error(ErrorCode::InvalidArgument, "transfer pressure needs strictly positive transition rows");
      const double v = std::exp(std::log(row[j]) / tau);
      m[i * n + j] = v;
      mt[j * n + i] = v;
    }
  }

  const PowerIteration right = dominant(m, n, options);
  const PowerIteration left = dominant(mt, n, options);

  PressureResult out;
  out.eigenvalue = right.lambda;
  out.pressure = std::log(right.lambda);
  out.iterations = std::max(right.iterations, left.iterations);
  out.right = right.vec;
  out.left = left.vec;
  const double lr = simd::dot(out.left, out.right);
  simd::divide(out.left, lr);
  out.stationary.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.stationary[i] = out.left[i] * out.right[i];
  return out;
}

}  // namespace distortlab
