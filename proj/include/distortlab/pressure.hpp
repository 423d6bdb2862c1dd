#pragma once

#include <cstddef>
#include <vector>

#include "distortlab/model.hpp"

namespace distortlab {

struct PressureOptions {
  double tolerance = 1e-10;  // relative change of the eigenvalue between iterations
  std::size_t max_iterations = 100'000;
};

struct PressureResult {
  double pressure = 0.0;  // log of the dominant eigenvalue
  double eigenvalue = 1.0;
  std::vector<double> right;       // M r = lambda r, sums to 1
  std::vector<double> left;        // l M = lambda l, scaled so l . r = 1
  std::vector<double> stationary;  // l_i r_i
  std::size_t iterations = 0;
};

/// Dominant eigenpair of M[i][j] = p(j|i)^(1/tau) by power iteration.
/// Order-0 models use the single row for every i. Requires a table or n-gram
/// model of order 0 or 1 whose rows are strictly positive.
PressureResult transfer_pressure(const TokenModel& model, double tau, const PressureOptions& options = {});

}  // namespace distortlab
