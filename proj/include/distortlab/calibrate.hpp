#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "distortlab/decoder.hpp"
#include "distortlab/model.hpp"

namespace distortlab {

/// Mean normalizer Z of `spec` over the next-token rows at `contexts`.
double average_normalizer(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenSeq> contexts,
                          unsigned jobs = 1);

/// Contexts for calibration: context i is the prompt followed by
/// (i mod max_len) tokens of pure sampling under derive_seed(seed, i).
std::vector<TokenSeq> sample_contexts(const TokenModel& model, std::span<const TokenId> prompt, std::size_t n = 200,
                                      std::size_t max_len = 30, std::uint64_t seed = 20250101, unsigned jobs = 1);

/// 0.01, 0.02, ..., 1.00
std::vector<double> default_grid();

struct CalibrationResult {
  std::size_t k = 0;
  double matched_pi = 1.0;
  double matched_tau = 1.0;
  double avg_z_k = 1.0;
  double avg_z_pi = 1.0;
  double avg_z_tau = 1.0;
  std::size_t n_contexts = 0;
  double residual_pi = 0.0;  // |avg_z_pi - avg_z_k|
  double residual_tau = 0.0;
  double tolerance = 0.0;
};

inline constexpr double kDefaultCalibrationTolerance = 0.01;

/// Grid search for the pi and tau whose average Z is closest to top-k's;
/// the last grid value wins ties. Throws NoMatch when either residual
/// exceeds tol.
CalibrationResult match_parameters(const TokenModel& model, std::size_t k, std::span<const TokenSeq> contexts,
                                   std::span<const double> grid_pi, std::span<const double> grid_tau,
                                   double tol = kDefaultCalibrationTolerance, unsigned jobs = 1);

}  // namespace distortlab
