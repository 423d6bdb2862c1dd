#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distortlab/decoder.hpp"
#include "distortlab/global.hpp"
#include "distortlab/model.hpp"
#include "distortlab/sampling.hpp"

namespace distortlab {

struct Estimate {
  double value = 0.0;
  std::optional<double> stderr_;  // missing when n < 2
};

struct QdPoint {
  DecoderSpec decoder = DecoderSpec::pure();
  std::size_t length = 0;
  double entropy = 0.0;  // nats per completion
  std::optional<double> entropy_stderr;
  double nll = 0.0;  // mean -log p per completion
  std::optional<double> nll_stderr;
  std::size_t n = 0;
  bool exact = false;
  std::optional<std::string> error;  // set when the point could not be computed

  /// Two-term objective H + sum q log p.
  double objective() const noexcept { return entropy - nll; }
  double entropy_per_token() const noexcept { return length ? entropy / static_cast<double>(length) : 0.0; }
  double nll_per_token() const noexcept { return length ? nll / static_cast<double>(length) : 0.0; }
};

QdPoint exact_qd(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                 std::size_t length, const EnumerationLimits& limits = {});

/// Mean of -(log_q - log_normalizer). Global records carry unnormalized
/// weights, so pass log of the estimated global constant for them.
Estimate smb_entropy(std::span<const GenerationRecord> records, double log_normalizer = 0.0);

Estimate mean_nll(std::span<const GenerationRecord> records);

enum class SweepMode { Exact, Sampled };

struct SweepOptions {
  SweepMode mode = SweepMode::Exact;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 20250101;
  std::uint64_t max_attempts = kDefaultMaxAttempts;
  EnumerationLimits limits;
  unsigned jobs = 1;
};

/// One point per decoder, sorted by kind, then parameter, then local before
/// global. Point i of the sorted grid uses derive_seed(seed, i). Failures are
/// recorded on the point and the sweep continues.
std::vector<QdPoint> qd_sweep(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                              std::span<const DecoderSpec> grid, const SweepOptions& options);

}  // namespace distortlab
