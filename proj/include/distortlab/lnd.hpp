#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "distortlab/decoder.hpp"
#include "distortlab/model.hpp"
#include "distortlab/sampling.hpp"

namespace distortlab {

/// -sum log Z over the record's steps: the log distortion of a locally
/// normalized sample, up to the additive constant -log C shared by all
/// completions of the same length.
double distortion_weight(const GenerationRecord& record);

struct LndRecord {
  TokenSeq seq_a;
  TokenSeq seq_b;
  // log of q(a)/q'(a) divided by q(b)/q'(b); the global constant cancels
  double log_ratio = 0.0;
  double z_sum_a = 0.0;  // sum of log Z along a
  double z_sum_b = 0.0;
  DecoderSpec decoder = DecoderSpec::pure();

  double z_path_ratio() const noexcept { return z_sum_b - z_sum_a; }
};

/// Truncation kinds: [log q(a) - log p(a)] - [log q(b) - log p(b)].
/// Temperature: the same with (1/tau) log p in place of log p.
/// Throws ZeroMass when either sequence is outside the local support.
LndRecord lnd_pair_ratio(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                         std::span<const TokenId> seq_a, std::span<const TokenId> seq_b);

inline const std::vector<double> kDefaultQuantileLevels{0.10, 0.25, 0.50, 0.75, 0.90};

/// Linear interpolation between order statistics: position (n-1) * level.
double quantile(std::span<const double> sorted, double level);

struct QuantileTable {
  DecoderSpec decoder = DecoderSpec::pure();
  std::vector<double> levels;
  std::vector<double> values;  // quantiles of |log_ratio|
  std::vector<LndRecord> records;
};

/// Samples n_pairs independent pairs with the local decoder (pair i uses
/// derive_seed(seed, 2i) and derive_seed(seed, 2i+1)) and tabulates quantiles
/// of |log_ratio|.
QuantileTable lnd_quantile_table(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                                 std::size_t n_pairs, std::size_t length, std::uint64_t seed,
                                 std::span<const double> levels = kDefaultQuantileLevels, unsigned jobs = 1);

}  // namespace distortlab
