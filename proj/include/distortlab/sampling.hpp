#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "distortlab/decoder.hpp"
#include "distortlab/model.hpp"

namespace distortlab {

struct StepRecord {
  TokenId token = 0;
  double prob = 0.0;  // q(token | context); unnormalized weight for global records
  double z = 1.0;
  std::size_t allowed_size = 0;
};

/// One sampled completion with its per-step trace.
///
/// Local records: log_q = sum of log step probabilities under the locally
/// normalized decoder. Global records (rejection samplers) cannot know the
/// global constant C, so their steps carry p (truncation) or p^(1/tau)
/// (temperature) and log_q is the unnormalized log weight; subtract log C
/// to get log q'. In both cases log_q = sum log(steps[i].prob).
struct GenerationRecord {
  TokenSeq prompt;
  TokenSeq completion;
  std::vector<StepRecord> steps;
  double log_q = 0.0;
  double log_p = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  DecoderSpec decoder = DecoderSpec::pure();

  std::vector<double> z_values() const;
};

/// Draws T tokens by inverse CDF over token-id order, one uniform per step.
GenerationRecord sample_sequence(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                 const DecoderSpec& spec, std::uint64_t seed);

/// n local samples; sample i uses derive_seed(master_seed, i).
std::vector<GenerationRecord> sample_many(const TokenModel& model, std::span<const TokenId> prompt,
                                          std::size_t length, const DecoderSpec& spec, std::size_t n,
                                          std::uint64_t master_seed, unsigned jobs = 1);

struct QScore {
  double log_q = 0.0;
  double log_p = 0.0;
  std::vector<double> z_values;
  std::vector<double> log_z_values;
};

/// Scores a completion under the locally normalized decoder (mode is ignored).
/// log_q is -inf when any token falls outside its step's support; the Z
/// trace still covers every step.
QScore q_logprob(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                 std::span<const TokenId> completion);

/// Argmax chain with lowest-id tie-break.
TokenSeq greedy_sequence(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length);

/// Inverse-CDF draw over id order; skips zero entries.
TokenId draw_token(std::span<const double> probs, double u);

}  // namespace distortlab
