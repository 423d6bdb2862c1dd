#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "distortlab/decoder.hpp"
#include "distortlab/errors.hpp"
#include "distortlab/model.hpp"
#include "distortlab/sampling.hpp"

namespace distortlab {

struct EnumerationLimits {
  std::size_t max_sequences = 10'000'000;
  std::size_t max_dp_states = 1'000'000;
  unsigned jobs = 1;
};

struct SequenceEntry {
  TokenSeq completion;
  double prob = 0.0;
  double log_prob = 0.0;
  double log_p = 0.0;
  // log of the distortion factor epsilon = -sum log Z along the completion
  // under the locally normalized decoder
  double log_epsilon = 0.0;
};

/// Explicit probability table over length-T completions of a context.
/// Entries are sorted lexicographically by completion ids.
struct SequenceDistribution {
  TokenSeq context;
  std::size_t length = 0;
  DecoderSpec decoder = DecoderSpec::pure();
  // log of the global constant: log sum_{A_T} p, or log sum p^(1/tau); 0 for local tables
  double log_normalizer = 0.0;
  std::vector<SequenceEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  const SequenceEntry* find(std::span<const TokenId> completion) const;
  double probability(std::span<const TokenId> completion) const;
  double total_mass() const;
  /// Highest-probability completion; near-ties (1e-12 in log space) go to the
  /// lexicographically smallest.
  const SequenceEntry& mode() const;
};

/// Every completion in the decoder's support with its local q, global weight and p.
/// Truncation kinds branch over allowed sets; pure and temperature over all
/// positive-probability tokens; greedy over the argmax only.
struct SupportPath {
  TokenSeq completion;
  double log_p = 0.0;
  double log_q_local = 0.0;
  double log_epsilon = 0.0;
};

std::vector<SupportPath> enumerate_support(const TokenModel& model, std::span<const TokenId> prompt,
                                           std::size_t length, const DecoderSpec& spec,
                                           const EnumerationLimits& limits = {});

/// Globally normalized distribution: p (or p^(1/tau)) conditioned on the
/// decoder's length-T support.
SequenceDistribution enumerate_global(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                      const DecoderSpec& spec, const EnumerationLimits& limits = {});

/// Locally normalized distribution of the same decoder, by enumeration.
SequenceDistribution enumerate_local(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                     const DecoderSpec& spec, const EnumerationLimits& limits = {});

/// Dispatches on spec.mode().
SequenceDistribution enumerate_distribution(const TokenModel& model, std::span<const TokenId> prompt,
                                            std::size_t length, const DecoderSpec& spec,
                                            const EnumerationLimits& limits = {});

inline constexpr std::uint64_t kDefaultMaxAttempts = 1'000'000;

/// Samples from p and accepts when every token lies in its step's allowed set.
std::pair<GenerationRecord, RejectionStats> rejection_sample_truncated(
    const TokenModel& model, std::span<const TokenId> prompt, std::size_t length, const DecoderSpec& spec,
    std::uint64_t seed, std::uint64_t max_attempts = kDefaultMaxAttempts);

/// Samples from p and accepts with probability p^(1/tau - 1), tested as
/// log(u) < (1/tau - 1) log p.
std::pair<GenerationRecord, RejectionStats> rejection_sample_temperature(
    const TokenModel& model, std::span<const TokenId> prompt, std::size_t length, double tau, std::uint64_t seed,
    std::uint64_t max_attempts = kDefaultMaxAttempts);

struct GlobalBatch {
  std::vector<GenerationRecord> records;
  RejectionStats stats;
};

/// n globally normalized samples; sample i uses derive_seed(master_seed, i).
/// Greedy maps to global_argmax and pure to ordinary pure sampling.
GlobalBatch sample_global(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                          const DecoderSpec& spec, std::size_t n, std::uint64_t master_seed,
                          std::uint64_t max_attempts = kDefaultMaxAttempts, unsigned jobs = 1);

/// Length-T completion inside the decoder's support maximizing log p. Uses
/// dynamic programming over Markov states (last L tokens) when
/// |V|^L <= max_dp_states, else enumeration. Ties go to the lexicographically
/// smallest id sequence.
TokenSeq global_argmax(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                       const DecoderSpec& spec, const EnumerationLimits& limits = {});

}  // namespace distortlab
