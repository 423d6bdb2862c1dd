#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "distortlab/decoder.hpp"
#include "distortlab/global.hpp"
#include "distortlab/model.hpp"

namespace distortlab {

/// H(mu) + sum mu log r = -KL(mu || r), with 0 log 0 = 0.
/// Throws SupportViolation when mu charges a completion r does not.
double kl_objective(const SequenceDistribution& mu, const SequenceDistribution& r);

/// KL(mu || r) under the same conventions.
double kl_divergence(const SequenceDistribution& mu, const SequenceDistribution& r);

struct ObjectiveReport {
  double entropy = 0.0;     // H(mu)
  double quality = 0.0;     // sum mu log p, times 1/tau for temperature
  double distortion = 0.0;  // sum mu log epsilon; absent (0) for global decoders
  double total = 0.0;
  double kl_to_q = 0.0;
  double constant = 0.0;    // total + kl_to_q
};

/// Objective of mu under the decoder whose exact distribution is q. Local
/// decoders use three terms; global decoders drop the distortion term.
ObjectiveReport decompose_objective(const SequenceDistribution& mu, const SequenceDistribution& q);

/// Enumerates q for (spec, prompt, length) and decomposes mu against it.
ObjectiveReport decompose_objective(const SequenceDistribution& mu, const TokenModel& model, const DecoderSpec& spec,
                                    std::span<const TokenId> prompt, std::size_t length,
                                    const EnumerationLimits& limits = {});

/// Copy of q's support with new probabilities (normalized here).
SequenceDistribution reweight(const SequenceDistribution& q, std::span<const double> weights);

struct VariationalCheck {
  DecoderSpec decoder = DecoderSpec::pure();
  std::size_t support_size = 0;
  double constant = 0.0;
  double objective_at_q = 0.0;
  // max over perturbations of total(mu) + KL(mu || q) - total(q); <= tol passes
  double max_violation = 0.0;
  std::size_t perturbations = 0;
  std::size_t violations = 0;
  bool passed = false;
};

struct VariationalReport {
  VariationalCheck local;
  VariationalCheck global;
  bool passed() const noexcept { return local.passed && global.passed; }
};

inline constexpr double kVariationalTolerance = 1e-9;

/// Checks that q maximizes its objective against n random measures on its
/// support (alternating Exp(1) reweightings of q and flat Dirichlet draws)
/// plus the uniform measure and point masses, for the local q and the global q'.
VariationalReport verify_variational_max(const TokenModel& model, const DecoderSpec& spec,
                                         std::span<const TokenId> prompt, std::size_t length,
                                         std::size_t n_perturbations, std::uint64_t seed,
                                         const EnumerationLimits& limits = {});

struct ZeroTempRow {
  double tau = 1.0;
  TokenSeq local_mode;
  double local_mass = 0.0;
  TokenSeq global_mode;
  double global_mass = 0.0;
  double global_log_normalizer = 0.0;  // log sum p^(1/tau) over all length-T strings
  std::size_t support_size = 0;
  bool local_converged = false;   // local_mode == greedy
  bool global_converged = false;  // global_mode == global argmax of p
};

struct ZeroTempReport {
  TokenSeq greedy;
  TokenSeq global_argmax;
  std::vector<ZeroTempRow> rows;  // ascending tau
  // Largest listed tau at and below which every listed tau has converged.
  std::optional<double> converged_tau_local;
  std::optional<double> converged_tau_global;
  bool limits_differ() const { return greedy != global_argmax; }
};

/// For each tau, the modes of the local and global temperature distributions,
/// compared against greedy decoding and the global argmax of p.
ZeroTempReport zero_temperature_scan(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                     std::span<const double> taus, const EnumerationLimits& limits = {});

}  // namespace distortlab
