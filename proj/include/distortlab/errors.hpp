#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace distortlab {

enum class ErrorCode {
  Parse,
  Normalization,
  UnknownContext,
  Remote,
  EmptyCorpus,
  InvalidArgument,
  UnsupportedKind,
  DegenerateDistribution,
  SupportTooLarge,
  RejectionBudgetExceeded,
  InvalidTau,
  UnsupportedOrder,
  NonConvergence,
  MissingTrace,
  ZeroMass,
  SupportViolation,
  MixedDecoders,
  NoMatch,
  Io,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class NormalizationError : public Error {
 public:
  NormalizationError(std::string context_key, double mass);

  const std::string& context_key() const noexcept { return context_key_; }
  double mass() const noexcept { return mass_; }

 private:
  std::string context_key_;
  double mass_;
};

class SupportTooLarge : public Error {
 public:
  SupportTooLarge(double estimated_size, std::size_t cap);

  double estimated_size() const noexcept { return estimated_size_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  double estimated_size_;
  std::size_t cap_;
};

struct RejectionStats {
  std::uint64_t attempts = 0;
  std::uint64_t accepted = 0;

  double acceptance_rate() const noexcept {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
  RejectionStats& operator+=(const RejectionStats& other) noexcept {
    attempts += other.attempts;
    accepted += other.accepted;
    return *this;
  }
};

class RejectionBudgetExceeded : public Error {
 public:
  explicit RejectionBudgetExceeded(RejectionStats stats);

  const RejectionStats& stats() const noexcept { return stats_; }

 private:
  RejectionStats stats_;
};

}  // namespace distortlab
