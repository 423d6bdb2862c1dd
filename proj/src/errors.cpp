#include "distortlab/errors.hpp"

#include <sstream>

namespace distortlab {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Normalization: return "NormalizationError";
    case ErrorCode::UnknownContext: return "UnknownContext";
    case ErrorCode::Remote: return "RemoteError";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnsupportedKind: return "UnsupportedKind";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::SupportTooLarge: return "SupportTooLarge";
    case ErrorCode::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
    case ErrorCode::InvalidTau: return "InvalidTau";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::MissingTrace: return "MissingTrace";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::MixedDecoders: return "MixedDecoders";
    case ErrorCode::NoMatch: return "NoMatch";
    case ErrorCode::Io: return "IoError";
  }
  return "Error";
}

namespace {

std::string normalization_message(const std::string& key, double mass) {
  std::ostringstream os;
  os.precision(17);
  os << "row for context '" << key << "' has mass " << mass;
  return os.str();
}

std::string support_message(double estimated, std::size_t cap) {
  std::ostringstream os;
  os << "support size estimate " << estimated << " exceeds cap " << cap;
  return os.str();
}

std::string rejection_message(const RejectionStats& s) {
  std::ostringstream os;
  os << "rejection budget exhausted after " << s.attempts << " attempts (" << s.accepted << " accepted)";
  return os.str();
}

}  // namespace

NormalizationError::NormalizationError(std::string context_key, double mass)
    : Error(ErrorCode::Normalization, normalization_message(context_key, mass)),
      context_key_(std::move(context_key)),
      mass_(mass) {}

SupportTooLarge::SupportTooLarge(double estimated_size, std::size_t cap)
    : Error(ErrorCode::SupportTooLarge, support_message(estimated_size, cap)),
      estimated_size_(estimated_size),
      cap_(cap) {}

RejectionBudgetExceeded::RejectionBudgetExceeded(RejectionStats stats)
    : Error(ErrorCode::RejectionBudgetExceeded, rejection_message(stats)), stats_(stats) {}

}  // namespace distortlab
