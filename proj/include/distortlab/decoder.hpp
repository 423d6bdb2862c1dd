#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distortlab/model.hpp"

namespace distortlab {

enum class DecoderKind { Greedy, Pure, TopK, Nucleus, Temperature };
enum class Normalization { Local, Global };

const char* decoder_kind_name(DecoderKind kind) noexcept;
const char* normalization_name(Normalization mode) noexcept;

/// Decoding strategy, its parameter, and where normalization happens.
/// Grammar for parse(): kind[:param][@local|@global], with kind one of
/// greedy, pure, topk, nucleus, temp.
class DecoderSpec {
 public:
  static DecoderSpec greedy(Normalization mode = Normalization::Local);
  static DecoderSpec pure(Normalization mode = Normalization::Local);
  static DecoderSpec top_k(std::size_t k, Normalization mode = Normalization::Local);
  static DecoderSpec nucleus(double pi, Normalization mode = Normalization::Local);
  static DecoderSpec temperature(double tau, Normalization mode = Normalization::Local);
  static DecoderSpec parse(std::string_view text);

  DecoderKind kind() const noexcept { return kind_; }
  Normalization mode() const noexcept { return mode_; }
  bool is_global() const noexcept { return mode_ == Normalization::Global; }
  bool is_truncation() const noexcept { return kind_ == DecoderKind::TopK || kind_ == DecoderKind::Nucleus; }
  bool has_param() const noexcept { return kind_ == DecoderKind::TopK || kind_ == DecoderKind::Nucleus || kind_ == DecoderKind::Temperature; }

  std::size_t k() const noexcept { return k_; }
  double pi() const noexcept { return value_; }
  double tau() const noexcept { return value_; }
  /// k, pi or tau as a double; 0 for parameterless kinds.
  double param() const noexcept;

  DecoderSpec with_mode(Normalization mode) const;

  /// Canonical "kind[:param]@mode" form, re-parseable.
  std::string label() const;
  std::string param_string() const;

  friend bool operator==(const DecoderSpec&, const DecoderSpec&) = default;

 private:
  DecoderSpec() = default;

  DecoderKind kind_ = DecoderKind::Pure;
  std::size_t k_ = 0;
  double value_ = 0.0;
  Normalization mode_ = Normalization::Local;
};

struct AllowedSet {
  std::vector<TokenId> ids;  // descending probability, ties ascending id
  double mass = 0.0;
};

/// Truncation support of one next-token row. Zero-probability tokens are
/// never included; a k above the vocabulary size selects every positive token.
AllowedSet allowed_set(std::span<const double> probs, const DecoderSpec& spec);

/// One locally normalized decoding step.
struct LocalStep {
  CondDistribution dist;
  double z = 1.0;      // allowed-set mass, or sum p^(1/tau) for temperature
  double log_z = 0.0;  // computed without underflow
  std::size_t allowed_size = 0;
};

/// When the allowed set already holds every positive-probability token the
/// row is returned unchanged with z = 1, so top-k with k = |V|, nucleus with
/// pi = 1, temperature 1 and pure sampling produce identical rows.
LocalStep local_step(std::span<const double> probs, const DecoderSpec& spec);

inline CondDistribution step_distribution(const CondDistribution& dist, const DecoderSpec& spec) {
  return local_step(dist.probs(), spec).dist;
}

/// Normalizer Z at a row: allowed-set mass, sum p^(1/tau), p_max for greedy, 1 for pure.
double normalizer(std::span<const double> probs, const DecoderSpec& spec);

/// Lowest id among the maximal entries.
TokenId argmax_token(std::span<const double> probs);

}  // namespace distortlab
