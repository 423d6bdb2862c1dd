#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace distortlab {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/// Ordered, duplicate-free token list. A token's id is its position, and id
/// order is the tie-break order used by every decoder.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Next-token distribution indexed by token id.
class CondDistribution {
 public:
  static constexpr double kMassTolerance = 1e-9;

  CondDistribution() = default;
  explicit CondDistribution(std::vector<double> probs) : probs_(std::move(probs)) {}

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::vector<double>& mutable_probs() noexcept { return probs_; }

  double mass() const;
  bool is_valid(double tolerance = kMassTolerance) const;

 private:
  std::vector<double> probs_;
};

enum class ModelKind { Table, Ngram, Remote };
enum class UnitMode { Word, Char };

const char* model_kind_name(ModelKind kind) noexcept;
const char* unit_mode_name(UnitMode mode) noexcept;
UnitMode parse_unit_mode(std::string_view text);

struct RemoteEndpoint {
  std::string url;
  std::chrono::milliseconds timeout{5000};
};

/// Comma-joined ids of the last `order` tokens of `context` (empty for order 0).
std::string context_key(std::span<const TokenId> context, std::size_t order);

/// Autoregressive order-L token model. Immutable after construction; all
/// queries are safe from concurrent threads.
class TokenModel {
 public:
  using Rows = std::map<std::string, std::vector<double>>;

  static TokenModel table(Vocabulary vocab, std::size_t order, Rows rows,
                          std::optional<std::vector<double>> default_row = std::nullopt,
                          UnitMode unit = UnitMode::Word);
  static TokenModel ngram(Vocabulary vocab, std::size_t order, Rows rows, std::vector<double> default_row,
                          double smoothing, UnitMode unit);
  static TokenModel remote(Vocabulary vocab, std::size_t order, RemoteEndpoint endpoint,
                           UnitMode unit = UnitMode::Word);

  ModelKind kind() const noexcept { return kind_; }
  std::size_t order() const noexcept { return order_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }
  UnitMode unit() const noexcept { return unit_; }
  const Rows& rows() const noexcept { return rows_; }
  const std::optional<std::vector<double>>& default_row() const noexcept { return default_row_; }
  double smoothing() const noexcept { return smoothing_; }
  const RemoteEndpoint& endpoint() const noexcept { return endpoint_; }

  /// Conditions on the last min(order, |context|) tokens.
  CondDistribution next_distribution(std::span<const TokenId> context) const;

  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

 private:
  TokenModel() = default;
  void validate() const;

  ModelKind kind_ = ModelKind::Table;
  std::size_t order_ = 0;
  Vocabulary vocab_;
  UnitMode unit_ = UnitMode::Word;
  Rows rows_;
  std::optional<std::vector<double>> default_row_;
  double smoothing_ = 0.0;
  RemoteEndpoint endpoint_;
};

TokenModel load_model(const std::filesystem::path& path);
TokenModel parse_model(std::string_view json_text);
void save_model(const TokenModel& model, const std::filesystem::path& path);
std::string serialize_model(const TokenModel& model);

/// Additively smoothed n-gram: p(w|ctx) = (count(ctx w) + alpha) / (count(ctx *) + alpha |V|).
/// Vocabulary is the sorted set of distinct units.
TokenModel train_ngram(std::string_view corpus, std::size_t order, double smoothing, UnitMode mode);

/// Splits text into units: whitespace-separated words, or UTF-8 code points.
std::vector<std::string> split_units(std::string_view text, UnitMode mode);

/// Sum over t of log p(completion[t] | prefix completion[<t]); -inf when a factor is zero.
double sequence_logprob(const TokenModel& model, std::span<const TokenId> prefix,
                        std::span<const TokenId> completion);

namespace detail {
// Remote protocol: POST {url}/v1/logprobs with {"context":[ids]}.
CondDistribution fetch_remote_distribution(const RemoteEndpoint& endpoint, std::span<const TokenId> context,
                                           std::size_t vocab_size);
}  // namespace detail

}  // namespace distortlab
