#include "distortlab/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "distortlab/errors.hpp"
#include "distortlab/io.hpp"
#include "distortlab/simd/kernels.hpp"
#include "json.hpp"

namespace distortlab {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw Error(ErrorCode::InvalidArgument, "vocabulary must not be empty");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double CondDistribution::mass() const { return simd::sum(probs_); }

bool CondDistribution::is_valid(double tolerance) const {
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
  }
  return std::fabs(mass() - 1.0) <= tolerance;
}

const char* model_kind_name(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Table: return "table";
    case ModelKind::Ngram: return "ngram";
    case ModelKind::Remote: return "remote";
  }
  return "table";
}

const char* unit_mode_name(UnitMode mode) noexcept { return mode == UnitMode::Char ? "char" : "word"; }

UnitMode parse_unit_mode(std::string_view text) {
  if (text == "char") return UnitMode::Char;
  if (text == "word") return UnitMode::Word;
  throw Error(ErrorCode::InvalidArgument, "unit mode must be 'char' or 'word', got '" + std::string(text) + "'");
}

std::string context_key(std::span<const TokenId> context, std::size_t order) {
  const std::size_t keep = std::min(order, context.size());
  std::string key;
  for (std::size_t i = context.size() - keep; i < context.size(); ++i) {
    if (!key.empty()) key.push_back(',');
    key += std::to_string(context[i]);
  }
  return key;
}

namespace {

void check_row(const std::string& key, const std::vector<double>& row, std::size_t vocab_size) {
  if (row.size() != vocab_size) {
    throw Error(ErrorCode::Parse, "row '" + key + "' has " + std::to_string(row.size()) + " entries, vocabulary has " +
                                      std::to_string(vocab_size));
  }
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorCode::Parse, "row '" + key + "' has an invalid probability");
  }
  const double mass = simd::sum(row);
  if (std::fabs(mass - 1.0) > CondDistribution::kMassTolerance) throw NormalizationError(key, mass);
}

void check_key(const std::string& key, std::size_t order, std::size_t vocab_size) {
  if (key.empty()) return;
  std::size_t count = 0;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, ',')) {
    ++count;
    std::size_t used = 0;
    unsigned long id = 0;
    try {
      id = std::stoul(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size() || part.empty() || id >= vocab_size)
      throw Error(ErrorCode::Parse, "invalid context key '" + key + "'");
  }
  if (count > order) throw Error(ErrorCode::Parse, "context key '" + key + "' is longer than the model order");
}

}  // namespace

TokenModel TokenModel::table(Vocabulary vocab, std::size_t order, Rows rows,
                             std::optional<std::vector<double>> default_row, UnitMode unit) {
  TokenModel m;
  m.kind_ = ModelKind::Table;
  m.order_ = order;
  m.vocab_ = std::move(vocab);
  m.rows_ = std::move(rows);
  m.default_row_ = std::move(default_row);
  m.unit_ = unit;
  m.validate();
  return m;
}

TokenModel TokenModel::ngram(Vocabulary vocab, std::size_t order, Rows rows, std::vector<double> default_row,
                             double smoothing, UnitMode unit) {
  if (!(smoothing > 0.0)) throw Error(ErrorCode::InvalidArgument, "n-gram smoothing must be > 0");
  TokenModel m = table(std::move(vocab), order, std::move(rows), std::move(default_row), unit);
  m.kind_ = ModelKind::Ngram;
  m.smoothing_ = smoothing;
  return m;
}

TokenModel TokenModel::remote(Vocabulary vocab, std::size_t order, RemoteEndpoint endpoint, UnitMode unit) {
  if (endpoint.url.empty()) throw Error(ErrorCode::InvalidArgument, "remote model needs an endpoint URL");
  if (endpoint.timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "remote timeout must be positive");
  TokenModel m;
  m.kind_ = ModelKind::Remote;
  m.order_ = order;
  m.vocab_ = std::move(vocab);
  m.endpoint_ = std::move(endpoint);
  m.unit_ = unit;
  return m;
}

void TokenModel::validate() const {
  if (vocab_.size() == 0) throw Error(ErrorCode::Parse, "vocabulary must not be empty");
  for (const auto& [key, row] : rows_) {
    check_key(key, order_, vocab_.size());
    check_row(key, row, vocab_.size());
  }
  if (default_row_) check_row("default", *default_row_, vocab_.size());
}

CondDistribution TokenModel::next_distribution(std::span<const TokenId> context) const {
  for (TokenId id : context) {
    if (id >= vocab_.size()) throw Error(ErrorCode::InvalidArgument, "context token id out of range");
  }
  const std::size_t keep = std::min(order_, context.size());
  const auto suffix = context.subspan(context.size() - keep);
  if (kind_ == ModelKind::Remote) return detail::fetch_remote_distribution(endpoint_, suffix, vocab_.size());

  const std::string key = context_key(suffix, order_);
  if (auto it = rows_.find(key); it != rows_.end()) return CondDistribution(it->second);
  if (default_row_) return CondDistribution(*default_row_);
  throw Error(ErrorCode::UnknownContext, "no row for context '" + key + "' and no default row");
}

std::vector<std::string> split_units(std::string_view text, UnitMode mode) {
  std::vector<std::string> units;
  if (mode == UnitMode::Word) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i) units.emplace_back(text.substr(i, j - i));
      i = j;
    }
    return units;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    len = std::min(len, text.size() - i);
    units.emplace_back(text.substr(i, len));
    i += len;
  }
  return units;
}

TokenSeq TokenModel::tokenize(std::string_view text) const {
  TokenSeq ids;
  for (const auto& unit : split_units(text, unit_)) {
    auto id = vocab_.find(unit);
    if (!id) throw Error(ErrorCode::InvalidArgument, "unit '" + unit + "' is not in the model vocabulary");
    ids.push_back(*id);
  }
  return ids;
}

std::string TokenModel::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (unit_ == UnitMode::Word && i > 0) out.push_back(' ');
    out += vocab_.token(ids[i]);
  }
  return out;
}

TokenModel parse_model(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    const auto order = doc.at("order").get<std::size_t>();
    std::vector<std::string> tokens = doc.at("vocab").get<std::vector<std::string>>();
    if (tokens.empty()) throw Error(ErrorCode::Parse, "vocabulary must not be empty");
    if (std::set<std::string>(tokens.begin(), tokens.end()).size() != tokens.size())
      throw Error(ErrorCode::Parse, "vocabulary has duplicate tokens");
    Vocabulary vocab(std::move(tokens));
    const UnitMode unit = parse_unit_mode(doc.value("unit", std::string("word")));

    if (kind == "remote") {
      RemoteEndpoint ep;
      ep.url = doc.at("endpoint").get<std::string>();
      ep.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 5000));
      return TokenModel::remote(std::move(vocab), order, std::move(ep), unit);
    }
    if (kind != "table" && kind != "ngram") throw Error(ErrorCode::Parse, "unknown model kind '" + kind + "'");

    TokenModel::Rows rows;
    for (const auto& [key, value] : doc.at("rows").items()) rows.emplace(key, value.get<std::vector<double>>());
    std::optional<std::vector<double>> default_row;
    if (doc.contains("default") && !doc.at("default").is_null())
      default_row = doc.at("default").get<std::vector<double>>();

    if (kind == "ngram") {
      if (!default_row) throw Error(ErrorCode::Parse, "ngram model needs a default row");
      return TokenModel::ngram(std::move(vocab), order, std::move(rows), std::move(*default_row),
                               doc.at("smoothing").get<double>(), unit);
    }
    return TokenModel::table(std::move(vocab), order, std::move(rows), std::move(default_row), unit);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed model file: ") + e.what());
  }
}

TokenModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

std::string serialize_model(const TokenModel& model) {
  json doc;
  doc["kind"] = model_kind_name(model.kind());
  doc["order"] = model.order();
  doc["unit"] = unit_mode_name(model.unit());
  doc["vocab"] = model.vocab().tokens();
  if (model.kind() == ModelKind::Remote) {
    doc["endpoint"] = model.endpoint().url;
    doc["timeout_ms"] = model.endpoint().timeout.count();
  } else {
    json rows = json::object();
    for (const auto& [key, row] : model.rows()) rows[key] = row;
    doc["rows"] = std::move(rows);
    if (model.default_row()) doc["default"] = *model.default_row();
    if (model.kind() == ModelKind::Ngram) doc["smoothing"] = model.smoothing();
  }
  // nlohmann emits the shortest decimal that round-trips each double exactly
  return doc.dump() + "\n";
}

void save_model(const TokenModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

TokenModel train_ngram(std::string_view corpus, std::size_t order, double smoothing, UnitMode mode) {
  if (!(smoothing > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing must be > 0");
  const auto units = split_units(corpus, mode);
  if (units.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus contains no units");

  std::vector<std::string> tokens(units.begin(), units.end());
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  Vocabulary vocab(tokens);
  const std::size_t v = vocab.size();

  TokenSeq ids;
  ids.reserve(units.size());
  for (const auto& u : units) ids.push_back(*vocab.find(u));

  std::map<std::string, std::vector<double>> counts;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const std::span<const TokenId> prefix(ids.data(), t);
    auto& row = counts[context_key(prefix, order)];
    if (row.empty()) row.assign(v, 0.0);
    row[ids[t]] += 1.0;
  }

  TokenModel::Rows rows;
  const double alpha_mass = smoothing * static_cast<double>(v);
  for (auto& [key, row] : counts) {
    double total = 0.0;
    for (double c : row) total += c;
    const double denom = total + alpha_mass;
    for (double& c : row) c = (c + smoothing) / denom;
    rows.emplace(key, std::move(row));
  }
  std::vector<double> uniform(v, 1.0 / static_cast<double>(v));
  return TokenModel::ngram(std::move(vocab), order, std::move(rows), std::move(uniform), smoothing, mode);
}

double sequence_logprob(const TokenModel& model, std::span<const TokenId> prefix,
                        std::span<const TokenId> completion) {
  if (completion.empty()) throw Error(ErrorCode::InvalidArgument, "completion must not be empty");
  TokenSeq context(prefix.begin(), prefix.end());
  double total = 0.0;
  for (TokenId y : completion) {
    const auto dist = model.next_distribution(context);
    if (y >= dist.size()) throw Error(ErrorCode::InvalidArgument, "completion token id out of range");
    const double p = dist[y];
    total += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    context.push_back(y);
  }
  return total;
}

}  // namespace distortlab
