#include "distortlab/decoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "distortlab/errors.hpp"
#include "distortlab/simd/kernels.hpp"

namespace distortlab {

const char* decoder_kind_name(DecoderKind kind) noexcept {
  switch (kind) {
    case DecoderKind::Greedy: return "greedy";
    case DecoderKind::Pure: return "pure";
    case DecoderKind::TopK: return "topk";
    case DecoderKind::Nucleus: return "nucleus";
    case DecoderKind::Temperature: return "temp";
  }
  return "pure";
}

const char* normalization_name(Normalization mode) noexcept {
  return mode == Normalization::Global ? "global" : "local";
}

DecoderSpec DecoderSpec::greedy(Normalization mode) {
  DecoderSpec s;
  s.kind_ = DecoderKind::Greedy;
  s.mode_ = mode;
  return s;
}

DecoderSpec DecoderSpec::pure(Normalization mode) {
  DecoderSpec s;
  s.kind_ = DecoderKind::Pure;
  s.mode_ = mode;
  return s;
}

DecoderSpec DecoderSpec::top_k(std::size_t k, Normalization mode) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "top-k needs k >= 1");
  DecoderSpec s;
  s.kind_ = DecoderKind::TopK;
  s.k_ = k;
  s.value_ = static_cast<double>(k);
  s.mode_ = mode;
  return s;
}

DecoderSpec DecoderSpec::nucleus(double pi, Normalization mode) {
  if (pi == 0.0) throw Error(ErrorCode::InvalidArgument, "nucleus pi = 0 is not allowed; use greedy");
  if (!(pi > 0.0 && pi <= 1.0)) throw Error(ErrorCode::InvalidArgument, "nucleus pi must lie in (0, 1]");
  DecoderSpec s;
  s.kind_ = DecoderKind::Nucleus;
  s.value_ = pi;
  s.mode_ = mode;
  return s;
}

DecoderSpec DecoderSpec::temperature(double tau, Normalization mode) {
  if (tau == 0.0) throw Error(ErrorCode::InvalidArgument, "temperature tau = 0 is not allowed; use greedy");
  if (!(tau > 0.0 && tau <= 1.0)) {
    if (tau > 1.0) throw Error(ErrorCode::InvalidTau, "temperature tau must lie in (0, 1]");
    throw Error(ErrorCode::InvalidArgument, "temperature tau must lie in (0, 1]");
  }
  DecoderSpec s;
  s.kind_ = DecoderKind::Temperature;
  s.value_ = tau;
  s.mode_ = mode;
  return s;
}

namespace {

double parse_number(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw Error(ErrorCode::InvalidArgument, "bad " + std::string(what) + " parameter '" + std::string(text) + "'");
  return value;
}

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

}  // namespace

DecoderSpec DecoderSpec::parse(std::string_view text) {
  Normalization mode = Normalization::Local;
  if (const auto at = text.find('@'); at != std::string_view::npos) {
    const auto m = text.substr(at + 1);
    if (m == "local") mode = Normalization::Local;
    else if (m == "global") mode = Normalization::Global;
    else throw Error(ErrorCode::InvalidArgument, "normalization must be @local or @global, got '" + std::string(m) + "'");
    text = text.substr(0, at);
  }
  std::string_view kind = text;
  std::string_view param;
  bool has_param = false;
  if (const auto colon = text.find(':'); colon != std::string_view::npos) {
    kind = text.substr(0, colon);
    param = text.substr(colon + 1);
    has_param = true;
  }
  auto require = [&](bool needs) {
    if (needs && !has_param) throw Error(ErrorCode::InvalidArgument, "decoder '" + std::string(kind) + "' needs a parameter");
    if (!needs && has_param) throw Error(ErrorCode::InvalidArgument, "decoder '" + std::string(kind) + "' takes no parameter");
  };
  if (kind == "greedy") {
    require(false);
    return greedy(mode);
  }
  if (kind == "pure") {
    require(false);
    return pure(mode);
  }
  if (kind == "topk" || kind == "top-k") {
    require(true);
    const double k = parse_number(param, "top-k");
    if (k < 1 || k != std::floor(k)) throw Error(ErrorCode::InvalidArgument, "top-k needs an integer k >= 1");
    return top_k(static_cast<std::size_t>(k), mode);
  }
  if (kind == "nucleus" || kind == "topp" || kind == "top-p") {
    require(true);
    return nucleus(parse_number(param, "nucleus"), mode);
  }
  if (kind == "temp" || kind == "temperature") {
    require(true);
    return temperature(parse_number(param, "temperature"), mode);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown decoder kind '" + std::string(kind) + "'");
}

double DecoderSpec::param() const noexcept { return has_param() ? value_ : 0.0; }

DecoderSpec DecoderSpec::with_mode(Normalization mode) const {
  DecoderSpec s = *this;
  s.mode_ = mode;
  return s;
}

std::string DecoderSpec::param_string() const {
  if (kind_ == DecoderKind::TopK) return std::to_string(k_);
  if (has_param()) return shortest(value_);
  return "";
}

std::string DecoderSpec::label() const {
  std::string out = decoder_kind_name(kind_);
  if (has_param()) out += ":" + param_string();
  out += "@";
  out += normalization_name(mode_);
  return out;
}

TokenId argmax_token(std::span<const double> probs) {
  if (probs.empty()) throw Error(ErrorCode::DegenerateDistribution, "empty distribution");
  return static_cast<TokenId>(simd::argmax(probs));
}

namespace {

std::vector<TokenId> ranked_ids(std::span<const double> probs, std::size_t keep) {
  std::vector<TokenId> ids(probs.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  auto by_prob = [&](TokenId a, TokenId b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); };
  keep = std::min(keep, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), by_prob);
  ids.resize(keep);
  while (!ids.empty() && probs[ids.back()] <= 0.0) ids.pop_back();
  return ids;
}

std::size_t positive_count(std::span<const double> probs) {
  return static_cast<std::size_t>(std::count_if(probs.begin(), probs.end(), [](double p) { return p > 0.0; }));
}

}  // namespace

AllowedSet allowed_set(std::span<const double> probs, const DecoderSpec& spec) {
  AllowedSet out;
  switch (spec.kind()) {
    case DecoderKind::Temperature:
      throw Error(ErrorCode::UnsupportedKind, "temperature sampling has no allowed set");
    case DecoderKind::Greedy: {
      const TokenId a = argmax_token(probs);
      if (probs[a] > 0.0) out.ids.push_back(a);
      break;
    }
    case DecoderKind::Pure:
      out.ids = ranked_ids(probs, probs.size());
      break;
    case DecoderKind::TopK:
      out.ids = ranked_ids(probs, spec.k());
      break;
    case DecoderKind::Nucleus: {
      auto ranked = ranked_ids(probs, probs.size());
      double cum = 0.0;
      std::size_t r = 0;
      while (r < ranked.size()) {
        cum += probs[ranked[r]];
        ++r;
        if (cum >= spec.pi()) break;
      }
      ranked.resize(r);
      out.ids = std::move(ranked);
      break;
    }
  }
  for (TokenId id : out.ids) out.mass += probs[id];
  return out;
}

LocalStep local_step(std::span<const double> probs, const DecoderSpec& spec) {
  LocalStep step;
  const std::size_t positive = positive_count(probs);
  if (positive == 0) throw Error(ErrorCode::DegenerateDistribution, "distribution has no positive mass");

  auto unchanged = [&] {
    step.dist = CondDistribution(std::vector<double>(probs.begin(), probs.end()));
    step.z = 1.0;
    step.log_z = 0.0;
    step.allowed_size = positive;
    return step;
  };

  switch (spec.kind()) {
    case DecoderKind::Pure:
      return unchanged();
    case DecoderKind::Greedy: {
      const TokenId a = argmax_token(probs);
      std::vector<double> q(probs.size(), 0.0);
      q[a] = 1.0;
      step.dist = CondDistribution(std::move(q));
      step.z = probs[a];
      step.log_z = std::log(probs[a]);
      step.allowed_size = 1;
      return step;
    }
    case DecoderKind::TopK:
    case DecoderKind::Nucleus: {
      const AllowedSet set = allowed_set(probs, spec);
      if (set.ids.size() == positive) return unchanged();
      if (!(set.mass > 0.0)) throw Error(ErrorCode::DegenerateDistribution, "allowed set has zero mass");
      std::vector<double> q(probs.size(), 0.0);
      for (TokenId id : set.ids) q[id] = probs[id];
      simd::divide(q, set.mass);
      step.dist = CondDistribution(std::move(q));
      step.z = set.mass;
      step.log_z = std::log(set.mass);
      step.allowed_size = set.ids.size();
      return step;
    }
    case DecoderKind::Temperature: {
      if (spec.tau() == 1.0) return unchanged();
      const double inv_tau = 1.0 / spec.tau();
      const double log_max = std::log(probs[argmax_token(probs)]);
      std::vector<double> q(probs.size(), 0.0);
      double scaled_sum = 0.0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) {
          q[i] = std::exp(inv_tau * (std::log(probs[i]) - log_max));
          scaled_sum += q[i];
        }
      }
      simd::divide(q, scaled_sum);
      step.dist = CondDistribution(std::move(q));
      step.log_z = inv_tau * log_max + std::log(scaled_sum);
      step.z = std::exp(step.log_z);
      step.allowed_size = positive;
      return step;
    }
  }
  return unchanged();
}

double normalizer(std::span<const double> probs, const DecoderSpec& spec) { return local_step(probs, spec).z; }

}  // namespace distortlab
