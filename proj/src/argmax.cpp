#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "distortlab/global.hpp"

namespace distortlab {

namespace {

constexpr double kTieTolerance = 1e-12;

struct Node {
  std::size_t parent;  // index into the previous layer; unused at depth 0
  TokenId token;
  double score;
};

// Tokens the decoder can emit from this row, ascending id.
std::vector<TokenId> support_tokens(const CondDistribution& p, const DecoderSpec& spec) {
  std::vector<TokenId> out;
  if (spec.kind() == DecoderKind::Greedy) {
    out.push_back(argmax_token(p.probs()));
    return out;
  }
  if (spec.is_truncation()) {
    out = allowed_set(p.probs(), spec).ids;
    std::sort(out.begin(), out.end());
    return out;
  }
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) out.push_back(static_cast<TokenId>(i));
  return out;
}

TokenSeq trace_back(const std::vector<std::vector<Node>>& layers, std::size_t depth, std::size_t index) {
  TokenSeq out(depth + 1);
  for (std::size_t d = depth + 1; d-- > 0;) {
    const Node& n = layers[d][index];
    out[d] = n.token;
    index = n.parent;
  }
  return out;
}

bool pow_exceeds(std::size_t base, std::size_t exp, std::size_t limit) {
  double v = 1.0;
  for (std::size_t i = 0; i < exp; ++i) {
    v *= static_cast<double>(base);
    if (v > static_cast<double>(limit)) return true;
  }
  return false;
}

TokenSeq argmax_by_dp(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                      const DecoderSpec& spec) {
  const std::size_t order = model.order();
  auto state_of = [order](std::span<const TokenId> context) {
    const std::size_t keep = std::min(order, context.size());
    return TokenSeq(context.end() - static_cast<std::ptrdiff_t>(keep), context.end());
  };

  std::vector<std::vector<Node>> layers;
  // state of every node in the current layer, keyed for deterministic iteration
  std::map<TokenSeq, std::size_t> frontier;

  const TokenSeq start(prompt.begin(), prompt.end());
  for (std::size_t t = 0; t < length; ++t) {
    std::vector<Node> layer;
    std::map<TokenSeq, std::size_t> next;
    auto path_of = [&](const Node& n) {
      TokenSeq out = t == 0 ? TokenSeq{} : trace_back(layers, t - 1, n.parent);
      out.push_back(n.token);
      return out;
    };
    auto relax = [&](TokenSeq state, Node cand) {
      auto [it, fresh] = next.try_emplace(std::move(state), layer.size());
      if (fresh) {
        layer.push_back(cand);
        return;
      }
      Node& cur = layer[it->second];
      if (cand.score > cur.score + kTieTolerance ||
          (cand.score > cur.score - kTieTolerance && path_of(cand) < path_of(cur)))
        cur = cand;
    };

    if (t == 0) {
      const CondDistribution p = model.next_distribution(start);
      for (TokenId y : support_tokens(p, spec)) {
        TokenSeq ctx = start;
        ctx.push_back(y);
        relax(state_of(ctx), {0, y, std::log(p[y])});
      }
    } else {
      for (const auto& [state, idx] : frontier) {
        // a state holds the whole context while it is shorter than L, and
        // the last L tokens afterwards, so it determines the next row
        const TokenSeq& ctx = state;
        const CondDistribution p = model.next_distribution(ctx);
        const double base = layers[t - 1][idx].score;
        for (TokenId y : support_tokens(p, spec)) {
          TokenSeq c2 = ctx;
          c2.push_back(y);
          relax(state_of(c2), {idx, y, base + std::log(p[y])});
        }
      }
    }
    layers.push_back(std::move(layer));
    frontier = std::move(next);
  }

  std::size_t best = 0;
  bool have = false;
  for (const auto& [state, idx] : frontier) {
    const double s = layers.back()[idx].score;
    if (!have || s > layers.back()[best].score + kTieTolerance) {
      best = idx;
      have = true;
    } else if (s > layers.back()[best].score - kTieTolerance &&
               trace_back(layers, length - 1, idx) < trace_back(layers, length - 1, best)) {
      best = idx;
    }
  }
  if (!have) throw Error(ErrorCode::DegenerateDistribution, "decoder support is empty");
  return trace_back(layers, length - 1, best);
}

}  // namespace

TokenSeq global_argmax(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                       const DecoderSpec& spec, const EnumerationLimits& limits) {
  if (length == 0) return {};
  if (!pow_exceeds(model.vocab_size(), model.order(), limits.max_dp_states))
    return argmax_by_dp(model, prompt, length, spec);

  const auto paths = enumerate_support(model, prompt, length, spec, limits);
  const SupportPath* best = nullptr;
  for (const auto& path : paths) {
    if (!best || path.log_p > best->log_p + kTieTolerance) best = &path;
  }
  if (!best) throw Error(ErrorCode::DegenerateDistribution, "decoder support is empty");
  return best->completion;
}

}  // namespace distortlab
