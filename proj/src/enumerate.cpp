#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "distortlab/global.hpp"
#include "distortlab/parallel.hpp"

namespace distortlab {

namespace {

constexpr double kTieTolerance = 1e-12;

struct Branch {
  TokenId token;
  double log_p;
  double log_q;
};

struct Expansion {
  std::vector<Branch> branches;  // ascending token id
  double log_z = 0.0;
};

Expansion expand(const CondDistribution& p, const DecoderSpec& spec) {
  Expansion out;
  const LocalStep step = local_step(p.probs(), spec);
  out.log_z = step.log_z;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (step.dist[i] > 0.0 && p[i] > 0.0)
      out.branches.push_back({static_cast<TokenId>(i), std::log(p[i]), std::log(step.dist[i])});
  }
  return out;
}

class SupportWalker {
 public:
  SupportWalker(const TokenModel& model, const DecoderSpec& spec, std::size_t length, std::size_t cap,
                std::atomic<std::size_t>& counter)
      : model_(model), spec_(spec), length_(length), cap_(cap), counter_(counter) {}

  void walk(TokenSeq& context, std::size_t prompt_len, SupportPath& partial, std::vector<SupportPath>& out) {
    const std::size_t depth = context.size() - prompt_len;
    if (depth == length_) {
      if (counter_.fetch_add(1) + 1 > cap_) throw SupportTooLarge(static_cast<double>(cap_) + 1.0, cap_);
      out.push_back(partial);
      return;
    }
    const Expansion ex = expand(model_.next_distribution(context), spec_);
    for (const Branch& b : ex.branches) {
      SupportPath next = partial;
      next.completion.push_back(b.token);
      next.log_p += b.log_p;
      next.log_q_local += b.log_q;
      next.log_epsilon -= ex.log_z;
      context.push_back(b.token);
      walk(context, prompt_len, next, out);
      context.pop_back();
    }
  }

 private:
  const TokenModel& model_;
  const DecoderSpec& spec_;
  std::size_t length_;
  std::size_t cap_;
  std::atomic<std::size_t>& counter_;
};

// Product of branching factors along the first path: a cheap size estimate
// used to fail fast on hopeless requests.
double estimate_support(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                        const DecoderSpec& spec, double stop_above) {
  TokenSeq context(prompt.begin(), prompt.end());
  double estimate = 1.0;
  for (std::size_t t = 0; t < length; ++t) {
    const Expansion ex = expand(model.next_distribution(context), spec);
    if (ex.branches.empty()) return 0.0;
    estimate *= static_cast<double>(ex.branches.size());
    if (estimate > stop_above) return estimate;
    context.push_back(ex.branches.front().token);
  }
  return estimate;
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

bool lex_less(std::span<const TokenId> a, std::span<const TokenId> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

std::vector<SupportPath> enumerate_support(const TokenModel& model, std::span<const TokenId> prompt,
                                           std::size_t length, const DecoderSpec& spec,
                                           const EnumerationLimits& limits) {
  if (length < 1) throw Error(ErrorCode::InvalidArgument, "length must be >= 1");
  const double cap = static_cast<double>(limits.max_sequences);
  const double estimate = estimate_support(model, prompt, length, spec, cap * 16.0);
  if (estimate > cap * 16.0) throw SupportTooLarge(estimate, limits.max_sequences);

  // Split by first token so jobs write disjoint slices, then merge in id order.
  TokenSeq root(prompt.begin(), prompt.end());
  const Expansion first = expand(model.next_distribution(root), spec);
  std::atomic<std::size_t> counter{0};
  std::vector<std::vector<SupportPath>> parts(first.branches.size());
  parallel_for(first.branches.size(), limits.jobs, [&](std::size_t i) {
    const Branch& b = first.branches[i];
    SupportWalker walker(model, spec, length, limits.max_sequences, counter);
    TokenSeq context = root;
    context.push_back(b.token);
    SupportPath partial;
    partial.completion = {b.token};
    partial.log_p = b.log_p;
    partial.log_q_local = b.log_q;
    partial.log_epsilon = -first.log_z;
    walker.walk(context, root.size(), partial, parts[i]);
  });

  std::vector<SupportPath> out;
  out.reserve(counter.load());
  for (auto& part : parts) {
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

SequenceDistribution enumerate_global(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                      const DecoderSpec& spec, const EnumerationLimits& limits) {
  const DecoderSpec global = spec.with_mode(Normalization::Global);
  // Global greedy is the greedy path itself; every other kind conditions p
  // (or p^(1/tau)) on the truncation support.
  std::vector<SupportPath> paths = enumerate_support(model, prompt, length, global, limits);

  const double scale = spec.kind() == DecoderKind::Temperature ? 1.0 / spec.tau() : 1.0;
  std::vector<double> weights(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) weights[i] = scale * paths[i].log_p;
  const double log_c = log_sum_exp(weights);

  SequenceDistribution dist;
  dist.context.assign(prompt.begin(), prompt.end());
  dist.length = length;
  dist.decoder = global;
  dist.log_normalizer = log_c;
  dist.entries.reserve(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    SequenceEntry e;
    e.completion = std::move(paths[i].completion);
    e.log_prob = weights[i] - log_c;
    e.prob = std::exp(e.log_prob);
    e.log_p = paths[i].log_p;
    e.log_epsilon = paths[i].log_epsilon;
    dist.entries.push_back(std::move(e));
  }
  return dist;
}

SequenceDistribution enumerate_local(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                     const DecoderSpec& spec, const EnumerationLimits& limits) {
  const DecoderSpec local = spec.with_mode(Normalization::Local);
  std::vector<SupportPath> paths = enumerate_support(model, prompt, length, local, limits);

  SequenceDistribution dist;
  dist.context.assign(prompt.begin(), prompt.end());
  dist.length = length;
  dist.decoder = local;
  dist.log_normalizer = 0.0;
  dist.entries.reserve(paths.size());
  for (auto& path : paths) {
    SequenceEntry e;
    e.completion = std::move(path.completion);
    e.log_prob = path.log_q_local;
    e.prob = std::exp(e.log_prob);
    e.log_p = path.log_p;
    e.log_epsilon = path.log_epsilon;
    dist.entries.push_back(std::move(e));
  }
  return dist;
}

SequenceDistribution enumerate_distribution(const TokenModel& model, std::span<const TokenId> prompt,
                                            std::size_t length, const DecoderSpec& spec,
                                            const EnumerationLimits& limits) {
  return spec.is_global() ? enumerate_global(model, prompt, length, spec, limits)
                          : enumerate_local(model, prompt, length, spec, limits);
}

const SequenceEntry* SequenceDistribution::find(std::span<const TokenId> completion) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), completion,
                             [](const SequenceEntry& e, std::span<const TokenId> key) { return lex_less(e.completion, key); });
  if (it == entries.end() || !std::equal(it->completion.begin(), it->completion.end(), completion.begin(), completion.end()))
    return nullptr;
  return &*it;
}

double SequenceDistribution::probability(std::span<const TokenId> completion) const {
  const SequenceEntry* e = find(completion);
  return e ? e->prob : 0.0;
}

double SequenceDistribution::total_mass() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.prob;
  return s;
}

const SequenceEntry& SequenceDistribution::mode() const {
  if (entries.empty()) throw Error(ErrorCode::DegenerateDistribution, "empty sequence distribution");
  const SequenceEntry* best = &entries.front();
  for (const auto& e : entries) {
    if (e.log_prob > best->log_prob + kTieTolerance) best = &e;
  }
  return *best;
}

}  // namespace distortlab
