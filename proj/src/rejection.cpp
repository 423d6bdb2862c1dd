#include <algorithm>
#include <cmath>

#include "distortlab/global.hpp"
#include "distortlab/parallel.hpp"
#include "distortlab/rng.hpp"

namespace distortlab {

namespace {

bool contains(const AllowedSet& set, TokenId id) {
  return std::find(set.ids.begin(), set.ids.end(), id) != set.ids.end();
}

GenerationRecord make_record(std::span<const TokenId> prompt, const DecoderSpec& spec, std::uint64_t seed) {
  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  rec.decoder = spec.with_mode(Normalization::Global);
  rec.seed = seed;
  return rec;
}

}  // namespace

std::pair<GenerationRecord, RejectionStats> rejection_sample_truncated(
    const TokenModel& model, std::span<const TokenId> prompt, std::size_t length, const DecoderSpec& spec,
    std::uint64_t seed, std::uint64_t max_attempts) {
  if (!spec.is_truncation()) throw Error(ErrorCode::UnsupportedKind, "truncated rejection sampling needs topk or nucleus");
  if (length < 1) throw Error(ErrorCode::InvalidArgument, "length must be >= 1");

  Rng rng(seed);
  RejectionStats stats;
  TokenSeq context;
  std::vector<StepRecord> steps;
  while (stats.attempts < max_attempts) {
    ++stats.attempts;
    context.assign(prompt.begin(), prompt.end());
    steps.clear();
    bool inside = true;
    for (std::size_t t = 0; t < length && inside; ++t) {
      const CondDistribution p = model.next_distribution(context);
      const TokenId y = draw_token(p.probs(), rng.uniform());
      const AllowedSet set = allowed_set(p.probs(), spec);
      // stop drawing as soon as the sample leaves the support
      inside = contains(set, y);
      steps.push_back({y, p[y], local_step(p.probs(), spec).z, set.ids.size()});
      context.push_back(y);
    }
    if (!inside) continue;

    ++stats.accepted;
    GenerationRecord rec = make_record(prompt, spec, seed);
    rec.steps = steps;
    for (const auto& s : rec.steps) {
      rec.completion.push_back(s.token);
      rec.log_p += std::log(s.prob);
    }
    rec.log_q = rec.log_p;
    return {std::move(rec), stats};
  }
  throw RejectionBudgetExceeded(stats);
}

std::pair<GenerationRecord, RejectionStats> rejection_sample_temperature(
    const TokenModel& model, std::span<const TokenId> prompt, std::size_t length, double tau, std::uint64_t seed,
    std::uint64_t max_attempts) {
  const DecoderSpec spec = DecoderSpec::temperature(tau, Normalization::Global);
  if (length < 1) throw Error(ErrorCode::InvalidArgument, "length must be >= 1");
  const double exponent = 1.0 / tau - 1.0;

  Rng rng(seed);
  RejectionStats stats;
  TokenSeq context;
  TokenSeq completion;
  while (stats.attempts < max_attempts) {
    ++stats.attempts;
    context.assign(prompt.begin(), prompt.end());
    completion.clear();
    double log_p = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
      const CondDistribution p = model.next_distribution(context);
      const TokenId y = draw_token(p.probs(), rng.uniform());
      log_p += std::log(p[y]);
      completion.push_back(y);
      context.push_back(y);
    }
    if (!(std::log(rng.uniform()) < exponent * log_p)) continue;

    ++stats.accepted;
    GenerationRecord rec = make_record(prompt, spec, seed);
    rec.completion = completion;
    rec.log_p = log_p;
    context.assign(prompt.begin(), prompt.end());
    for (TokenId y : completion) {
      const CondDistribution p = model.next_distribution(context);
      const double w = std::exp(std::log(p[y]) / tau);
      rec.steps.push_back({y, w, local_step(p.probs(), spec).z, p.size()});
      rec.log_q += std::log(p[y]) / tau;
      context.push_back(y);
    }
    return {std::move(rec), stats};
  }
  throw RejectionBudgetExceeded(stats);
}

GlobalBatch sample_global(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                          const DecoderSpec& spec, std::size_t n, std::uint64_t master_seed,
                          std::uint64_t max_attempts, unsigned jobs) {
  GlobalBatch batch;
  batch.records.resize(n);
  std::vector<RejectionStats> stats(n);
  const DecoderSpec global = spec.with_mode(Normalization::Global);

  TokenSeq argmax;
  if (spec.kind() == DecoderKind::Greedy) argmax = global_argmax(model, prompt, length, global);

  parallel_for(n, jobs, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(master_seed, i);
    GenerationRecord rec;
    switch (spec.kind()) {
      case DecoderKind::Greedy: {
        rec = make_record(prompt, global, seed);
        rec.completion = argmax;
        TokenSeq context = rec.prompt;
        for (TokenId y : argmax) {
          const CondDistribution p = model.next_distribution(context);
          rec.steps.push_back({y, 1.0, p[argmax_token(p.probs())], 1});
          rec.log_p += std::log(p[y]);
          context.push_back(y);
        }
        stats[i] = {1, 1};
        break;
      }
      case DecoderKind::Pure:
        rec = sample_sequence(model, prompt, length, spec.with_mode(Normalization::Local), seed);
        rec.decoder = global;
        stats[i] = {1, 1};
        break;
      case DecoderKind::TopK:
      case DecoderKind::Nucleus:
        std::tie(rec, stats[i]) = rejection_sample_truncated(model, prompt, length, global, seed, max_attempts);
        break;
      case DecoderKind::Temperature:
        std::tie(rec, stats[i]) = rejection_sample_temperature(model, prompt, length, spec.tau(), seed, max_attempts);
        break;
    }
    rec.index = i;
    batch.records[i] = std::move(rec);
  });
  for (const auto& s : stats) batch.stats += s;
  return batch;
}

}  // namespace distortlab
