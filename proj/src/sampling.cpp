#include "distortlab/sampling.hpp"

#include <cmath>
#include <limits>

#include "distortlab/errors.hpp"
#include "distortlab/parallel.hpp"
#include "distortlab/rng.hpp"

namespace distortlab {

std::vector<double> GenerationRecord::z_values() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.z);
  return out;
}

TokenId draw_token(std::span<const double> probs, double u) {
  double cum = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cum += probs[i];
    if (u < cum) return static_cast<TokenId>(i);
  }
  if (last_positive == probs.size()) throw Error(ErrorCode::DegenerateDistribution, "cannot sample from a zero row");
  // rounding left cum slightly below 1
  return static_cast<TokenId>(last_positive);
}

GenerationRecord sample_sequence(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                 const DecoderSpec& spec, std::uint64_t seed) {
  if (spec.is_global()) throw Error(ErrorCode::InvalidArgument, "sample_sequence needs a locally normalized decoder");
  if (length < 1) throw Error(ErrorCode::InvalidArgument, "length must be >= 1");

  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  rec.decoder = spec;
  rec.seed = seed;
  rec.steps.reserve(length);

  Rng rng(seed);
  TokenSeq context = rec.prompt;
  for (std::size_t t = 0; t < length; ++t) {
    const CondDistribution p = model.next_distribution(context);
    const LocalStep step = local_step(p.probs(), spec);
    const TokenId y = draw_token(step.dist.probs(), rng.uniform());
    rec.steps.push_back({y, step.dist[y], step.z, step.allowed_size});
    rec.log_q += std::log(step.dist[y]);
    rec.log_p += std::log(p[y]);
    rec.completion.push_back(y);
    context.push_back(y);
  }
  return rec;
}

std::vector<GenerationRecord> sample_many(const TokenModel& model, std::span<const TokenId> prompt,
                                          std::size_t length, const DecoderSpec& spec, std::size_t n,
                                          std::uint64_t master_seed, unsigned jobs) {
  std::vector<GenerationRecord> out(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    out[i] = sample_sequence(model, prompt, length, spec, derive_seed(master_seed, i));
    out[i].index = i;
  });
  return out;
}

QScore q_logprob(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                 std::span<const TokenId> completion) {
  QScore score;
  TokenSeq context(prompt.begin(), prompt.end());
  for (TokenId y : completion) {
    const CondDistribution p = model.next_distribution(context);
    if (y >= p.size()) throw Error(ErrorCode::InvalidArgument, "completion token id out of range");
    const LocalStep step = local_step(p.probs(), spec);
    score.z_values.push_back(step.z);
    score.log_z_values.push_back(step.log_z);
    score.log_p += p[y] > 0.0 ? std::log(p[y]) : -std::numeric_limits<double>::infinity();
    score.log_q += step.dist[y] > 0.0 ? std::log(step.dist[y]) : -std::numeric_limits<double>::infinity();
    context.push_back(y);
  }
  return score;
}

TokenSeq greedy_sequence(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length) {
  TokenSeq context(prompt.begin(), prompt.end());
  TokenSeq out;
  out.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const TokenId y = argmax_token(model.next_distribution(context).probs());
    out.push_back(y);
    context.push_back(y);
  }
  return out;
}

}  // namespace distortlab
