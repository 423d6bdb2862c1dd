#include "distortlab/lnd.hpp"

#include <algorithm>
#include <cmath>

#include "distortlab/errors.hpp"
#include "distortlab/parallel.hpp"
#include "distortlab/rng.hpp"

namespace distortlab {

double distortion_weight(const GenerationRecord& record) {
  if (record.steps.empty() || record.steps.size() != record.completion.size())
    throw Error(ErrorCode::MissingTrace, "record carries no normalizer trace");
  double w = 0.0;
  for (const auto& s : record.steps) w -= std::log(s.z);
  return w;
}

namespace {

double exponent_of(const DecoderSpec& spec) {
  return spec.kind() == DecoderKind::Temperature ? 1.0 / spec.tau() : 1.0;
}

double sum_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

}  // namespace

LndRecord lnd_pair_ratio(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                         std::span<const TokenId> seq_a, std::span<const TokenId> seq_b) {
  const DecoderSpec local = spec.with_mode(Normalization::Local);
  const QScore a = q_logprob(model, local, prompt, seq_a);
  const QScore b = q_logprob(model, local, prompt, seq_b);
  if (!std::isfinite(a.log_q) || !std::isfinite(b.log_q))
    throw Error(ErrorCode::ZeroMass, "sequence lies outside the decoder's local support");

  const double s = exponent_of(local);
  LndRecord rec;
  rec.seq_a.assign(seq_a.begin(), seq_a.end());
  rec.seq_b.assign(seq_b.begin(), seq_b.end());
  rec.decoder = local;
  rec.log_ratio = (a.log_q - s * a.log_p) - (b.log_q - s * b.log_p);
  rec.z_sum_a = sum_of(a.log_z_values);
  rec.z_sum_b = sum_of(b.log_z_values);
  return rec;
}

double quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

QuantileTable lnd_quantile_table(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                                 std::size_t n_pairs, std::size_t length, std::uint64_t seed,
                                 std::span<const double> levels, unsigned jobs) {
  if (n_pairs < 1) throw Error(ErrorCode::InvalidArgument, "n_pairs must be >= 1");
  const DecoderSpec local = spec.with_mode(Normalization::Local);
  const double s = exponent_of(local);

  QuantileTable table;
  table.decoder = local;
  table.levels.assign(levels.begin(), levels.end());
  table.records.resize(n_pairs);
  parallel_for(n_pairs, jobs, [&](std::size_t i) {
    const auto a = sample_sequence(model, prompt, length, local, derive_seed(seed, 2 * i));
    const auto b = sample_sequence(model, prompt, length, local, derive_seed(seed, 2 * i + 1));
    LndRecord& rec = table.records[i];
    rec.seq_a = a.completion;
    rec.seq_b = b.completion;
    rec.decoder = local;
    rec.log_ratio = (a.log_q - s * a.log_p) - (b.log_q - s * b.log_p);
    rec.z_sum_a = -distortion_weight(a);
    rec.z_sum_b = -distortion_weight(b);
  });

  std::vector<double> magnitudes;
  magnitudes.reserve(n_pairs);
  for (const auto& r : table.records) magnitudes.push_back(std::abs(r.log_ratio));
  std::sort(magnitudes.begin(), magnitudes.end());
  for (double level : table.levels) table.values.push_back(quantile(magnitudes, level));
  return table;
}

}  // namespace distortlab
