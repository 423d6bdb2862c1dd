#include "distortlab/qd.hpp"

#include <algorithm>
#include <cmath>

#include "distortlab/errors.hpp"
#include "distortlab/rng.hpp"

namespace distortlab {

namespace {

template <class Fn>
Estimate mean_with_stderr(std::span<const GenerationRecord> records, Fn&& value) {
  if (records.empty()) throw Error(ErrorCode::InvalidArgument, "no records to average");
  const double n = static_cast<double>(records.size());
  double mean = 0.0;
  for (const auto& r : records) mean += value(r);
  mean /= n;
  Estimate est{mean, std::nullopt};
  if (records.size() >= 2) {
    double ss = 0.0;
    for (const auto& r : records) ss += (value(r) - mean) * (value(r) - mean);
    est.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return est;
}

bool sweep_order(const DecoderSpec& a, const DecoderSpec& b) {
  if (a.kind() != b.kind()) return a.kind() < b.kind();
  if (a.param() != b.param()) return a.param() < b.param();
  return a.mode() < b.mode();
}

}  // namespace

QdPoint exact_qd(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenId> prompt,
                 std::size_t length, const EnumerationLimits& limits) {
  const SequenceDistribution q = enumerate_distribution(model, prompt, length, spec, limits);
  QdPoint pt;
  pt.decoder = spec;
  pt.length = length;
  pt.exact = true;
  pt.n = q.size();
  pt.entropy_stderr = 0.0;
  pt.nll_stderr = 0.0;
  for (const auto& e : q.entries) {
    if (!(e.prob > 0.0)) continue;
    pt.entropy -= e.prob * e.log_prob;
    pt.nll -= e.prob * e.log_p;
  }
  pt.entropy = std::max(pt.entropy, 0.0);
  return pt;
}

Estimate smb_entropy(std::span<const GenerationRecord> records, double log_normalizer) {
  for (const auto& r : records) {
    if (!(r.decoder == records.front().decoder))
      throw Error(ErrorCode::MixedDecoders, "records come from different decoders: " + records.front().decoder.label() +
                                                " and " + r.decoder.label());
  }
  return mean_with_stderr(records, [&](const GenerationRecord& r) { return log_normalizer - r.log_q; });
}

Estimate mean_nll(std::span<const GenerationRecord> records) {
  return mean_with_stderr(records, [](const GenerationRecord& r) { return -r.log_p; });
}

std::vector<QdPoint> qd_sweep(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                              std::span<const DecoderSpec> grid, const SweepOptions& options) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "decoder grid is empty");
  std::vector<DecoderSpec> specs(grid.begin(), grid.end());
  std::stable_sort(specs.begin(), specs.end(), sweep_order);

  std::vector<QdPoint> points;
  points.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const DecoderSpec& spec = specs[i];
    QdPoint pt;
    pt.decoder = spec;
    pt.length = length;
    try {
      if (options.mode == SweepMode::Exact) {
        pt = exact_qd(model, spec, prompt, length, options.limits);
      } else {
        const std::uint64_t seed = derive_seed(options.seed, i);
        std::vector<GenerationRecord> records;
        double log_c = 0.0;
        if (spec.is_global()) {
          GlobalBatch batch =
              sample_global(model, prompt, length, spec, options.n_samples, seed, options.max_attempts, options.jobs);
          if (spec.is_truncation() || spec.kind() == DecoderKind::Temperature)
            log_c = std::log(batch.stats.acceptance_rate());
          records = std::move(batch.records);
        } else {
          records = sample_many(model, prompt, length, spec, options.n_samples, seed, options.jobs);
        }
        const Estimate h = smb_entropy(records, log_c);
        const Estimate nll = mean_nll(records);
        pt.entropy = h.value;
        pt.entropy_stderr = h.stderr_;
        pt.nll = nll.value;
        pt.nll_stderr = nll.stderr_;
        pt.n = records.size();
        pt.exact = false;
      }
    } catch (const Error& e) {
      pt.error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
    points.push_back(std::move(pt));
  }
  return points;
}

}  // namespace distortlab
