#include "distortlab/equilibrium.hpp"

#include <algorithm>
#include <cmath>

#include "distortlab/errors.hpp"
#include "distortlab/rng.hpp"
#include "distortlab/sampling.hpp"

namespace distortlab {

namespace {

const SequenceEntry& supported(const SequenceDistribution& r, const SequenceEntry& e) {
  const SequenceEntry* match = r.find(e.completion);
  if (!match || !std::isfinite(match->log_prob))
    throw Error(ErrorCode::SupportViolation, "measure charges a completion outside the reference support");
  return *match;
}

double quality_scale(const DecoderSpec& spec) {
  return spec.kind() == DecoderKind::Temperature ? 1.0 / spec.tau() : 1.0;
}

std::size_t point_mass_count(std::size_t support) { return std::min<std::size_t>(support, 256); }

}  // namespace

double kl_divergence(const SequenceDistribution& mu, const SequenceDistribution& r) {
  double kl = 0.0;
  for (const auto& e : mu.entries) {
    if (!(e.prob > 0.0)) continue;
    kl += e.prob * (std::log(e.prob) - supported(r, e).log_prob);
  }
  return kl;
}

double kl_objective(const SequenceDistribution& mu, const SequenceDistribution& r) { return -kl_divergence(mu, r); }

ObjectiveReport decompose_objective(const SequenceDistribution& mu, const SequenceDistribution& q) {
  const double scale = quality_scale(q.decoder);
  const bool local = !q.decoder.is_global();
  ObjectiveReport rep;
  for (const auto& e : mu.entries) {
    if (!(e.prob > 0.0)) continue;
    const SequenceEntry& ref = supported(q, e);
    const double log_mu = std::log(e.prob);
    rep.entropy -= e.prob * log_mu;
    rep.quality += e.prob * scale * ref.log_p;
    if (local) rep.distortion += e.prob * ref.log_epsilon;
    rep.kl_to_q += e.prob * (log_mu - ref.log_prob);
  }
  rep.total = rep.entropy + rep.quality + rep.distortion;
  rep.constant = rep.total + rep.kl_to_q;
  return rep;
}

ObjectiveReport decompose_objective(const SequenceDistribution& mu, const TokenModel& model, const DecoderSpec& spec,
                                    std::span<const TokenId> prompt, std::size_t length,
                                    const EnumerationLimits& limits) {
  return decompose_objective(mu, enumerate_distribution(model, prompt, length, spec, limits));
}

SequenceDistribution reweight(const SequenceDistribution& q, std::span<const double> weights) {
  if (weights.size() != q.size()) throw Error(ErrorCode::InvalidArgument, "weight count does not match the support");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights have zero total");
  SequenceDistribution mu = q;
  for (std::size_t i = 0; i < mu.entries.size(); ++i) {
    mu.entries[i].prob = weights[i] / total;
    mu.entries[i].log_prob = weights[i] > 0.0 ? std::log(weights[i]) - std::log(total) : -INFINITY;
  }
  return mu;
}

namespace {

VariationalCheck check_maximizer(const SequenceDistribution& q, std::size_t n_perturbations, std::uint64_t seed) {
  VariationalCheck check;
  check.decoder = q.decoder;
  check.support_size = q.size();
  const ObjectiveReport at_q = decompose_objective(q, q);
  check.objective_at_q = at_q.total;
  check.constant = at_q.constant;

  const std::size_t n = q.size();
  auto test = [&](std::span<const double> weights) {
    const ObjectiveReport rep = decompose_objective(reweight(q, weights), q);
    const double violation = rep.total + rep.kl_to_q - at_q.total;
    check.max_violation = std::max(check.max_violation, violation);
    const bool not_dominated = rep.kl_to_q > 1e-6 && !(at_q.total - rep.total > 0.0);
    if (violation > kVariationalTolerance || not_dominated) ++check.violations;
    ++check.perturbations;
  };

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n_perturbations; ++i) {
    Rng rng(derive_seed(seed, i));
    const bool around_q = i % 2 == 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = -std::log1p(-rng.uniform());
      w[j] = around_q ? q.entries[j].prob * e : e;
    }
    test(w);
  }
  std::fill(w.begin(), w.end(), 1.0);
  test(w);
  for (std::size_t j = 0; j < point_mass_count(n); ++j) {
    std::fill(w.begin(), w.end(), 0.0);
    w[j] = 1.0;
    test(w);
  }
  check.passed = check.violations == 0 && check.max_violation <= kVariationalTolerance;
  return check;
}

}  // namespace

VariationalReport verify_variational_max(const TokenModel& model, const DecoderSpec& spec,
                                         std::span<const TokenId> prompt, std::size_t length,
                                         std::size_t n_perturbations, std::uint64_t seed,
                                         const EnumerationLimits& limits) {
  VariationalReport report;
  report.local = check_maximizer(enumerate_local(model, prompt, length, spec, limits), n_perturbations, seed);
  report.global = check_maximizer(enumerate_global(model, prompt, length, spec, limits), n_perturbations,
                                  derive_seed(seed, 0x9106a1));
  return report;
}

ZeroTempReport zero_temperature_scan(const TokenModel& model, std::span<const TokenId> prompt, std::size_t length,
                                     std::span<const double> taus, const EnumerationLimits& limits) {
  if (taus.empty()) throw Error(ErrorCode::InvalidArgument, "tau list is empty");
  std::vector<double> sorted(taus.begin(), taus.end());
  std::sort(sorted.begin(), sorted.end());

  ZeroTempReport report;
  report.greedy = greedy_sequence(model, prompt, length);
  report.global_argmax = distortlab::global_argmax(model, prompt, length, DecoderSpec::pure(), limits);

  bool local_run = true;
  bool global_run = true;
  for (double tau : sorted) {
    const DecoderSpec spec = DecoderSpec::temperature(tau);
    const SequenceDistribution local = enumerate_local(model, prompt, length, spec, limits);
    const SequenceDistribution global = enumerate_global(model, prompt, length, spec, limits);
    ZeroTempRow row;
    row.tau = tau;
    row.local_mode = local.mode().completion;
    row.local_mass = local.mode().prob;
    row.global_mode = global.mode().completion;
    row.global_mass = global.mode().prob;
    row.global_log_normalizer = global.log_normalizer;
    row.support_size = global.size();
    row.local_converged = row.local_mode == report.greedy;
    row.global_converged = row.global_mode == report.global_argmax;

    local_run = local_run && row.local_converged;
    global_run = global_run && row.global_converged;
    if (local_run) report.converged_tau_local = tau;
    if (global_run) report.converged_tau_global = tau;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace distortlab
