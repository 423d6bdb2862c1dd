#include "distortlab/calibrate.hpp"

#include <cmath>
#include <sstream>

#include "distortlab/errors.hpp"
#include "distortlab/parallel.hpp"
#include "distortlab/rng.hpp"
#include "distortlab/sampling.hpp"

namespace distortlab {

namespace {

std::vector<CondDistribution> rows_at(const TokenModel& model, std::span<const TokenSeq> contexts, unsigned jobs) {
  if (contexts.empty()) throw Error(ErrorCode::InvalidArgument, "no contexts to average over");
  std::vector<CondDistribution> rows(contexts.size());
  parallel_for(contexts.size(), jobs, [&](std::size_t i) { rows[i] = model.next_distribution(contexts[i]); });
  return rows;
}

double mean_z(const std::vector<CondDistribution>& rows, const DecoderSpec& spec) {
  double s = 0.0;
  for (const auto& row : rows) s += normalizer(row.probs(), spec);
  return s / static_cast<double>(rows.size());
}

void check_grid(std::span<const double> grid, const char* name) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, std::string(name) + " grid is empty");
  for (double v : grid)
    if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, std::string(name) + " grid values must lie in (0, 1]");
}

struct Best {
  double value = 1.0;
  double avg = 1.0;
  double residual = INFINITY;
};

template <class Make>
Best search(const std::vector<CondDistribution>& rows, std::span<const double> grid, double target, unsigned jobs,
            Make&& make) {
  std::vector<double> avgs(grid.size());
  parallel_for(grid.size(), jobs, [&](std::size_t i) { avgs[i] = mean_z(rows, make(grid[i])); });
  Best best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = std::abs(avgs[i] - target);
    if (r <= best.residual) best = {grid[i], avgs[i], r};
  }
  return best;
}

}  // namespace

double average_normalizer(const TokenModel& model, const DecoderSpec& spec, std::span<const TokenSeq> contexts,
                          unsigned jobs) {
  return mean_z(rows_at(model, contexts, jobs), spec);
}

std::vector<TokenSeq> sample_contexts(const TokenModel& model, std::span<const TokenId> prompt, std::size_t n,
                                      std::size_t max_len, std::uint64_t seed, unsigned jobs) {
  if (max_len < 1) throw Error(ErrorCode::InvalidArgument, "max_len must be >= 1");
  std::vector<TokenSeq> out(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    out[i].assign(prompt.begin(), prompt.end());
    const std::size_t extra = i % max_len;
    if (extra == 0) return;
    const auto rec = sample_sequence(model, prompt, extra, DecoderSpec::pure(), derive_seed(seed, i));
    out[i].insert(out[i].end(), rec.completion.begin(), rec.completion.end());
  });
  return out;
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 100; ++i) g.push_back(i / 100.0);
  return g;
}

CalibrationResult match_parameters(const TokenModel& model, std::size_t k, std::span<const TokenSeq> contexts,
                                   std::span<const double> grid_pi, std::span<const double> grid_tau, double tol,
                                   unsigned jobs) {
  check_grid(grid_pi, "pi");
  check_grid(grid_tau, "tau");
  const auto rows = rows_at(model, contexts, jobs);

  CalibrationResult res;
  res.k = k;
  res.n_contexts = rows.size();
  res.tolerance = tol;
  res.avg_z_k = mean_z(rows, DecoderSpec::top_k(k));

  const Best pi = search(rows, grid_pi, res.avg_z_k, jobs, [](double v) { return DecoderSpec::nucleus(v); });
  const Best tau = search(rows, grid_tau, res.avg_z_k, jobs, [](double v) { return DecoderSpec::temperature(v); });
  res.matched_pi = pi.value;
  res.avg_z_pi = pi.avg;
  res.residual_pi = pi.residual;
  res.matched_tau = tau.value;
  res.avg_z_tau = tau.avg;
  res.residual_tau = tau.residual;

  if (res.residual_pi > tol || res.residual_tau > tol) {
    std::ostringstream msg;
    msg << "no grid value within tolerance " << tol << " of avg Z_k = " << res.avg_z_k
        << " (pi residual " << res.residual_pi << ", tau residual " << res.residual_tau << ")";
    throw Error(ErrorCode::NoMatch, msg.str());
  }
  return res;
}

}  // namespace distortlab
