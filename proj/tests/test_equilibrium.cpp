#include <cmath>
#include <random>

#include "doctest.h"

#include "distortlab/equilibrium.hpp"
#include "distortlab/errors.hpp"
#include "distortlab/io.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace distortlab;
using testutil::catsat;
using testutil::catsat_prompt;

namespace {

SequenceDistribution flat(std::size_t n) {
  SequenceDistribution d;
  d.length = 1;
  for (std::size_t i = 0; i < n; ++i) {
    SequenceEntry e;
    e.completion = {static_cast<TokenId>(i)};
    e.prob = 1.0 / static_cast<double>(n);
    e.log_prob = std::log(e.prob);
    d.entries.push_back(e);
  }
  return d;
}

const TokenModel& char_bigram() {
  static const TokenModel m =
      train_ngram(read_file(testutil::source_path("fixtures/tiny_corpus.txt")), 1, 1.0, UnitMode::Char);
  return m;
}

}  // namespace

TEST_SUITE("equilibrium") {
  TEST_CASE("kl_objective examples") {
    const auto r = flat(4);
    CHECK(std::abs(kl_objective(r, r)) <= 1e-15);
    CHECK(kl_objective(reweight(r, std::vector<double>{0, 0, 1, 0}), r) == doctest::Approx(std::log(0.25)));
    CHECK(kl_objective(reweight(r, std::vector<double>{1, 1, 0, 0}), r) == doctest::Approx(-std::log(2.0)));
    CHECK(kl_divergence(reweight(r, std::vector<double>{1, 1, 0, 0}), r) == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("support violations") {
    auto small = flat(2);
    const auto big = flat(3);
    CHECK_NOTHROW((void)kl_objective(small, big));
    try {
      (void)kl_objective(big, small);
      FAIL("expected SupportViolation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SupportViolation);
    }
    small.entries[1].prob = 0.0;
    small.entries[1].log_prob = -INFINITY;
    // a zero-probability entry contributes 0 log 0 = 0 and is not a violation
    CHECK_NOTHROW((void)kl_objective(big, reweight(big, std::vector<double>{1, 1, 1})));
  }

  TEST_CASE("decomposition at q on the top-2 example") {
    const auto spec = DecoderSpec::top_k(2);
    const auto q = enumerate_local(catsat(), catsat_prompt(), 2, spec);
    const auto rep = decompose_objective(q, catsat(), spec, catsat_prompt(), 2);
    CHECK(std::abs(rep.total) <= 1e-12);
    CHECK(std::abs(rep.kl_to_q) <= 1e-12);
    CHECK(std::abs(rep.total - (rep.entropy + rep.quality + rep.distortion)) <= 1e-12);
    double h = 0.0;
    for (double x : {0.125, 0.125, 0.5625, 0.1875}) h -= x * std::log(x);
    CHECK(rep.entropy == doctest::Approx(h).epsilon(1e-13));

    const auto uniform = reweight(q, std::vector<double>(4, 1.0));
    const auto u = decompose_objective(uniform, q);
    std::map<TokenSeq, double> um, qm;
    for (const auto& e : q.entries) {
      um[e.completion] = 0.25;
      qm[e.completion] = e.prob;
    }
    CHECK(u.total == doctest::Approx(-oracle::kl(um, qm)).epsilon(1e-12));
    CHECK(u.total < 0.0);
  }

  TEST_CASE("pure sampling has no distortion term") {
    const auto spec = DecoderSpec::pure();
    const auto q = enumerate_local(testutil::chain4(), TokenSeq{0}, 3, spec);
    std::mt19937_64 rng(1);
    std::vector<double> w(q.size());
    for (int t = 0; t < 5; ++t) {
      for (auto& x : w) x = std::uniform_real_distribution<double>(0, 1)(rng);
      CHECK(decompose_objective(reweight(q, w), q).distortion == 0.0);
    }
  }

  TEST_CASE("total + KL is constant: 0 locally, log C globally") {
    std::mt19937_64 rng(51);
    const std::vector<DecoderSpec> specs{DecoderSpec::top_k(2), DecoderSpec::nucleus(0.65), DecoderSpec::temperature(0.8),
                                         DecoderSpec::pure(), DecoderSpec::greedy()};
    for (const auto* m : {&catsat(), &char_bigram()}) {
      const TokenSeq prompt = m == &catsat() ? catsat_prompt() : m->tokenize("t");
      for (const auto& spec : specs) {
        CAPTURE(spec.label());
        for (const auto mode : {Normalization::Local, Normalization::Global}) {
          const auto q = enumerate_distribution(*m, prompt, 3, spec.with_mode(mode));
          const auto brute = oracle::distributions(*m, prompt, 3, spec);
          const double expected = mode == Normalization::Local ? 0.0 : brute.log_c;
          std::vector<double> w(q.size());
          for (int t = 0; t < 4; ++t) {
            for (auto& x : w) x = std::exponential_distribution<double>(1.0)(rng);
            const auto rep = decompose_objective(reweight(q, w), q);
            CHECK(std::abs(rep.constant - expected) <= 1e-9);
          }
        }
      }
    }
  }

  TEST_CASE("variational maximum holds for local and global decoders") {
    for (const auto& spec : {DecoderSpec::top_k(2), DecoderSpec::nucleus(0.65), DecoderSpec::temperature(0.8)}) {
      CAPTURE(spec.label());
      const auto a = verify_variational_max(catsat(), spec, catsat_prompt(), 2, 100, 3);
      CHECK(a.passed());
      CHECK(a.local.violations == 0);
      CHECK(a.global.violations == 0);
      CHECK(a.local.perturbations >= 100);
      CHECK(std::abs(a.local.constant) <= 1e-9);
      const auto b = verify_variational_max(char_bigram(), spec, char_bigram().tokenize("t"), 3, 100, 3);
      CHECK(b.passed());
      CHECK(b.local.max_violation <= 1e-9);
    }
  }

  TEST_CASE("a support of size one is trivially the maximizer") {
    const auto r = verify_variational_max(catsat(), DecoderSpec::greedy(), catsat_prompt(), 3, 20, 1);
    CHECK(r.local.support_size == 1);
    CHECK(r.passed());
  }

  TEST_CASE("global two-term objective dominates the local one") {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = testutil::random_table(rng, 4, 1, 0.5);
      for (const auto& spec : {DecoderSpec::top_k(2), DecoderSpec::nucleus(0.6), DecoderSpec::top_k(3)}) {
        const auto q = enumerate_local(m, TokenSeq{0}, 3, spec);
        const auto g = enumerate_global(m, TokenSeq{0}, 3, spec);
        const auto lq = decompose_objective(q, g);
        const auto lg = decompose_objective(g, g);
        CHECK(lg.entropy + lg.quality >= lq.entropy + lq.quality - 1e-12);
      }
    }
  }

  TEST_CASE("zero-temperature limits on the A/B fixture") {
    const auto& m = testutil::ab_model();
    const std::vector<double> taus{1.0, 0.5, 0.2, 0.1, 0.05};
    const auto rep = zero_temperature_scan(m, m.tokenize("S"), 2, taus);
    CHECK(m.detokenize(rep.greedy) == "A C");
    CHECK(m.detokenize(rep.global_argmax) == "B C");
    CHECK(rep.limits_differ());
    REQUIRE(rep.rows.size() == 5);
    CHECK(rep.rows.front().tau == 0.05);
    const auto& cold = rep.rows.front();
    CHECK(m.detokenize(cold.local_mode) == "A C");
    CHECK(m.detokenize(cold.global_mode) == "B C");
    // closed form 0.36^20 / (0.36^20 + 2 * 0.3^20 + 0.04^20)
    const double closed = 1.0 / (1.0 + 2.0 * std::pow(0.3 / 0.36, 20) + std::pow(0.04 / 0.36, 20));
    CHECK(cold.global_mass == doctest::Approx(closed).epsilon(1e-12));
    CHECK(rep.converged_tau_global == 1.0);
    REQUIRE(rep.converged_tau_local.has_value());
    CHECK(*rep.converged_tau_local <= 0.5);
    const auto& warm = rep.rows.back();
    CHECK(warm.tau == 1.0);
    CHECK(m.detokenize(warm.global_mode) == "B C");
    CHECK(m.detokenize(warm.local_mode) == "B C");
    CHECK_FALSE(warm.local_converged);
  }

  TEST_CASE("consistent model gives identical limits") {
    const auto& m = testutil::chain4();
    const std::vector<double> taus{0.5, 0.1};
    const auto rep = zero_temperature_scan(m, TokenSeq{0}, 3, taus);
    CHECK_FALSE(rep.limits_differ());
    CHECK(rep.rows.front().local_mode == rep.rows.front().global_mode);
    CHECK(rep.converged_tau_local == 0.5);
    CHECK(rep.converged_tau_global == 0.5);
  }
}
