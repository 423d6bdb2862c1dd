#include <cmath>
#include <map>
#include <random>

#include "doctest.h"

#include "distortlab/errors.hpp"
#include "distortlab/global.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace distortlab;
using testutil::catsat;
using testutil::catsat_prompt;

namespace {

double tv_from(const std::vector<GenerationRecord>& recs, const SequenceDistribution& exact) {
  std::map<TokenSeq, double> freq;
  for (const auto& r : recs) freq[r.completion] += 1.0 / static_cast<double>(recs.size());
  double tv = 0.0;
  for (const auto& e : exact.entries) {
    tv += std::abs(freq[e.completion] - e.prob);
    freq.erase(e.completion);
  }
  for (const auto& [s, f] : freq) tv += f;
  return 0.5 * tv;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("global") {
  TEST_CASE("global top-2 on catsat divides the joint masses by 0.26") {
    const auto d = enumerate_global(catsat(), catsat_prompt(), 2, DecoderSpec::top_k(2));
    REQUIRE(d.size() == 4);
    const auto& m = catsat();
    CHECK(d.probability(m.tokenize("a fence")) == doctest::Approx(1.0 / 26).epsilon(1e-13));
    CHECK(d.probability(m.tokenize("a gate")) == doctest::Approx(1.0 / 26).epsilon(1e-13));
    CHECK(d.probability(m.tokenize("the mat")) == doctest::Approx(18.0 / 26).epsilon(1e-13));
    CHECK(d.probability(m.tokenize("the table")) == doctest::Approx(6.0 / 26).epsilon(1e-13));
    CHECK(d.log_normalizer == doctest::Approx(std::log(0.26)).epsilon(1e-13));
    CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("local and global enumeration agree with the brute-force oracle") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 8; ++trial) {
      const auto m = testutil::random_table(rng, 3 + trial % 3, 1 + trial % 2, 0.6, trial % 2 == 1);
      const std::size_t t = 2 + trial % 3;
      const DecoderSpec specs[] = {DecoderSpec::top_k(2), DecoderSpec::nucleus(0.6), DecoderSpec::temperature(0.7),
                                   DecoderSpec::pure(), DecoderSpec::greedy()};
      for (const auto& spec : specs) {
        CAPTURE(spec.label());
        const TokenSeq prompt{0};
        const auto brute = oracle::distributions(m, prompt, t, spec);
        const auto local = enumerate_local(m, prompt, t, spec);
        const auto global = enumerate_global(m, prompt, t, spec);
        CHECK(local.size() == brute.local.size());
        CHECK(global.size() == brute.global.size());
        for (const auto& e : local.entries) CHECK(std::abs(e.prob - brute.local.at(e.completion)) <= 1e-12);
        for (const auto& e : global.entries) CHECK(std::abs(e.prob - brute.global.at(e.completion)) <= 1e-12);
        CHECK(std::abs(local.total_mass() - 1.0) <= 1e-9);
        CHECK(std::abs(global.total_mass() - 1.0) <= 1e-9);
        if (spec.kind() != DecoderKind::Greedy) CHECK(std::abs(global.log_normalizer - brute.log_c) <= 1e-12);
        for (const auto& e : global.entries) CHECK(e.completion.size() == t);
      }
    }
  }

  TEST_CASE("pure and tau = 1 global distributions equal the chain-rule p") {
    std::mt19937_64 rng(22);
    const auto m = testutil::random_table(rng, 4, 1);
    for (const auto& spec : {DecoderSpec::pure(), DecoderSpec::temperature(1.0)}) {
      const auto d = enumerate_global(m, TokenSeq{2}, 3, spec);
      CHECK(d.size() == 64);
      for (const auto& e : d.entries) CHECK(std::abs(e.log_prob - e.log_p) <= 1e-12);
    }
  }

  TEST_CASE("global ratios equal p ratios, or their 1/tau power") {
    std::mt19937_64 rng(23);
    const auto m = testutil::random_table(rng, 5, 2, 0.5);
    for (const auto& spec : {DecoderSpec::top_k(3), DecoderSpec::nucleus(0.7), DecoderSpec::temperature(0.4)}) {
      const auto d = enumerate_global(m, TokenSeq{1, 3}, 3, spec);
      const double s = spec.kind() == DecoderKind::Temperature ? 1.0 / spec.tau() : 1.0;
      for (std::size_t i = 0; i + 1 < d.size(); i += 3) {
        const auto& a = d.entries[i];
        const auto& b = d.entries[(i * 7 + 1) % d.size()];
        CHECK(std::abs((a.log_prob - b.log_prob) - s * (a.log_p - b.log_p)) <= 1e-12);
      }
    }
  }

  TEST_CASE("entries are sorted and mode breaks ties lexicographically") {
    const auto d = enumerate_local(testutil::ab_model(), testutil::ab_model().tokenize("S"), 2, DecoderSpec::greedy());
    REQUIRE(d.size() == 1);
    CHECK(testutil::ab_model().detokenize(d.mode().completion) == "A C");
    const auto t = enumerate_local(testutil::ab_model(), testutil::ab_model().tokenize("S"), 2, DecoderSpec::pure());
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.entries[i - 1].completion < t.entries[i].completion);
    CHECK(testutil::ab_model().detokenize(t.mode().completion) == "B C");
  }

  TEST_CASE("enumeration cap raises SupportTooLarge") {
    EnumerationLimits small;
    small.max_sequences = 100;
    CHECK(code_of([&] { (void)enumerate_global(catsat(), catsat_prompt(), 3, DecoderSpec::pure(), small); }) ==
          ErrorCode::SupportTooLarge);
    try {
      (void)enumerate_global(catsat(), catsat_prompt(), 7, DecoderSpec::pure());
      FAIL("expected SupportTooLarge");
    } catch (const SupportTooLarge& e) {
      CHECK(e.estimated_size() > 1e7);
      CHECK(e.cap() == 10'000'000);
    }
  }

  TEST_CASE("parallel enumeration is identical to sequential") {
    EnumerationLimits par;
    par.jobs = 6;
    const auto a = enumerate_global(testutil::chain4(), TokenSeq{0}, 4, DecoderSpec::temperature(0.5));
    const auto b = enumerate_global(testutil::chain4(), TokenSeq{0}, 4, DecoderSpec::temperature(0.5), par);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.entries[i].completion == b.entries[i].completion);
      CHECK(a.entries[i].prob == b.entries[i].prob);
    }
  }

  TEST_CASE("truncated rejection sampler matches 18/26 for 'the mat'") {
    const std::size_t n = 100000;
    const auto batch = sample_global(catsat(), catsat_prompt(), 2, DecoderSpec::top_k(2, Normalization::Global), n, 1, kDefaultMaxAttempts, 8);
    double hits = 0;
    const TokenSeq target = catsat().tokenize("the mat");
    for (const auto& r : batch.records) hits += r.completion == target;
    CHECK(std::abs(hits / n - 18.0 / 26) <= 0.01);
    CHECK(batch.stats.accepted == n);
    CHECK(batch.stats.acceptance_rate() == doctest::Approx(0.26).epsilon(0.02));
    const auto exact = enumerate_global(catsat(), catsat_prompt(), 2, DecoderSpec::top_k(2));
    CHECK(tv_from(batch.records, exact) <= 0.02);
  }

  TEST_CASE("global records carry unnormalized weights and p") {
    const auto [rec, stats] =
        rejection_sample_truncated(catsat(), catsat_prompt(), 2, DecoderSpec::top_k(2, Normalization::Global), 4);
    CHECK(rec.log_q == rec.log_p);
    CHECK(rec.decoder.is_global());
    CHECK(stats.accepted == 1);
    CHECK(stats.attempts >= 1);
    CHECK(rec.steps.size() == 2);
  }

  TEST_CASE("k = |V| accepts every attempt") {
    std::uint64_t total = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto [rec, stats] = rejection_sample_truncated(catsat(), catsat_prompt(), 3,
                                                           DecoderSpec::top_k(catsat().vocab_size(), Normalization::Global), seed);
      CHECK(stats.acceptance_rate() == 1.0);
      total += stats.attempts;
    }
    CHECK(total == 200);
  }

  TEST_CASE("a hopeless budget raises RejectionBudgetExceeded with stats") {
    std::vector<std::string> toks;
    for (int i = 0; i < 100; ++i) toks.push_back("u" + std::to_string(i));
    const auto m = TokenModel::table(Vocabulary(toks), 0, {{"", std::vector<double>(100, 0.01)}});
    try {
      (void)rejection_sample_truncated(m, {}, 3, DecoderSpec::top_k(1, Normalization::Global), 9, 1);
      FAIL("expected RejectionBudgetExceeded");
    } catch (const RejectionBudgetExceeded& e) {
      CHECK(e.stats().attempts == 1);
      CHECK(e.stats().accepted == 0);
    }
    CHECK(code_of([&] { (void)rejection_sample_truncated(m, {}, 3, DecoderSpec::temperature(0.5), 9, 1); }) ==
          ErrorCode::UnsupportedKind);
  }

  TEST_CASE("temperature rejection sampler: closed form, tau = 1 and tau > 1") {
    const auto m = parse_model(R"({"kind":"table","order":0,"vocab":["a","b"],"rows":{"":[0.75,0.25]}})");
    const std::size_t n = 60000;
    const auto batch = sample_global(m, {}, 1, DecoderSpec::temperature(0.5, Normalization::Global), n, 3);
    double zero = 0;
    for (const auto& r : batch.records) zero += r.completion[0] == 0;
    CHECK(std::abs(zero / n - 0.9) <= 4 * std::sqrt(0.09 / n));
    CHECK(batch.stats.acceptance_rate() == doctest::Approx(0.625).epsilon(0.02));

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto [rec, stats] = rejection_sample_temperature(testutil::chain4(), TokenSeq{0}, 5, 1.0, seed);
      CHECK(stats.attempts == 1);
      CHECK(rec.log_q == doctest::Approx(rec.log_p).epsilon(1e-14));
    }
    CHECK(code_of([&] { (void)rejection_sample_temperature(m, {}, 1, 1.2, 1); }) == ErrorCode::InvalidTau);
  }

  TEST_CASE("rejection samplers are unbiased on small supports") {
    const auto& m = testutil::chain4();
    for (const auto& spec : {DecoderSpec::top_k(2, Normalization::Global), DecoderSpec::nucleus(0.6, Normalization::Global),
                             DecoderSpec::temperature(0.5, Normalization::Global)}) {
      CAPTURE(spec.label());
      const auto exact = enumerate_global(m, TokenSeq{0}, 3, spec);
      CHECK(exact.size() <= 64);
      const auto batch = sample_global(m, TokenSeq{0}, 3, spec, 100000, 77, kDefaultMaxAttempts, 8);
      CHECK(tv_from(batch.records, exact) <= 0.02);
    }
  }

  TEST_CASE("global_argmax: A/B fixture, catsat and first step") {
    const auto& ab = testutil::ab_model();
    CHECK(ab.detokenize(global_argmax(ab, ab.tokenize("S"), 2, DecoderSpec::pure())) == "B C");
    CHECK(catsat().detokenize(global_argmax(catsat(), catsat_prompt(), 2, DecoderSpec::top_k(2))) == "the mat");
    CHECK(global_argmax(ab, ab.tokenize("S"), 1, DecoderSpec::pure()) == TokenSeq{1});
    CHECK(ab.detokenize(global_argmax(ab, ab.tokenize("S"), 2, DecoderSpec::greedy())) == "A C");
    CHECK(global_argmax(ab, ab.tokenize("S"), 0, DecoderSpec::pure()).empty());
  }

  TEST_CASE("DP argmax equals the enumerated argmax, including lexicographic ties") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
      // quantized rows create many exact ties
      auto m = testutil::random_table(rng, 3 + trial % 3, trial % 3, 0.7, trial % 4 == 0);
      if (trial % 2 == 0) {
        TokenModel::Rows rows;
        for (const auto& [k, r] : m.rows()) {
          std::vector<double> q(r.size());
          double s = 0.0;
          for (std::size_t i = 0; i < r.size(); ++i) s += q[i] = std::round(r[i] * 4) + (i == 0);
          for (auto& x : q) x /= s;
          rows[k] = q;
        }
        std::vector<double> def(m.vocab_size(), 1.0 / static_cast<double>(m.vocab_size()));
        m = TokenModel::table(m.vocab(), m.order(), rows, def);
      }
      const std::size_t t = 1 + trial % 4;
      for (const auto& spec : {DecoderSpec::pure(), DecoderSpec::top_k(2), DecoderSpec::nucleus(0.5), DecoderSpec::greedy()}) {
        CAPTURE(trial);
        CAPTURE(spec.label());
        const TokenSeq prompt{static_cast<TokenId>(trial % m.vocab_size())};
        const auto dp = global_argmax(m, prompt, t, spec);
        EnumerationLimits forced;
        forced.max_dp_states = 0;
        const auto en = global_argmax(m, prompt, t, spec, forced);
        CHECK(dp == en);
        const auto glob = enumerate_global(m, prompt, t, spec);
        CHECK(glob.mode().completion == dp);
      }
    }
  }
}
