#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "distortlab/errors.hpp"
#include "distortlab/global.hpp"
#include "distortlab/lnd.hpp"
#include "helpers.hpp"

using namespace distortlab;
using testutil::catsat;
using testutil::catsat_prompt;

namespace {

GenerationRecord scored(const TokenModel& m, const DecoderSpec& spec, const TokenSeq& prompt, const std::string& text) {
  GenerationRecord rec;
  rec.prompt = prompt;
  rec.completion = m.tokenize(text);
  rec.decoder = spec;
  const auto s = q_logprob(m, spec, prompt, rec.completion);
  TokenSeq ctx = prompt;
  for (std::size_t i = 0; i < rec.completion.size(); ++i) {
    rec.steps.push_back({rec.completion[i], 0.0, s.z_values[i], 0});
    ctx.push_back(rec.completion[i]);
  }
  rec.log_q = s.log_q;
  rec.log_p = s.log_p;
  return rec;
}

}  // namespace

TEST_SUITE("lnd") {
  TEST_CASE("distortion weights on the top-2 example") {
    const auto spec = DecoderSpec::top_k(2);
    CHECK(distortion_weight(scored(catsat(), spec, catsat_prompt(), "a fence")) ==
          doctest::Approx(-std::log(0.4 * 0.2)).epsilon(1e-13));
    CHECK(distortion_weight(scored(catsat(), spec, catsat_prompt(), "the mat")) ==
          doctest::Approx(-std::log(0.32)).epsilon(1e-13));
    CHECK(distortion_weight(scored(catsat(), spec, catsat_prompt(), "a fence")) == doctest::Approx(2.526).epsilon(1e-3));
    const auto pure = sample_sequence(catsat(), catsat_prompt(), 3, DecoderSpec::pure(), 4);
    CHECK(distortion_weight(pure) == 0.0);
    const auto sampled = sample_sequence(catsat(), catsat_prompt(), 2, spec, 11);
    CHECK(std::abs(distortion_weight(sampled) + [&] {
            double s = 0.0;
            for (double z : sampled.z_values()) s += std::log(z);
            return s;
          }()) <= 1e-15);
  }

  TEST_CASE("missing trace") {
    GenerationRecord empty;
    CHECK_THROWS_AS((void)distortion_weight(empty), Error);
    try {
      (void)distortion_weight(empty);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingTrace);
    }
  }

  TEST_CASE("pair ratio log 4 by both computation paths and against the global oracle") {
    const auto spec = DecoderSpec::top_k(2);
    const auto a = catsat().tokenize("a fence");
    const auto b = catsat().tokenize("the mat");
    const auto r = lnd_pair_ratio(catsat(), spec, catsat_prompt(), a, b);
    CHECK(std::abs(r.log_ratio - std::log(4.0)) <= 1e-12);
    CHECK(std::abs(r.z_path_ratio() - r.log_ratio) <= 1e-9);
    CHECK(std::abs(std::log((0.125 / 0.01) * (0.18 / 0.5625)) - r.log_ratio) <= 1e-12);

    const auto q = enumerate_local(catsat(), catsat_prompt(), 2, spec);
    const auto g = enumerate_global(catsat(), catsat_prompt(), 2, spec);
    const double def3 = (q.probability(a) / g.probability(a)) / (q.probability(b) / g.probability(b));
    CHECK(std::abs(std::exp(r.log_ratio) - def3) <= 1e-9);

    CHECK(lnd_pair_ratio(catsat(), spec, catsat_prompt(), a, a).log_ratio == 0.0);
    CHECK(lnd_pair_ratio(catsat(), DecoderSpec::pure(), catsat_prompt(), a, b).log_ratio == 0.0);
  }

  TEST_CASE("two-path identity, antisymmetry and oracle consistency on random models") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = testutil::random_table(rng, 4, 1 + trial % 2, 0.5);
      const TokenSeq prompt{1};
      for (const auto& spec : {DecoderSpec::top_k(2), DecoderSpec::nucleus(0.7), DecoderSpec::temperature(0.6)}) {
        CAPTURE(spec.label());
        const auto q = enumerate_local(m, prompt, 3, spec);
        const auto g = enumerate_global(m, prompt, 3, spec);
        for (std::size_t i = 0; i < q.size(); i += 5) {
          const auto& ea = q.entries[i];
          const auto& eb = q.entries[(i * 13 + 3) % q.size()];
          const auto r = lnd_pair_ratio(m, spec, prompt, ea.completion, eb.completion);
          const auto back = lnd_pair_ratio(m, spec, prompt, eb.completion, ea.completion);
          CHECK(std::abs(r.log_ratio + back.log_ratio) <= 1e-12);
          if (spec.is_truncation()) CHECK(std::abs(r.log_ratio - r.z_path_ratio()) <= 1e-9);
          const double def3 = (ea.log_prob - g.find(ea.completion)->log_prob) - (eb.log_prob - g.find(eb.completion)->log_prob);
          CHECK(std::abs(r.log_ratio - def3) <= 1e-9);
        }
      }
    }
  }

  TEST_CASE("sequences outside the support raise ZeroMass") {
    try {
      (void)lnd_pair_ratio(catsat(), DecoderSpec::top_k(2), catsat_prompt(), catsat().tokenize("a f01"),
                           catsat().tokenize("the mat"));
      FAIL("expected ZeroMass");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroMass);
    }
  }

  TEST_CASE("linear-interpolation quantiles") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    CHECK(quantile(xs, 0.0) == 1.0);
    CHECK(quantile(xs, 1.0) == 4.0);
    CHECK(quantile(xs, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(xs, 0.25) == doctest::Approx(1.75));
    CHECK(quantile(std::vector<double>{7.0}, 0.9) == 7.0);
    CHECK_THROWS_AS((void)quantile(std::vector<double>{}, 0.5), Error);
    CHECK_THROWS_AS((void)quantile(xs, 1.5), Error);
  }

  TEST_CASE("quantile table on top-2 takes values in {0, log 4}") {
    const auto t = lnd_quantile_table(catsat(), DecoderSpec::top_k(2), catsat_prompt(), 4000, 2, 9, kDefaultQuantileLevels, 4);
    REQUIRE(t.values.size() == 5);
    for (const auto& r : t.records) {
      const double a = std::abs(r.log_ratio);
      CHECK((a <= 1e-12 || std::abs(a - std::log(4.0)) <= 1e-12));
    }
    // exact pair law: mixed first words with probability 2 * 0.25 * 0.75 = 0.375
    CHECK(t.values[0] == 0.0);
    CHECK(t.values[1] == 0.0);
    CHECK(t.values[2] == 0.0);
    CHECK(std::abs(t.values[3] - std::log(4.0)) <= 1e-12);
    CHECK(std::abs(t.values[4] - std::log(4.0)) <= 1e-12);
    for (std::size_t i = 1; i < t.values.size(); ++i) CHECK(t.values[i - 1] <= t.values[i]);

    const auto same = lnd_quantile_table(catsat(), DecoderSpec::top_k(2), catsat_prompt(), 4000, 2, 9, kDefaultQuantileLevels, 1);
    CHECK(same.values == t.values);
  }

  TEST_CASE("pure sampling gives an all-zero table") {
    const auto t = lnd_quantile_table(testutil::chain4(), DecoderSpec::pure(), TokenSeq{0}, 300, 6, 2);
    for (double v : t.values) CHECK(v == 0.0);
    CHECK_THROWS_AS((void)lnd_quantile_table(testutil::chain4(), DecoderSpec::pure(), TokenSeq{0}, 0, 6, 2), Error);
  }
}
