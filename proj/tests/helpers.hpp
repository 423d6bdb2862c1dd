#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "distortlab/model.hpp"

namespace testutil {

inline std::string source_path(const std::string& rel) { return std::string(DISTORTLAB_SOURCE_DIR) + "/" + rel; }

inline const distortlab::TokenModel& catsat() {
  static const distortlab::TokenModel m = distortlab::load_model(source_path("fixtures/catsat.json"));
  return m;
}
inline const distortlab::TokenModel& ab_model() {
  static const distortlab::TokenModel m = distortlab::load_model(source_path("fixtures/ab.json"));
  return m;
}
inline const distortlab::TokenModel& chain4() {
  static const distortlab::TokenModel m = distortlab::load_model(source_path("fixtures/chain4.json"));
  return m;
}

inline distortlab::TokenSeq catsat_prompt() { return catsat().tokenize("The cat sat on"); }
inline distortlab::TokenSeq words(const distortlab::TokenModel& m, const std::string& text) { return m.tokenize(text); }

/// Random order-L table model with dense positive rows for every context
/// (Dirichlet(alpha) rows; alpha small gives peaked rows).
inline distortlab::TokenModel random_table(std::mt19937_64& rng, std::size_t vocab, std::size_t order,
                                           double alpha = 1.0, bool with_zeros = false) {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < vocab; ++i) toks.push_back("t" + std::to_string(i));
  std::gamma_distribution<double> g(alpha, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto row = [&] {
    std::vector<double> r(vocab);
    double s = 0.0;
    for (auto& x : r) {
      x = g(rng) + 1e-12;
      if (with_zeros && u(rng) < 0.3) x = 0.0;
      s += x;
    }
    if (s == 0.0) {
      r[0] = 1.0;
      s = 1.0;
    }
    for (auto& x : r) x /= s;
    return r;
  };
  distortlab::TokenModel::Rows rows;
  std::vector<distortlab::TokenId> ctx(order, 0);
  // every full-length context gets a row; shorter contexts use the default row
  std::size_t total = 1;
  for (std::size_t i = 0; i < order; ++i) total *= vocab;
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t x = c;
    for (std::size_t i = order; i-- > 0;) {
      ctx[i] = static_cast<distortlab::TokenId>(x % vocab);
      x /= vocab;
    }
    rows[distortlab::context_key(ctx, order)] = row();
  }
  return distortlab::TokenModel::table(distortlab::Vocabulary(toks), order, rows, row());
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace testutil
