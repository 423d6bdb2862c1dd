#include <cmath>
#include <string>

#include "distortlab/errors.hpp"
#include "distortlab/model.hpp"
#include "httplib.h"
#include "json.hpp"

namespace distortlab::detail {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

CondDistribution fetch_remote_distribution(const RemoteEndpoint& endpoint, std::span<const TokenId> context,
                                           std::size_t vocab_size) {
  const SplitUrl url = split_url(endpoint.url);
  // one client per request: httplib clients are not shared across threads
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  nlohmann::json request;
  request["context"] = std::vector<TokenId>(context.begin(), context.end());
  auto res = client.Post(url.path + "/v1/logprobs", request.dump(), "application/json");
  if (!res) throw Error(ErrorCode::Remote, "remote request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error(ErrorCode::Remote, "remote returned HTTP " + std::to_string(res->status));

  std::vector<double> logprobs;
  try {
    logprobs = nlohmann::json::parse(res->body).at("logprobs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Remote, std::string("malformed remote reply: ") + e.what());
  }
  if (logprobs.size() != vocab_size)
    throw Error(ErrorCode::Remote, "remote reply has " + std::to_string(logprobs.size()) + " logprobs, expected " +
                                       std::to_string(vocab_size));

  std::vector<double> probs(vocab_size);
  double mass = 0.0;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (std::isnan(logprobs[i]) || logprobs[i] > 0.0) throw Error(ErrorCode::Remote, "remote reply has invalid logprob");
    probs[i] = std::exp(logprobs[i]);
    mass += probs[i];
  }
  if (std::fabs(mass - 1.0) > 1e-6) throw NormalizationError("remote", mass);
  for (double& p : probs) p /= mass;
  return CondDistribution(std::move(probs));
}

}  // namespace distortlab::detail
