#include "distortlab/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "distortlab/errors.hpp"

namespace distortlab {

namespace fs = std::filesystem;
using nlohmann::json;

void write_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::random_device rd;
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()) + "-" +
                              std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw Error(ErrorCode::Io, "short write to " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw Error(ErrorCode::Io, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

json token_block(std::span<const TokenId> ids, const TokenModel& model) {
  json tokens = json::array();
  for (TokenId id : ids) tokens.push_back(model.vocab().token(id));
  return {{"text", model.detokenize(ids)}, {"tokens", std::move(tokens)}, {"ids", std::vector<TokenId>(ids.begin(), ids.end())}};
}

// JSON has no infinities; callers treat null as -inf.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string ids_field(std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

json to_json(const GenerationRecord& record, const TokenModel& model) {
  json steps = json::array();
  json allowed = json::array();
  for (const auto& s : record.steps) {
    steps.push_back(s.prob);
    allowed.push_back(s.allowed_size);
  }
  return {
      {"index", record.index},
      {"decoder", record.decoder.label()},
      {"seed", record.seed},
      {"prompt", token_block(record.prompt, model)},
      {"completion", token_block(record.completion, model)},
      {"log_p", finite_or_null(record.log_p)},
      {"log_q", finite_or_null(record.log_q)},
      {"z_values", record.z_values()},
      {"step_probs", std::move(steps)},
      {"allowed_sizes", std::move(allowed)},
  };
}

std::string to_jsonl(std::span<const GenerationRecord> records, const TokenModel& model) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r, model).dump();
    out += '\n';
  }
  return out;
}

json to_json(const RejectionStats& stats) {
  return {{"attempts", stats.attempts}, {"accepted", stats.accepted}, {"acceptance_rate", stats.acceptance_rate()}};
}

json to_json(const LndRecord& record, const TokenModel& model) {
  return {{"decoder", record.decoder.label()},
          {"seq_a", token_block(record.seq_a, model)},
          {"seq_b", token_block(record.seq_b, model)},
          {"log_ratio", record.log_ratio},
          {"z_sum_a", record.z_sum_a},
          {"z_sum_b", record.z_sum_b}};
}

json to_json(const CalibrationResult& r) {
  return {{"k", r.k},
          {"matched_pi", r.matched_pi},
          {"matched_tau", r.matched_tau},
          {"avg_z_k", r.avg_z_k},
          {"avg_z_pi", r.avg_z_pi},
          {"avg_z_tau", r.avg_z_tau},
          {"n_contexts", r.n_contexts},
          {"residuals", {{"pi", r.residual_pi}, {"tau", r.residual_tau}}},
          {"tolerance", r.tolerance}};
}

json to_json(const VariationalCheck& c) {
  return {{"decoder", c.decoder.label()},
          {"support_size", c.support_size},
          {"constant", c.constant},
          {"objective_at_q", c.objective_at_q},
          {"max_violation", c.max_violation},
          {"perturbations", c.perturbations},
          {"violations", c.violations},
          {"passed", c.passed}};
}

json to_json(const ZeroTempReport& report, const TokenModel& model) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"tau", r.tau},
                    {"local_mode", model.detokenize(r.local_mode)},
                    {"local_mass", r.local_mass},
                    {"local_converged", r.local_converged},
                    {"global_mode", model.detokenize(r.global_mode)},
                    {"global_mass", r.global_mass},
                    {"global_log_normalizer", r.global_log_normalizer},
                    {"support_size", r.support_size},
                    {"global_converged", r.global_converged}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"greedy", model.detokenize(report.greedy)},
          {"global_argmax", model.detokenize(report.global_argmax)},
          {"limits_differ", report.limits_differ()},
          {"converged_tau_local", opt(report.converged_tau_local)},
          {"converged_tau_global", opt(report.converged_tau_global)},
          {"rows", std::move(rows)}};
}

json to_json(const PressureResult& r) {
  return {{"pressure", r.pressure},
          {"eigenvalue", r.eigenvalue},
          {"iterations", r.iterations},
          {"right", r.right},
          {"left", r.left},
          {"stationary", r.stationary}};
}

std::string to_csv(const SequenceDistribution& dist, const TokenModel& model) {
  std::vector<const SequenceEntry*> order;
  order.reserve(dist.size());
  for (const auto& e : dist.entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const SequenceEntry* a, const SequenceEntry* b) {
    if (a->prob != b->prob) return a->prob > b->prob;
    return a->completion < b->completion;
  });
  std::string out = "completion_ids,completion_text,prob,log_p\n";
  for (const SequenceEntry* e : order) {
    out += ids_field(e->completion) + ',' + csv_field(model.detokenize(e->completion)) + ',' + format_double(e->prob) +
           ',' + format_double(e->log_p) + '\n';
  }
  return out;
}

std::string to_csv(const QuantileTable& table) {
  std::string out = "decoder,level,value\n";
  for (std::size_t i = 0; i < table.levels.size(); ++i)
    out += table.decoder.label() + ',' + format_double(table.levels[i]) + ',' + format_double(table.values[i]) + '\n';
  return out;
}

std::string to_csv(std::span<const QdPoint> points) {
  std::string out =
      "decoder_kind,param,mode,entropy,entropy_stderr,nll,nll_stderr,n,exact,entropy_per_token,nll_per_token,error\n";
  for (const auto& p : points) {
    const bool ok = !p.error;
    out += std::string(decoder_kind_name(p.decoder.kind())) + ',' + p.decoder.param_string() + ',' +
           normalization_name(p.decoder.mode()) + ',' + (ok ? format_double(p.entropy) : "") + ',' +
           (ok ? optional_field(p.entropy_stderr) : "") + ',' + (ok ? format_double(p.nll) : "") + ',' +
           (ok ? optional_field(p.nll_stderr) : "") + ',' + std::to_string(p.n) + ',' + (p.exact ? "true" : "false") +
           ',' + (ok ? format_double(p.entropy_per_token()) : "") + ',' + (ok ? format_double(p.nll_per_token()) : "") +
           ',' + csv_field(p.error.value_or("")) + '\n';
  }
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

}  // namespace

std::string to_svg(std::span<const QdPoint> points, std::string_view title) {
  constexpr double W = 720, H = 480, left = 70, right = 190, top = 40, bottom = 60;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};

  std::map<std::string, std::vector<const QdPoint*>> series;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& p : points) {
    if (p.error) continue;
    series[std::string(decoder_kind_name(p.decoder.kind())) + "@" + normalization_name(p.decoder.mode())].push_back(&p);
    xmin = std::min(xmin, p.entropy);
    xmax = std::max(xmax, p.entropy);
    ymin = std::min(ymin, p.nll);
    ymax = std::max(ymax, p.nll);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double m = span > 0 ? 0.05 * span : 0.5;
    lo -= m;
    hi += m;
  };
  pad(xmin, xmax);
  pad(ymin, ymax);
  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0, yv = ymin + (ymax - ymin) * i / 5.0;
    s << "<line x1=\"" << sx(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(xv) << "\" y2=\"" << top + ph + 5
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << fixed(xv) << "</text>\n";
    s << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(yv) << "\" x2=\"" << left << "\" y2=\"" << sy(yv)
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << fixed(yv) << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">entropy (nats)</text>\n";
  s << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << "negative log-likelihood (nats)</text>\n";

  std::size_t color = 0;
  double ly = top + 10;
  for (const auto& [name, pts] : series) {
    const char* c = palette[color++ % std::size(palette)];
    const bool global = name.ends_with("@global");
    for (const QdPoint* p : pts) {
      if (global)
        s << "<rect x=\"" << sx(p->entropy) - 4 << "\" y=\"" << sy(p->nll) - 4 << "\" width=\"8\" height=\"8\" fill=\"" << c
          << "\"><title>" << xml_escape(p->decoder.label()) << "</title></rect>\n";
      else
        s << "<circle cx=\"" << sx(p->entropy) << "\" cy=\"" << sy(p->nll) << "\" r=\"4\" fill=\"" << c << "\"><title>"
          << xml_escape(p->decoder.label()) << "</title></circle>\n";
    }
    s << "<rect x=\"" << W - right + 15 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << c << "\"/>\n";
    s << "<text x=\"" << W - right + 30 << "\" y=\"" << ly + 1 << "\">" << xml_escape(name) << "</text>\n";
    ly += 18;
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace distortlab
