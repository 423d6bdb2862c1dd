// distortlab: command-line front end for the decoding, distortion and
// verification library. Run `distortlab --help` for the subcommands.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "distortlab/calibrate.hpp"
#include "distortlab/decoder.hpp"
#include "distortlab/equilibrium.hpp"
#include "distortlab/errors.hpp"
#include "distortlab/global.hpp"
#include "distortlab/io.hpp"
#include "distortlab/lnd.hpp"
#include "distortlab/model.hpp"
#include "distortlab/pressure.hpp"
#include "distortlab/qd.hpp"
#include "distortlab/rng.hpp"
#include "distortlab/sampling.hpp"
#include "json_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace distortlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitInput = 2;
constexpr int kExitBudget = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SupportTooLarge:
    case ErrorCode::RejectionBudgetExceeded:
    case ErrorCode::NonConvergence:
    case ErrorCode::NoMatch:
    case ErrorCode::Remote:
      return kExitBudget;
    default:
      return kExitInput;
  }
}

std::string env_name(const std::string& flag) {
  std::string out = "DISTORTLAB_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <class T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& var, const std::string& help) {
  return app->add_option("--" + name, var, help)->envname(env_name(name))->capture_default_str();
}

void attach_config(CLI::App& root) {
  root.set_config("--config", "", "JSON file of option values; flags and environment take precedence");
  root.get_config_ptr()->envname(env_name("config"));
  root.config_formatter(std::make_shared<cli::JsonConfig>(&root));
  root.allow_config_extras(CLI::config_extras_mode::error);
}

unsigned resolve_jobs(unsigned jobs) {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
    std::cout.flush();
  } else {
    write_file_atomic(out, content);
  }
}

std::string file_label(const DecoderSpec& spec) {
  std::string s = spec.label();
  for (char& c : s)
    if (c == ':' || c == '@' || c == '.') c = '_';
  return s;
}

struct ModelOptions {
  std::string model;
  std::string prompt = "The ";
  std::size_t length = 2;
  std::uint64_t seed = kDefaultSeed;
  unsigned jobs = 0;
  std::size_t max_sequences = 10'000'000;

  void add(CLI::App* app, std::size_t default_length) {
    length = default_length;
    flag(app, "model", model, "model JSON file (table, ngram or remote)")->required();
    flag(app, "prompt", prompt, "prompt text, tokenized by the model's unit mode");
    flag(app, "length", length, "completion length T")->check(CLI::PositiveNumber);
    flag(app, "seed", seed, "master seed");
    flag(app, "jobs", jobs, "worker threads (0: one per core)");
    flag(app, "max-sequences", max_sequences, "enumeration cap");
  }

  TokenModel load() const { return load_model(model); }
  EnumerationLimits limits() const { return {max_sequences, 1'000'000, resolve_jobs(jobs)}; }
};

// Top-k with k above the vocabulary size behaves as k = |V|.
DecoderSpec checked_spec(const DecoderSpec& spec, const TokenModel& model) {
  if (spec.kind() == DecoderKind::TopK && spec.k() > model.vocab_size())
    std::cerr << "warning: " << spec.label() << " exceeds the vocabulary size " << model.vocab_size()
              << "; using k = " << model.vocab_size() << "\n";
  return spec;
}

std::optional<Normalization> parse_mode(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text == "local") return Normalization::Local;
  if (text == "global") return Normalization::Global;
  throw Error(ErrorCode::InvalidArgument, "mode must be local or global, got '" + text + "'");
}

// ---------------------------------------------------------------- train

struct TrainCmd {
  std::string corpus, out, mode = "char";
  std::size_t order = 1;
  double smoothing = 1.0;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("train", "train an additively smoothed n-gram model from a text corpus");
    flag(app, "corpus", corpus, "UTF-8 text file")->required();
    flag(app, "order", order, "context length L");
    flag(app, "smoothing", smoothing, "additive smoothing alpha > 0");
    flag(app, "mode", mode, "unit mode")->check(CLI::IsMember({"char", "word"}));
    flag(app, "out", out, "model file to write")->required();
    app->callback([this] { run(); });
  }

  void run() const {
    const TokenModel model = train_ngram(read_file(corpus), order, smoothing, parse_unit_mode(mode));
    save_model(model, out);
    std::cerr << "wrote " << out << ": order " << model.order() << ", " << model.vocab_size() << " units, "
              << model.rows().size() << " contexts\n";
  }
};

// ---------------------------------------------------------------- sample

struct SampleCmd {
  ModelOptions m;
  std::string decoder = "pure", mode, out;
  std::size_t n = 10;
  std::uint64_t max_attempts = kDefaultMaxAttempts;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("sample", "draw completions as JSONL generation records");
    m.add(app, 30);
    flag(app, "decoder", decoder, "decoder spec kind[:param][@local|@global]");
    flag(app, "mode", mode, "override the decoder's normalization (local or global)");
    flag(app, "n", n, "number of samples");
    flag(app, "max-attempts", max_attempts, "rejection budget per global sample");
    flag(app, "out", out, "output JSONL file (stdout if omitted)");
    app->callback([this] { run(); });
  }

  void run() const {
    const TokenModel model = m.load();
    DecoderSpec spec = checked_spec(DecoderSpec::parse(decoder), model);
    if (auto md = parse_mode(mode)) spec = spec.with_mode(*md);
    const TokenSeq prompt = model.tokenize(m.prompt);
    const unsigned jobs = resolve_jobs(m.jobs);

    std::string text;
    if (spec.is_global()) {
      GlobalBatch batch;
      try {
        batch = sample_global(model, prompt, m.length, spec, n, m.seed, max_attempts, jobs);
      } catch (const RejectionBudgetExceeded& e) {
        std::cerr << "rejection stats: " << to_json(e.stats()).dump() << "\n";
        throw;
      }
      text = to_jsonl(batch.records, model);
      text += json{{"stats", to_json(batch.stats)}}.dump() + "\n";
    } else {
      text = to_jsonl(sample_many(model, prompt, m.length, spec, n, m.seed, jobs), model);
    }
    emit(out, text);
  }
};

// ---------------------------------------------------------------- lnd

struct LndCmd {
  ModelOptions m;
  std::vector<std::string> decoders{"topk:5"};
  std::size_t pairs = 1000;
  std::vector<double> levels = kDefaultQuantileLevels;
  std::string out_dir = ".";
  bool records = false;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("lnd", "quantiles of |log LND ratio| over sampled completion pairs");
    m.add(app, 100);
    flag(app, "decoder", decoders, "decoder spec; repeat for one CSV per decoder");
    flag(app, "pairs", pairs, "number of independent pairs")->check(CLI::PositiveNumber);
    flag(app, "levels", levels, "quantile levels in [0, 1]")->delimiter(',');
    flag(app, "out-dir", out_dir, "directory for lnd_<decoder>.csv files");
    app->add_flag("--records", records, "also write the raw pair records as JSONL")->envname(env_name("records"));
    app->callback([this] { run(); });
  }

  void run() const {
    const TokenModel model = m.load();
    const TokenSeq prompt = model.tokenize(m.prompt);
    fs::create_directories(out_dir);
    for (const auto& d : decoders) {
      const DecoderSpec spec = checked_spec(DecoderSpec::parse(d), model);
      const QuantileTable table =
          lnd_quantile_table(model, spec, prompt, pairs, m.length, m.seed, levels, resolve_jobs(m.jobs));
      const fs::path csv = fs::path(out_dir) / ("lnd_" + file_label(table.decoder) + ".csv");
      write_file_atomic(csv, to_csv(table));
      if (records) {
        std::string lines;
        for (const auto& r : table.records) lines += to_json(r, model).dump() + "\n";
        write_file_atomic(fs::path(out_dir) / ("lnd_" + file_label(table.decoder) + ".jsonl"), lines);
      }
      std::cout << table.decoder.label();
      for (std::size_t i = 0; i < table.levels.size(); ++i)
        std::cout << "  q" << format_double(table.levels[i]) << "=" << format_double(table.values[i]);
      std::cout << "\n";
    }
  }
};

// ---------------------------------------------------------------- sweep

struct SweepCmd {
  ModelOptions m;
  std::vector<std::string> decoders;
  std::vector<std::size_t> k_grid;
  std::vector<double> pi_grid, tau_grid;
  std::vector<std::string> normalizations{"local"};
  std::string sweep_mode = "exact", out_dir = ".";
  std::size_t n = 1000;
  std::uint64_t max_attempts = kDefaultMaxAttempts;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("sweep", "entropy and NLL per decoder, as CSV and SVG");
    m.add(app, 2);
    flag(app, "decoder", decoders, "decoder spec; without @mode it is expanded over --normalizations");
    flag(app, "k-grid", k_grid, "top-k values")->delimiter(',');
    flag(app, "pi-grid", pi_grid, "nucleus values")->delimiter(',');
    flag(app, "tau-grid", tau_grid, "temperature values")->delimiter(',');
    flag(app, "normalizations", normalizations, "local, global or both")->delimiter(',');
    flag(app, "sweep-mode", sweep_mode, "exact enumeration or sampled estimates")
        ->check(CLI::IsMember({"exact", "sampled"}));
    flag(app, "n", n, "samples per point in sampled mode");
    flag(app, "max-attempts", max_attempts, "rejection budget per global sample");
    flag(app, "out-dir", out_dir, "directory for qd_sweep.csv and qd_sweep.svg");
    app->callback([this] { run(); });
  }

  std::vector<DecoderSpec> grid() const {
    std::vector<Normalization> modes;
    for (const auto& s : normalizations) modes.push_back(*parse_mode(s));
    std::vector<DecoderSpec> out;
    auto expand = [&](const DecoderSpec& base) {
      for (Normalization md : modes) out.push_back(base.with_mode(md));
    };
    for (const auto& d : decoders) {
      if (d.find('@') != std::string::npos) out.push_back(DecoderSpec::parse(d));
      else expand(DecoderSpec::parse(d));
    }
    for (std::size_t k : k_grid) expand(DecoderSpec::top_k(k));
    for (double pi : pi_grid) expand(DecoderSpec::nucleus(pi));
    for (double tau : tau_grid) expand(DecoderSpec::temperature(tau));
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty decoder grid: pass --decoder or a --*-grid");
    return out;
  }

  void run() const {
    const TokenModel model = m.load();
    const TokenSeq prompt = model.tokenize(m.prompt);
    SweepOptions opt;
    opt.mode = sweep_mode == "sampled" ? SweepMode::Sampled : SweepMode::Exact;
    opt.n_samples = n;
    opt.seed = m.seed;
    opt.max_attempts = max_attempts;
    opt.limits = m.limits();
    opt.jobs = resolve_jobs(m.jobs);
    const auto specs = grid();
    for (const auto& spec : specs) checked_spec(spec, model);
    const auto points = qd_sweep(model, prompt, m.length, specs, opt);
    fs::create_directories(out_dir);
    write_file_atomic(fs::path(out_dir) / "qd_sweep.csv", to_csv(points));
    write_file_atomic(fs::path(out_dir) / "qd_sweep.svg", to_svg(points));
    for (const auto& p : points) {
      if (p.error) std::cerr << p.decoder.label() << ": " << *p.error << "\n";
    }
    std::cout << "wrote " << points.size() << " points to " << (fs::path(out_dir) / "qd_sweep.csv").string() << "\n";
  }
};

// ---------------------------------------------------------------- verify

struct VerifyCmd {
  ModelOptions m;
  std::string which, decoder = "topk:2", out;
  std::size_t perturbations = 100;
  std::vector<double> taus{1.0, 0.5, 0.2, 0.1, 0.05};
  std::size_t n = 100'000;
  double tv_tol = 0.02;
  double tau = 1.0;
  std::uint64_t max_attempts = kDefaultMaxAttempts;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("verify", "check a property exactly; exit 0 iff every assertion holds");
    app->add_option("which", which, "equilibrium | zerotemp | rejection | pressure")
        ->required()
        ->check(CLI::IsMember({"equilibrium", "zerotemp", "rejection", "pressure"}));
    m.add(app, 2);
    flag(app, "decoder", decoder, "decoder spec (equilibrium, rejection)");
    flag(app, "perturbations", perturbations, "random measures per check (equilibrium)");
    flag(app, "taus", taus, "temperatures to scan (zerotemp)")->delimiter(',');
    flag(app, "n", n, "accepted samples (rejection)");
    flag(app, "tv-tol", tv_tol, "total-variation tolerance (rejection)");
    flag(app, "tau", tau, "temperature (pressure)");
    flag(app, "max-attempts", max_attempts, "rejection budget per sample (rejection)");
    flag(app, "out", out, "report JSON file (stdout if omitted)");
    app->callback([this] { status = run(); });
  }

  int status = kExitOk;

  int run() const {
    const TokenModel model = m.load();
    json report;
    bool passed = false;
    if (which == "equilibrium") {
      const DecoderSpec spec = checked_spec(DecoderSpec::parse(decoder), model);
      const VariationalReport r = verify_variational_max(model, spec, model.tokenize(m.prompt), m.length, perturbations,
                                                         m.seed, m.limits());
      passed = r.passed();
      report = {{"decoder", spec.with_mode(Normalization::Local).label()},
                {"support_size", r.local.support_size},
                {"constant", r.global.constant},
                {"max_violation", std::max(r.local.max_violation, r.global.max_violation)},
                {"converged_tau_local", nullptr},
                {"converged_tau_global", nullptr},
                {"local", to_json(r.local)},
                {"global", to_json(r.global)}};
    } else if (which == "zerotemp") {
      const ZeroTempReport r = zero_temperature_scan(model, model.tokenize(m.prompt), m.length, taus, m.limits());
      passed = !r.rows.empty() && r.rows.front().local_converged && r.rows.front().global_converged;
      json scan = to_json(r, model);
      report = {{"decoder", "temp"},
                {"support_size", r.rows.front().support_size},
                {"constant", r.rows.front().global_log_normalizer},
                {"max_violation", nullptr},
                {"converged_tau_local", scan["converged_tau_local"]},
                {"converged_tau_global", scan["converged_tau_global"]},
                {"scan", scan}};
    } else if (which == "rejection") {
      const DecoderSpec spec = checked_spec(DecoderSpec::parse(decoder), model).with_mode(Normalization::Global);
      const TokenSeq prompt = model.tokenize(m.prompt);
      const SequenceDistribution exact = enumerate_global(model, prompt, m.length, spec, m.limits());
      const GlobalBatch batch =
          sample_global(model, prompt, m.length, spec, n, m.seed, max_attempts, resolve_jobs(m.jobs));
      std::map<TokenSeq, double> freq;
      for (const auto& rec : batch.records) freq[rec.completion] += 1.0 / static_cast<double>(n);
      double tv = 0.0;
      for (const auto& e : exact.entries) {
        auto it = freq.find(e.completion);
        tv += std::abs((it == freq.end() ? 0.0 : it->second) - e.prob);
        if (it != freq.end()) freq.erase(it);
      }
      for (const auto& [seq, f] : freq) tv += f;
      tv *= 0.5;
      passed = tv <= tv_tol;
      report = {{"decoder", spec.label()},
                {"support_size", exact.size()},
                {"constant", exact.log_normalizer},
                {"max_violation", nullptr},
                {"converged_tau_local", nullptr},
                {"converged_tau_global", nullptr},
                {"n", n},
                {"tv", tv},
                {"tv_tolerance", tv_tol},
                {"stats", to_json(batch.stats)}};
    } else {
      const PressureResult r = transfer_pressure(model, tau);
      passed = tau != 1.0 || std::abs(r.pressure) <= 1e-10;
      report = to_json(r);
      report["tau"] = tau;
    }
    report["passed"] = passed;
    emit(out, report.dump(2) + "\n");
    return passed ? kExitOk : kExitAssertion;
  }
};

// ---------------------------------------------------------------- oracle

struct OracleCmd {
  ModelOptions m;
  std::string decoder = "pure", out;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("oracle", "exact sequence distribution as CSV");
    m.add(app, 2);
    flag(app, "decoder", decoder, "decoder spec; normalization defaults to @global here");
    flag(app, "out", out, "CSV file (stdout if omitted)");
    app->callback([this] { run(); });
  }

  void run() const {
    const TokenModel model = m.load();
    DecoderSpec spec = checked_spec(DecoderSpec::parse(decoder), model);
    if (decoder.find('@') == std::string::npos) spec = spec.with_mode(Normalization::Global);
    const SequenceDistribution dist = enumerate_distribution(model, model.tokenize(m.prompt), m.length, spec, m.limits());
    emit(out, to_csv(dist, model));
  }
};

// ---------------------------------------------------------------- calibrate

struct CalibrateCmd {
  ModelOptions m;
  std::size_t k = 5, contexts = 200, max_context = 30;
  double tol = kDefaultCalibrationTolerance;
  std::vector<double> pi_grid = default_grid(), tau_grid = default_grid();
  std::string out;

  void setup(CLI::App& root) {
    auto* app = root.add_subcommand("calibrate", "match nucleus and temperature parameters to top-k by mean Z");
    m.add(app, 1);
    flag(app, "k", k, "top-k value to match")->check(CLI::PositiveNumber);
    flag(app, "contexts", contexts, "number of sampled contexts")->check(CLI::PositiveNumber);
    flag(app, "max-context", max_context, "contexts extend the prompt by 0 .. max-context-1 sampled tokens");
    flag(app, "tol", tol, "largest acceptable |avg Z - avg Z_k|");
    flag(app, "pi-grid", pi_grid, "nucleus candidates")->delimiter(',');
    flag(app, "tau-grid", tau_grid, "temperature candidates")->delimiter(',');
    flag(app, "out", out, "result JSON file (stdout if omitted)");
    app->callback([this] { run(); });
  }

  void run() const {
    const TokenModel model = m.load();
    const unsigned jobs = resolve_jobs(m.jobs);
    const auto ctx = sample_contexts(model, model.tokenize(m.prompt), contexts, max_context, m.seed, jobs);
    const CalibrationResult r = match_parameters(model, k, ctx, pi_grid, tau_grid, tol, jobs);
    emit(out, to_json(r).dump(2) + "\n");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distortlab: local and global decoding, normalization distortion and quality-diversity tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "distortlab 0.1.0");
  // subcommands hand unknown flags such as --config to the root
  app.fallthrough();
  attach_config(app);

  TrainCmd train;
  SampleCmd sample;
  LndCmd lnd;
  SweepCmd sweep;
  VerifyCmd verify;
  OracleCmd oracle;
  CalibrateCmd calibrate;
  train.setup(app);
  sample.setup(app);
  lnd.setup(app);
  sweep.setup(app);
  verify.setup(app);
  oracle.setup(app);
  calibrate.setup(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  } catch (const RejectionBudgetExceeded& e) {
    std::cerr << "distortlab: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return kExitBudget;
  } catch (const Error& e) {
    std::cerr << "distortlab: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "distortlab: io: " << e.what() << "\n";
    return kExitInput;
  }
  return verify.status;
}
