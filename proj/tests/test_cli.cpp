#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "distortlab/io.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using distortlab::read_file;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr discarded unless redirected in `args`.
Run cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(DISTORTLAB_CLI_PATH) + "' " + args +
                          (args.find("2>") == std::string::npos ? " 2>/dev/null" : "");
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path workdir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "distortlab_cli_tests" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string fixture(const std::string& name) { return "'" + testutil::source_path("fixtures/" + name) + "'"; }

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

const std::string kCatsat = "--model " + fixture("catsat.json") + " --prompt 'The cat sat on'";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("train writes a model and rejects an empty corpus") {
    const fs::path d = workdir("train");
    const auto ok = cli("train --corpus " + fixture("tiny_corpus.txt") + " --order 2 --mode char --out '" +
                        (d / "m.json").string() + "'");
    CHECK(ok.status == 0);
    const auto j = nlohmann::json::parse(read_file(d / "m.json"));
    CHECK(j["order"] == 2);
    CHECK(j["unit"] == "char");

    distortlab::write_file_atomic(d / "empty.txt", "");
    const auto bad = cli("train --corpus '" + (d / "empty.txt").string() + "' --out '" + (d / "x.json").string() + "' 2>&1");
    CHECK(bad.status == 2);
    CHECK(bad.out.find("EmptyCorpus") != std::string::npos);

    const auto s = cli("sample --model '" + (d / "m.json").string() + "' --prompt 'th' --length 5 --n 3");
    CHECK(s.status == 0);
    CHECK(count_lines(s.out) == 3);
  }

  TEST_CASE("sample is deterministic and independent of the job count") {
    const std::string base = "sample " + kCatsat + " --decoder topk:5 --mode local --n 10 --seed 7 --length 3";
    const auto a = cli(base + " --jobs 1");
    const auto b = cli(base + " --jobs 1");
    const auto c = cli(base + " --jobs 8");
    CHECK(a.status == 0);
    CHECK(count_lines(a.out) == 10);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);
  }

  TEST_CASE("global sampling appends stats and budget failures exit 3") {
    const auto g = cli("sample " + kCatsat + " --decoder temp:0.8 --mode global --n 20 --length 2");
    CHECK(g.status == 0);
    std::istringstream in(g.out);
    std::string line, last;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      last = line;
      ++n;
    }
    CHECK(n == 21);
    const auto stats = nlohmann::json::parse(last)["stats"];
    CHECK(stats["accepted"] == 20);
    CHECK(stats["acceptance_rate"].get<double>() > 0.0);

    const auto fail = cli("sample " + kCatsat + " --decoder topk:1@global --n 5 --length 5 --max-attempts 1 2>&1");
    CHECK(fail.status == 3);
    CHECK(fail.out.find("rejection stats") != std::string::npos);
  }

  TEST_CASE("oracle dumps the global top-2 distribution") {
    const auto r = cli("oracle " + kCatsat + " --decoder topk:2 --length 2");
    CHECK(r.status == 0);
    CHECK(count_lines(r.out) == 5);
    CHECK(r.out.find("5 8,the mat,0.6923") != std::string::npos);
    const auto cap = cli("oracle " + kCatsat + " --decoder pure --length 3 --max-sequences 100");
    CHECK(cap.status == 3);
    const auto one = cli("oracle " + kCatsat + " --decoder pure --length 1");
    CHECK(count_lines(one.out) == 15);
    const auto bad = cli("oracle " + kCatsat + " --decoder topk:0");
    CHECK(bad.status == 2);
  }

  TEST_CASE("verify subcommands") {
    const auto eq = cli("verify equilibrium " + kCatsat + " --decoder topk:2");
    CHECK(eq.status == 0);
    const auto ej = nlohmann::json::parse(eq.out);
    CHECK(ej["max_violation"].get<double>() < 1e-9);
    CHECK(ej["passed"] == true);

    const auto zt = cli("verify zerotemp --model " + fixture("ab.json") + " --prompt S --length 2");
    const auto zj = nlohmann::json::parse(zt.out);
    CHECK(zj["scan"]["greedy"] == "A C");
    CHECK(zj["scan"]["global_argmax"] == "B C");
    CHECK(zj["scan"]["limits_differ"] == true);
    CHECK(zt.status == 0);

    const auto rj = cli("verify rejection " + kCatsat + " --decoder topk:2 --n 20000 --jobs 4");
    CHECK(rj.status == 0);
    CHECK(nlohmann::json::parse(rj.out)["tv"].get<double>() <= 0.02);

    const auto pr = cli("verify pressure --model " + fixture("chain4.json") + " --tau 1");
    CHECK(pr.status == 0);
    CHECK(std::abs(nlohmann::json::parse(pr.out)["pressure"].get<double>()) <= 1e-10);
  }

  TEST_CASE("sweep writes CSV and SVG") {
    const fs::path d = workdir("sweep");
    const auto r = cli("sweep " + kCatsat + " --k-grid 1,2,14 --out-dir '" + d.string() + "'");
    CHECK(r.status == 0);
    const std::string csv = read_file(d / "qd_sweep.csv");
    CHECK(count_lines(csv) == 4);
    CHECK(read_file(d / "qd_sweep.svg").find("<svg") == 0);

    const auto s = cli("sweep " + kCatsat + " --k-grid 2 --normalizations local,global --sweep-mode sampled --n 200 --out-dir '" +
                       d.string() + "'");
    CHECK(s.status == 0);
    const std::string scsv = read_file(d / "qd_sweep.csv");
    CHECK(scsv.find("topk,2,global,") != std::string::npos);
    CHECK(scsv.find(",false,") != std::string::npos);
    CHECK(scsv.find(",true,") == std::string::npos);
  }

  TEST_CASE("lnd tables") {
    const fs::path d = workdir("lnd");
    const auto r = cli("lnd " + kCatsat + " --decoder pure --decoder topk:2 --pairs 400 --length 2 --records --out-dir '" +
                       d.string() + "'");
    CHECK(r.status == 0);
    CHECK(read_file(d / "lnd_pure_local.csv") ==
          "decoder,level,value\npure@local,0.1,0\npure@local,0.25,0\npure@local,0.5,0\npure@local,0.75,0\npure@local,0.9,0\n");
    const std::string top = read_file(d / "lnd_topk_2_local.csv");
    CHECK(top.find("topk:2@local,0.9,1.386294361119") != std::string::npos);
    CHECK(count_lines(read_file(d / "lnd_topk_2_local.jsonl")) == 400);
  }

  TEST_CASE("calibrate reports matched parameters") {
    const auto r = cli("calibrate " + kCatsat + " --k 26 --contexts 20");
    CHECK(r.status == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["matched_pi"] == 1.0);
    CHECK(j["matched_tau"] == 1.0);
    const auto bad = cli("calibrate " + kCatsat + " --k 2 --contexts 1 --max-context 1 --pi-grid 0.2,1 --tau-grid 0.2,1");
    CHECK(bad.status == 3);
  }

  TEST_CASE("flags beat environment, environment beats config") {
    const fs::path d = workdir("config");
    distortlab::write_file_atomic(d / "cfg.json",
                                  R"({"sample": {"n": 4, "length": 2}, "oracle": {"length": 9}, "seed": 3})");
    const std::string cfg = " --config '" + (d / "cfg.json").string() + "'";
    const auto from_cfg = cli("sample " + kCatsat + cfg);
    CHECK(from_cfg.status == 0);
    CHECK(count_lines(from_cfg.out) == 4);
    CHECK(nlohmann::json::parse(from_cfg.out.substr(0, from_cfg.out.find('\n')))["completion"]["ids"].size() == 2);

    const auto env = cli("sample " + kCatsat + cfg, "DISTORTLAB_N=6");
    CHECK(count_lines(env.out) == 6);
    const auto flag = cli("sample " + kCatsat + cfg + " --n 2", "DISTORTLAB_N=6");
    CHECK(count_lines(flag.out) == 2);

    const auto direct = cli("sample " + kCatsat + " --n 4 --length 2 --seed 3");
    CHECK(direct.out == from_cfg.out);

    distortlab::write_file_atomic(d / "bad.json", R"({"no_such_option": 1})");
    CHECK(cli("sample " + kCatsat + " --config '" + (d / "bad.json").string() + "'").status == 2);
  }

  TEST_CASE("oversized k warns and behaves as k = |V|") {
    const auto r = cli("oracle " + kCatsat + " --decoder topk:99@local --length 1 2>&1");
    CHECK(r.status == 0);
    CHECK(r.out.find("warning") != std::string::npos);
    const auto pure = cli("oracle " + kCatsat + " --decoder pure@local --length 1");
    CHECK(r.out.substr(r.out.find("completion_ids")) == pure.out);
  }
}
