#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// End-to-end coverage of every CLI subcommand against the bundled fixtures.
// Each case spawns the real binary and inspects exit codes, stdout and files.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef ICR_CLI_PATH
#define ICR_CLI_PATH "icr"
#endif

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(ICR_CLI_PATH) + " " + args + " 2>/dev/null";
  std::array<char, 4096> buf{};
  CmdResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) res.out.append(buf.data(), n);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::vector<json> json_lines(const std::string& out) {
  std::vector<json> lines;
  std::stringstream ss(out);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto j = json::parse(line, nullptr, false);
    if (!j.is_discarded()) lines.push_back(std::move(j));
  }
  return lines;
}

std::string fx(const std::string& name) { return testsup::fixture_path(name); }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("icr_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("validate: summary on stdout, exit 0") {
  auto r = run_cli("validate " + fx("example1_full.json"));
  CHECK(r.exit_code == 0);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["blocks"] == 3);
  CHECK(lines[0]["class"] == "unsaturated");
}

TEST_CASE("validate: missing file exits 2") {
  auto r = run_cli("run missing.json");
  CHECK(r.exit_code == 2);
}

TEST_CASE("unknown flag exits 1") {
  auto r = run_cli("run --definitely-not-a-flag " + fx("example1_pair.json"));
  CHECK(r.exit_code == 1);
}

TEST_CASE("cycles: the five-block model prints exactly two JSON lines") {
  auto r = run_cli("cycles " + fx("example2.json"));
  CHECK(r.exit_code == 0);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 2);
  for (const auto& l : lines) {
    CHECK(l["order"].size() == 5);
    CHECK(l["edges"].size() == 5);
    for (const auto& e : l["edges"]) {
      CHECK(e["rule_a"] == true);
      CHECK(e["rule_b"] == true);
    }
  }
}

TEST_CASE("run: compatible pair writes stationaries and a trace") {
  TempDir tmp;
  auto r = run_cli("run " + fx("example1_pair.json") + " --all-cycles --out " +
                   tmp.path.string());
  CHECK(r.exit_code == 0);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["converged"] == true);
  CHECK(lines[0]["verdict"] == "compatible");

  // trace CSV with schema header, one stationary file per rotation
  std::ifstream trace(tmp.path / "cycle0_trace.csv");
  REQUIRE(trace.good());
  std::string header;
  std::getline(trace, header);
  CHECK(header == "# icr-trace v1");
  int stationaries = 0;
  for (const auto& ent : fs::directory_iterator(tmp.path))
    if (ent.path().filename().string().find("_pi_") != std::string::npos) ++stationaries;
  CHECK(stationaries == 2);

  // stationary files parse back as distributions
  for (const auto& ent : fs::directory_iterator(tmp.path)) {
    if (ent.path().filename().string().find("_pi_") == std::string::npos) continue;
    auto d = icr::load_distribution(ent.path().string());
    CHECK(d.scope().size() == 2);
    CHECK(d.given().size() == 1);
  }
}

TEST_CASE("run: incompatible pair under --expect-compatible exits 4") {
  auto r = run_cli("run " + fx("example1_incompatible.json") + " --expect-compatible");
  CHECK(r.exit_code == 4);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["verdict"] == "incompatible");
}

TEST_CASE("run: max-cycles 1 exits 3 (non-convergence)") {
  auto r = run_cli("run " + fx("example5_sticky.json") + " --max-cycles 1");
  CHECK(r.exit_code == 3);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["converged"] == false);
  CHECK(lines[0]["verdict"] == "undetermined");
}

TEST_CASE("run: file init reproduces the disjoint-support verdicts") {
  auto r = run_cli("run " + fx("example6_a2.json") + " --init " +
                   fx("example6_init_w.json") + " --cycle 'f1|234,f2|134,f3|124,g4|123'");
  CHECK(r.exit_code == 0);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["verdict"] == "incompatible");
  const double pi = lines[0]["pi_final"].get<double>();
  CHECK(pi == doctest::Approx(0.0143).epsilon(0.05));
}

TEST_CASE("run: explicit cycle order and trace file") {
  TempDir tmp;
  const auto trace = (tmp.path / "t.csv").string();
  auto r = run_cli("run " + fx("example5_sticky.json") +
                   " --cycle 'f1|2,f2|1' --trace " + trace);
  CHECK(r.exit_code == 0);
  std::ifstream in(trace);
  REQUIRE(in.good());
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  CHECK(l1 == "# icr-trace v1");
  CHECK(l2 == "t,M,Pi");
  CHECK(l3.substr(0, 2) == "0,");
}

TEST_CASE("plan: executes the bundled two-phase plan") {
  TempDir tmp;
  auto r = run_cli("plan " + fx("example1_full.json") + " " + fx("example1_plan.json") +
                   " --out " + tmp.path.string());
  CHECK(r.exit_code == 0);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0]["sufficient"] == true);
  bool saw_final = false;
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (lines[i]["id"] == "pi123") saw_final = lines[i]["full_joint"] == true;
  CHECK(saw_final);
  CHECK(fs::exists(tmp.path / "pi123.json"));
  // the written joint matches the bundled one
  auto got = icr::load_distribution((tmp.path / "pi123.json").string());
  auto want = testsup::load_fixture_dist("example1_joint.json");
  CHECK(icr::total_variation(got, want) < 1e-8);
}

TEST_CASE("ensemble: incompatible pair yields nontrivial weights") {
  TempDir tmp;
  const auto out = (tmp.path / "res.json").string();
  auto r = run_cli("ensemble " + fx("example1_incompatible.json") + " --measure kl --out " +
                   out);
  CHECK(r.exit_code == 0);
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  REQUIRE(lines[0]["weights"].size() == 2);
  const double w0 = lines[0]["weights"][0].get<double>();
  CHECK(w0 > 0.0);
  CHECK(w0 < 1.0);
  std::ifstream in(out);
  REQUIRE(in.good());
  json full;
  in >> full;
  CHECK(full.contains("mixture"));
}

TEST_CASE("bench: emits the schema-versioned CSV and timing summary") {
  TempDir tmp;
  const auto out = (tmp.path / "bench.csv").string();
  auto r = run_cli("bench " + fx("example5_sticky.json") +
                   " --gs-n 20000 --gs-burnin 2000 --gs-batches 2 --out " + out);
  CHECK(r.exit_code == 0);
  std::ifstream in(out);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# icr-bench v1");
  auto lines = json_lines(r.out);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["gs_seconds"].get<double>() > 0.0);
}

TEST_CASE("outputs are deterministic given model, flags and seed") {
  auto a = run_cli("run " + fx("example2.json") + " --all-cycles --init seeded --seed 99");
  auto b = run_cli("run " + fx("example2.json") + " --all-cycles --init seeded --seed 99");
  CHECK(a.exit_code == 0);
  CHECK(a.out == b.out);
  auto c = run_cli("run " + fx("example2.json") + " --all-cycles --init seeded --seed 100");
  CHECK(c.out != a.out);  // different seed, different init, same stationaries
}

TEST_CASE("threads flag keeps multi-cycle output order and content") {
  auto seq = run_cli("run " + fx("example2.json") + " --all-cycles");
  auto par = run_cli("--threads 4 run " + fx("example2.json") + " --all-cycles");
  CHECK(seq.exit_code == 0);
  CHECK(par.exit_code == 0);
  CHECK(seq.out == par.out);
}
