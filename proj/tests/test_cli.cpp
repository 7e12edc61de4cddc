#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

// Runs the installed CLI with the given arguments, capturing stdout.
RunResult run_cli(const std::string& args) {
  std::string cmd =
      std::string(GDTRE_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  char buf[4096];
  size_t n = 0;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) {
    result.out.append(buf, n);
  }
  int status = pclose(pipe);
  REQUIRE(WIFEXITED(status));
  result.code = WEXITSTATUS(status);
  return result;
}

std::string fixture(const std::string& name) {
  return std::string(GDTRE_FIXTURE_DIR) + "/" + name;
}

fs::path scratch_dir() {
  fs::path dir = fs::temp_directory_path() /
                 ("gdtre_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json report_of(const RunResult& result) {
  Json j = Json::parse(result.out, nullptr, false);
  REQUIRE(!j.is_discarded());
  return j;
}

Json strip_timing(Json j) {
  j.erase("timing");
  return j;
}

}  // namespace

TEST_CASE("validate maps outcomes to exit codes") {
  RunResult ok = run_cli("validate " + fixture("scalar_lqr.json"));
  CHECK(ok.code == 0);
  Json j = report_of(ok);
  CHECK(j.at("command") == "validate");
  CHECK(j.at("result").at("ok") == true);

  RunResult bad = run_cli("validate " + fixture("invalid_negative_prob.json"));
  CHECK(bad.code == 2);
  Json bj = report_of(bad);
  CHECK(bj.at("result").at("ok") == false);
  CHECK(bj.at("result").at("violations").size() > 0);

  CHECK(run_cli("validate " + fixture("invalid_h4.json")).code == 2);
  CHECK(run_cli("validate " + fixture("malformed.json")).code == 3);
  CHECK(run_cli("validate /no/such/file.json").code == 3);
}

TEST_CASE("solve emits the scalar fixed point") {
  RunResult r = run_cli("solve " + fixture("scalar_lqr.json"));
  REQUIRE(r.code == 0);
  Json j = report_of(r);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(j.at("result").at("status") == "Converged");
  CHECK(j.at("result").at("x")[0][0][0][0].get<double>() ==
        doctest::Approx(golden).epsilon(1e-9));
  CHECK(j.at("options").contains("tol"));
}

TEST_CASE("solve exit codes for budget exhaustion and gating") {
  CHECK(run_cli("solve " + fixture("scalar_lqr.json") + " --max-sweeps 1")
            .code == 4);

  // Pipelines beyond validate are gated on a clean validation pass; the
  // violation report is still printed.
  RunResult gated = run_cli("solve " + fixture("invalid_h4.json"));
  CHECK(gated.code == 2);
  Json j = report_of(gated);
  CHECK(j.at("command") == "validate");
  CHECK(j.at("result").at("ok") == false);
}

TEST_CASE("period-2 fixture emits one value tuple per phase") {
  RunResult r = run_cli("solve " + fixture("period2.json"));
  REQUIRE(r.code == 0);
  Json j = report_of(r);
  CHECK(j.at("result").at("x").size() == 2);
}

TEST_CASE("solution files hand off between subcommands") {
  fs::path dir = scratch_dir();
  fs::path sol = dir / "solution.json";

  RunResult solve = run_cli("solve " + fixture("scalar_game.json") +
                            " --solution " + sol.string());
  REQUIRE(solve.code == 0);
  Json stored = Json::parse(slurp(sol));
  CHECK(stored.at("kind") == "gdtre_solution");
  CHECK(stored.at("status") == "Converged");

  RunResult member = run_cli("membership " + fixture("scalar_game.json") +
                             " --solution " + sol.string());
  CHECK(member.code == 0);
  CHECK(report_of(member).at("result").at("status") == "Member");

  RunResult verify = run_cli(
      "verify " + fixture("scalar_game.json") + " --solution " +
      sol.string() + " --perturbations 4 --trajectories 1000 --seed 7");
  CHECK(verify.code == 0);
  CHECK(report_of(verify).at("result").at("ok") == true);

  RunResult sim = run_cli("simulate " + fixture("scalar_game.json") +
                          " --solution " + sol.string() +
                          " --trajectories 50 --horizon 30");
  CHECK(sim.code == 0);
}

TEST_CASE("corrupted solution files are rejected with exit 5") {
  fs::path dir = scratch_dir();
  fs::path sol = dir / "good.json";
  fs::path bad = dir / "tampered.json";

  REQUIRE(run_cli("solve " + fixture("scalar_game.json") + " --solution " +
                  sol.string())
              .code == 0);
  Json stored = Json::parse(slurp(sol));
  for (auto& phase : stored.at("x"))
    for (auto& mode : phase)
      for (auto& row : mode)
        for (auto& entry : row) entry = entry.get<double>() * 1.1;
  std::ofstream(bad) << stored.dump();

  CHECK(run_cli("verify " + fixture("scalar_game.json") + " --solution " +
                bad.string())
            .code == 5);
  CHECK(run_cli("membership " + fixture("scalar_game.json") + " --solution " +
                bad.string())
            .code == 5);

  // A solution bound to a different problem is an argument error.
  CHECK(run_cli("verify " + fixture("scalar_lqr.json") + " --solution " +
                sol.string())
            .code == 3);
}

TEST_CASE("saddle verification failure exits 6") {
  // Two trajectories give the Monte Carlo cross-check no averaging to lean
  // on; this pinned seed lands outside the acceptance band.
  RunResult r = run_cli("verify " + fixture("scalar_game_noisy.json") +
                        " --perturbations 0 --trajectories 2 --horizon 40"
                        " --seed 2");
  CHECK(r.code == 6);
  Json j = report_of(r);
  CHECK(j.at("result").at("ok") == false);
  CHECK(j.at("result").at("saddle_ok") == true);
  CHECK(j.at("result").at("mc").at("pass") == false);
}

TEST_CASE("repeated runs are byte-identical outside the timing block") {
  std::string solve_args =
      "solve " + fixture("multi.json");
  RunResult a = run_cli(solve_args);
  RunResult b = run_cli(solve_args);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(strip_timing(report_of(a)).dump() ==
        strip_timing(report_of(b)).dump());

  std::string verify_args =
      "verify " + fixture("scalar_game.json") +
      " --perturbations 2 --trajectories 500 --seed 11";
  RunResult va = run_cli(verify_args);
  RunResult vb = run_cli(verify_args);
  REQUIRE(va.code == 0);
  REQUIRE(vb.code == 0);
  CHECK(strip_timing(report_of(va)).dump() ==
        strip_timing(report_of(vb)).dump());
}

TEST_CASE("--out writes the same report that lands on stdout") {
  fs::path dir = scratch_dir();
  fs::path out = dir / "report.json";
  RunResult r = run_cli("solve " + fixture("scalar_lqr.json") + " --out " +
                        out.string());
  REQUIRE(r.code == 0);
  Json from_file = Json::parse(slurp(out));
  CHECK(from_file == report_of(r));
}

TEST_CASE("simulate honors format, x0, and the stored value oracle") {
  RunResult csv = run_cli("simulate " + fixture("scalar_game_noisy.json") +
                          " --trajectories 200 --horizon 40 --format csv");
  REQUIRE(csv.code == 0);
  std::string table =
      report_of(csv).at("result").at("csv").get<std::string>();
  CHECK(table.find("step,") != std::string::npos);

  RunResult scaled = run_cli("simulate " + fixture("scalar_lqr.json") +
                             " --trajectories 10 --horizon 30 --x0 2");
  REQUIRE(scaled.code == 0);
  Json j = report_of(scaled);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(j.at("result").at("x0")[0].get<double>() == 2.0);
  CHECK(j.at("result").at("value").get<double>() ==
        doctest::Approx(4.0 * golden).epsilon(1e-9));
}

TEST_CASE("usage errors exit 3") {
  CHECK(run_cli("frobnicate").code == 3);
  CHECK(run_cli("").code == 3);
  CHECK(run_cli("solve").code == 3);
  CHECK(run_cli("solve " + fixture("scalar_lqr.json") + " --no-such-flag")
            .code == 3);
  CHECK(run_cli("simulate " + fixture("scalar_lqr.json") + " --x0 abc")
            .code == 3);
}
