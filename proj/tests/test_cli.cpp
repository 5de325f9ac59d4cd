#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "crl/grid.hpp"
#include "crl/policy.hpp"
#include "crl/rng.hpp"

using namespace crl;
namespace fs = std::filesystem;

#ifdef CRL_TOOL_PATH

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

/// Runs the tool with the given arguments, capturing stdout and stderr.
RunResult run_tool(const std::string& args) {
  std::string cmd = std::string("\"") + CRL_TOOL_PATH + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult res;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
    res.output.append(buf, n);
  int status = pclose(pipe);
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits cleanly and lists the verbs") {
  RunResult res = run_tool("--help");
  CHECK(res.code == 0);
  for (const char* verb : {"train", "eval", "kl-bench", "enumerate", "make-env"})
    CHECK(contains(res.output, verb));
}

TEST_CASE("bad invocations are usage errors") {
  CHECK(run_tool("").code == 2);              // a verb is required
  CHECK(run_tool("transmogrify").code == 2);  // unknown verb
  CHECK(run_tool("make-env").code == 2);      // missing required --name
  CHECK(run_tool("train --algorithm sarsa --iterations 1").code == 2);
}

TEST_CASE("make-env writes environment bundles") {
  fs::path dir = fresh_dir("crl_cli_envs");
  RunResult res = run_tool("make-env --name square_wave --dir " + q(dir));
  CHECK(res.code == 0);
  CHECK(contains(res.output, "wrote"));
  for (const char* file :
       {"square_wave.grid", "square_wave.directions",
        "square_wave_determined.teacher", "square_wave_less_confident.teacher"})
    CHECK(fs::exists(dir / file));

  RunResult bad = run_tool("make-env --name atlantis --dir " + q(dir));
  CHECK(bad.code == 2);
  CHECK(contains(bad.output, "unknown environment"));
  fs::remove_all(dir);
}

TEST_CASE("enumerate reports the exact distribution of a table policy") {
  fs::path dir = fresh_dir("crl_cli_enum");
  REQUIRE(run_tool("make-env --name kl_bench_2x2 --dir " + q(dir)).code == 0);
  save_table_policy((dir / "uniform.teacher").string(), TablePolicy::uniform(4, 4));

  fs::path csv = dir / "enum.csv";
  RunResult res = run_tool("enumerate --grid " + q(dir / "kl_bench_2x2.grid") +
                           " --teacher-table " + q(dir / "uniform.teacher") + " -o " +
                           q(csv));
  CHECK(res.code == 0);
  CHECK(contains(res.output, "trajectories: 256"));
  CHECK(contains(res.output, "total_mass: 1"));
  CHECK(fs::exists(csv));

  // Needs a policy source.
  CHECK(run_tool("enumerate --grid " + q(dir / "kl_bench_2x2.grid")).code == 2);
  // Missing grid file is an I/O failure.
  CHECK(run_tool("enumerate --grid " + q(dir / "nope.grid") + " --teacher-table " +
                 q(dir / "uniform.teacher"))
            .code == 4);
  fs::remove_all(dir);
}

TEST_CASE("eval rolls out a checkpoint and reports divergence to a teacher") {
  fs::path dir = fresh_dir("crl_cli_eval");
  GridSpec g;
  g.rows = 2;
  g.cols = 2;
  g.start = {0, 0};
  g.goal = {1, 1};
  g.horizon_cap = 4;
  g.validate();
  save_grid_file((dir / "tiny.grid").string(), g);
  RandomSource rng(3);
  save_policy((dir / "pi.bin").string(), init_policy(Arch::tabular, 4, 4, 1.0, rng));
  save_table_policy((dir / "teacher.txt").string(), TablePolicy::uniform(4, 4));

  RunResult res = run_tool("eval --grid " + q(dir / "tiny.grid") + " --policy " +
                           q(dir / "pi.bin") + " --episodes 64 --seed 5");
  CHECK(res.code == 0);
  CHECK(contains(res.output, "mean_reward:"));
  CHECK(contains(res.output, "greedy_reward:"));
  CHECK(contains(res.output, "entropy:"));
  CHECK(!contains(res.output, "step_kl_forward:"));

  RunResult with_teacher =
      run_tool("eval --grid " + q(dir / "tiny.grid") + " --policy " + q(dir / "pi.bin") +
               " --teacher-table " + q(dir / "teacher.txt") + " --episodes 64 --seed 5");
  CHECK(with_teacher.code == 0);
  CHECK(contains(with_teacher.output, "step_kl_forward:"));

  // A checkpoint sized for another grid is a config error.
  RandomSource rng2(4);
  save_policy((dir / "big.bin").string(), init_policy(Arch::tabular, 9, 4, 1.0, rng2));
  CHECK(run_tool("eval --grid " + q(dir / "tiny.grid") + " --policy " +
                 q(dir / "big.bin") + " --episodes 4")
            .code == 2);
  fs::remove_all(dir);
}

TEST_CASE("kl-bench prints paired estimator errors and writes the csv") {
  fs::path dir = fresh_dir("crl_cli_bench");
  fs::path csv = dir / "kb.csv";
  RunResult res = run_tool(
      "kl-bench --arch tabular --seed 2 --samples 1,10 --repeats 3 -o " + q(csv));
  CHECK(res.code == 0);
  CHECK(contains(res.output, "exact_kl_forward:"));
  CHECK(contains(res.output, "trajectory n=1: rmse"));
  CHECK(contains(res.output, "step n=10: rmse"));
  CHECK(fs::exists(csv));

  CHECK(run_tool("kl-bench --repeats 0 -o " + q(csv)).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("train runs a small experiment end to end") {
  fs::path dir = fresh_dir("crl_cli_train");
  RunResult res = run_tool(
      "train --env square_wave_determined --algorithm practical --arch tabular "
      "--init uniform --iterations 12 --batch-size 4 --seeds 4 --name cli-smoke "
      "--output-dir " +
      q(dir / "run"));
  CHECK(res.code == 0);
  CHECK(contains(res.output, "seed 4: greedy_reward"));
  CHECK(contains(res.output, "mean: greedy_reward"));
  for (const char* file :
       {"config.json", "summary.csv", "metrics_seed4.csv", "policy_seed4.bin"})
    CHECK(fs::exists(dir / "run" / file));

  CHECK(run_tool("train --config " + q(dir / "missing.json")).code == 4);
  fs::remove_all(dir);
}

}  // TEST_SUITE

#endif  // CRL_TOOL_PATH
