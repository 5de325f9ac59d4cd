#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "crl/envs.hpp"
#include "crl/experiment.hpp"
#include "crl/grid.hpp"

using namespace crl;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

/// Scoped override of CRL_OUTPUT_ROOT, restored on destruction so the other
/// suites keep their shared cache location.
class OutputRootGuard {
 public:
  explicit OutputRootGuard(const std::string& value) {
    const char* old = std::getenv("CRL_OUTPUT_ROOT");
    had_ = old != nullptr;
    if (had_) old_ = old;
    setenv("CRL_OUTPUT_ROOT", value.c_str(), 1);
  }
  ~OutputRootGuard() {
    if (had_)
      setenv("CRL_OUTPUT_ROOT", old_.c_str(), 1);
    else
      unsetenv("CRL_OUTPUT_ROOT");
  }

 private:
  bool had_ = false;
  std::string old_;
};

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Small, fast square-wave run: uniform init (no pretraining pipeline),
/// tabular policy, a few dozen iterations.
ExperimentConfig tiny_config(const fs::path& out_dir) {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.env = "square_wave_determined";
  cfg.algorithm = "practical";
  cfg.arch = Arch::tabular;
  cfg.init = InitKind::uniform;
  cfg.seeds = {1, 2};
  cfg.output_dir = out_dir.string();
  cfg.practical.iterations = 30;
  cfg.practical.batch_size = 4;
  return cfg;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("name maps round-trip and reject junk") {
  for (InitKind k : {InitKind::uniform, InitKind::pretrained, InitKind::teacher})
    CHECK(init_from_name(init_name(k)) == k);
  CHECK_THROWS_AS(init_from_name("warmstart"), ConfigError);
  for (Arch a : {Arch::tabular, Arch::linear, Arch::mlp})
    CHECK(arch_from_name(arch_name(a)) == a);
  CHECK_THROWS_AS(arch_from_name("transformer"), ConfigError);
}

TEST_CASE("config parsing enforces known keys and field types") {
  ExperimentConfig cfg = parse_experiment_config(R"({
    "name": "demo",
    "env": "wall_leap",
    "algorithm": "pdpg",
    "arch": "tabular",
    "init": "teacher",
    "seeds": [7, 8],
    "train_teacher": false,
    "teacher_iterations": 500,
    "practical": {"delta": 0.3, "clip": {"enabled": true, "rho": 75.0}},
    "pdpg": {"delta": 0.1, "schedule": {"a1": 0.01, "a2": 0.02, "p1": 0.6, "p2": 0.9}}
  })");
  CHECK(cfg.name == "demo");
  CHECK(cfg.env == "wall_leap");
  CHECK(cfg.algorithm == "pdpg");
  CHECK(cfg.arch == Arch::tabular);
  CHECK(cfg.init == InitKind::teacher);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(cfg.train_teacher == false);
  CHECK(cfg.teacher_iterations == 500);
  CHECK(cfg.practical.delta == 0.3);
  CHECK(cfg.practical.clip.enabled);
  CHECK(cfg.practical.clip.rho == 75.0);
  CHECK(cfg.pdpg.delta == 0.1);
  CHECK(cfg.pdpg.schedule.a1 == 0.01);
  // Untouched fields keep their defaults.
  CHECK(cfg.temperature == 5.0);
  CHECK(cfg.practical.iterations == 20000);

  CHECK_THROWS_AS(parse_experiment_config("{\"bogus\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{\"practical\": {\"bogus\": 1}}"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{\"seeds\": \"one\"}"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{\"arch\": \"resnet\"}"), ConfigError);
}

TEST_CASE("config validation pins the experiment surface") {
  ExperimentConfig cfg;
  cfg.validate();  // defaults are sound
  ExperimentConfig bad = cfg;
  bad.env = "mystery";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.env = "grid";
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // needs grid_path
  bad = cfg;
  bad.algorithm = "sarsa";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.teacher_iterations = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.algorithm = "pdpg";
  bad.pdpg.delta = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config files round-trip through save and load") {
  ExperimentConfig cfg;
  cfg.name = "roundtrip";
  cfg.env = "wall_leap";
  cfg.arch = Arch::linear;
  cfg.init = InitKind::teacher;
  cfg.teacher_ckpt = "teacher.bin";
  cfg.train_teacher = false;
  cfg.teacher_iterations = 4321;
  cfg.seeds = {11, 12, 13};
  cfg.practical.delta = 0.35;
  cfg.practical.clip.enabled = true;
  cfg.pdpg.schedule.a1 = 0.015;

  fs::path path = fs::temp_directory_path() / "crl_test_config.json";
  save_experiment_config(path.string(), cfg);
  ExperimentConfig back = load_experiment_config(path.string());
  CHECK(back.name == cfg.name);
  CHECK(back.env == cfg.env);
  CHECK(back.arch == cfg.arch);
  CHECK(back.init == cfg.init);
  CHECK(back.teacher_ckpt == cfg.teacher_ckpt);
  CHECK(back.train_teacher == cfg.train_teacher);
  CHECK(back.teacher_iterations == cfg.teacher_iterations);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.practical.delta == cfg.practical.delta);
  CHECK(back.practical.clip.enabled == cfg.practical.clip.enabled);
  CHECK(back.pdpg.schedule.a1 == cfg.pdpg.schedule.a1);
  fs::remove(path);

  CHECK_THROWS_AS(load_experiment_config("/no/such/config.json"), IoError);
}

TEST_CASE("output directories resolve against the environment root") {
  ExperimentConfig cfg;
  cfg.output_dir = "runs/demo";
  {
    OutputRootGuard guard("/tmp/crl_root_test");
    CHECK(resolve_output_dir(cfg) == "/tmp/crl_root_test/runs/demo");
    cfg.output_dir = "/abs/stays";
    CHECK(resolve_output_dir(cfg) == "/abs/stays");
  }
}

TEST_CASE("experiment runs write the full artifact set, byte-stable across reruns") {
  fs::path out = fresh_dir("crl_test_exp_run");
  ExperimentConfig cfg = tiny_config(out);
  ExperimentOutcome res = run_experiment(cfg);

  CHECK(res.output_dir == out.string());
  REQUIRE(res.seeds.size() == 2);
  CHECK(res.seeds[0].seed == 1);
  CHECK(res.seeds[1].seed == 2);
  CHECK(res.mean.seed_label == "mean");
  CHECK(res.stddev.seed_label == "std");
  for (const SeedOutcome& so : res.seeds) {
    CHECK(so.trace.size() == 30);
    CHECK(so.pdpg_trace.empty());
    CHECK(so.summary.final_entropy > 0.0);
  }

  for (const char* file : {"config.json", "summary.csv", "metrics_seed1.csv",
                           "metrics_seed2.csv", "policy_seed1.bin", "policy_seed2.bin"})
    CHECK(fs::exists(out / file));

  std::string metrics1 = read_text(out / "metrics_seed1.csv");
  std::string summary = read_text(out / "summary.csv");
  CHECK(metrics1.find("iter,") == 0);
  CHECK(summary.find("seed,") == 0);

  run_experiment(cfg);
  CHECK(read_text(out / "metrics_seed1.csv") == metrics1);
  CHECK(read_text(out / "summary.csv") == summary);
  fs::remove_all(out);
}

TEST_CASE("pdpg experiments emit their own trace flavor") {
  fs::path out = fresh_dir("crl_test_exp_pdpg");
  ExperimentConfig cfg = tiny_config(out);
  cfg.algorithm = "pdpg";
  cfg.seeds = {5};
  cfg.pdpg.iterations = 25;
  cfg.pdpg.batch_size = 4;
  ExperimentOutcome res = run_experiment(cfg);
  REQUIRE(res.seeds.size() == 1);
  CHECK(res.seeds[0].trace.empty());
  CHECK(res.seeds[0].pdpg_trace.size() == 25);
  CHECK(fs::exists(out / "metrics_seed5.csv"));
  std::string metrics = read_text(out / "metrics_seed5.csv");
  CHECK(metrics.find("lambda") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("custom grid environments load from disk") {
  fs::path dir = fresh_dir("crl_test_exp_grid");
  GridSpec g;
  g.rows = 2;
  g.cols = 3;
  g.start = {0, 0};
  g.goal = {1, 2};
  g.horizon_cap = 12;
  g.validate();
  save_grid_file((dir / "tiny.grid").string(), g);
  save_table_policy((dir / "tiny.teacher").string(),
                    TablePolicy::uniform(g.rows * g.cols, 4));

  ExperimentConfig cfg = tiny_config(dir / "out");
  cfg.env = "grid";
  cfg.grid_path = (dir / "tiny.grid").string();
  cfg.teacher_table_path = (dir / "tiny.teacher").string();
  cfg.seeds = {3};
  ExperimentOutcome res = run_experiment(cfg);
  REQUIRE(res.seeds.size() == 1);
  CHECK(res.seeds[0].trace.size() == 30);

  // A teacher table sized for a different grid is rejected up front.
  save_table_policy((dir / "bad.teacher").string(), TablePolicy::uniform(4, 4));
  cfg.teacher_table_path = (dir / "bad.teacher").string();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("wall-leap reference policy honors the checkpoint contract") {
  fs::path scratch = fresh_dir("crl_test_exp_wl");
  // An empty output root means no cached reference network exists.
  OutputRootGuard guard((scratch / "root").string());

  ExperimentConfig cfg = tiny_config(scratch / "out");
  cfg.env = "wall_leap";
  cfg.train_teacher = false;
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);

  // An explicit checkpoint path that does not exist is an I/O failure.
  cfg.teacher_ckpt = (scratch / "missing.bin").string();
  CHECK_THROWS_AS(run_experiment(cfg), IoError);

  // A checkpoint with the wrong shape is a config failure.
  RandomSource rng(5);
  PolicyParams tiny = init_policy(Arch::tabular, 4, 4, 1.0, rng);
  save_policy((scratch / "wrong.bin").string(), tiny);
  cfg.teacher_ckpt = (scratch / "wrong.bin").string();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
  fs::remove_all(scratch);
}

}  // TEST_SUITE
