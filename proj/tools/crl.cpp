#include <cmath>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crl/envs.hpp"
#include "crl/experiment.hpp"
#include "crl/oracle.hpp"

namespace {

using namespace crl;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void check_grid_policy(const GridSpec& g, int states, int actions,
                       const std::string& what) {
  if (states != g.rows * g.cols || actions != 4)
    throw ConfigError(what + " does not match the grid (" +
                      std::to_string(states) + " states, expected " +
                      std::to_string(g.rows * g.cols) + ")");
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string config_path;
  ExperimentConfig cfg;

  std::string env, algorithm, arch, init, output_dir, name;
  double temperature = 0.0;
  std::vector<std::uint64_t> seeds;
  int pretrain_iterations = 0, distill_iterations = 0;
  std::string teacher_ckpt;
  bool train_teacher = true;
  int teacher_iterations = 0;

  int iterations = 0, batch_size = 0;
  double delta = 0.0, delta_entropy = 0.0;
  std::string direction, distance;
  bool clip = false;
  double rho = 0.0;
  std::string clip_semantics, clip_grouping;
  double lr = 0.0, lr_dual = 0.0, lambda_init = 0.0, lambda_max = 0.0;
  double zeta_init = 0.0;
  double a1 = 0.0, a2 = 0.0, p1 = 0.0, p2 = 0.0;
};

void add_train(CLI::App& app, TrainArgs& a) {
  CLI::App* t = app.add_subcommand("train", "Run a multi-seed training experiment");
  auto* oc = t->add_option("-c,--config", a.config_path, "JSON experiment config");
  auto* oenv = t->add_option("--env", a.env,
                             "square_wave_determined | square_wave_less_confident | "
                             "wall_leap | grid");
  auto* oalg = t->add_option("--algorithm", a.algorithm, "practical | pdpg");
  auto* oarch = t->add_option("--arch", a.arch, "tabular | linear | mlp");
  auto* otemp = t->add_option("--temperature", a.temperature, "softmax temperature");
  auto* oinit = t->add_option("--init", a.init, "uniform | pretrained | teacher");
  auto* oseeds =
      t->add_option("--seeds", a.seeds, "training seeds")->delimiter(',');
  auto* oout = t->add_option("--output-dir", a.output_dir, "output directory");
  auto* oname = t->add_option("--name", a.name, "experiment name");
  auto* opre = t->add_option("--pretrain-iterations", a.pretrain_iterations,
                             "reward-pretraining iterations");
  auto* odis = t->add_option("--distill-iterations", a.distill_iterations,
                             "teacher-distillation iterations");
  auto* ogrid = t->add_option("--grid", a.cfg.grid_path, "grid file (env = grid)");
  auto* otea = t->add_option("--teacher-table", a.cfg.teacher_table_path,
                             "teacher table file (env = grid)");
  auto* ockpt = t->add_option("--teacher-ckpt", a.teacher_ckpt,
                              "teacher checkpoint (env = wall_leap)");
  auto* otrt = t->add_flag("--train-teacher,!--no-train-teacher", a.train_teacher,
                           "train the wall-leap teacher on demand when no "
                           "checkpoint is found");
  auto* otit = t->add_option("--teacher-iterations", a.teacher_iterations,
                             "on-demand teacher training iterations");

  auto* oit = t->add_option("--iterations", a.iterations, "training iterations");
  auto* obs = t->add_option("--batch-size", a.batch_size, "trajectories per batch");
  auto* odel = t->add_option("--delta", a.delta, "divergence budget");
  auto* odent = t->add_option("--delta-entropy", a.delta_entropy, "entropy target");
  auto* odir = t->add_option("--direction", a.direction, "forward | reverse");
  auto* odist = t->add_option("--distance", a.distance, "kl | hellinger");
  auto* oclip = t->add_flag("--clip", a.clip, "enable percentile clipping");
  auto* orho = t->add_option("--rho", a.rho, "clip percentile in (0, 100]");
  auto* osem = t->add_option("--clip-semantics", a.clip_semantics,
                             "cap | literal_max");
  auto* ogrp = t->add_option("--clip-grouping", a.clip_grouping,
                             "batch | per_timestep");
  auto* olr = t->add_option("--lr", a.lr, "policy/critic learning rate");
  auto* olrd = t->add_option("--lr-dual", a.lr_dual, "multiplier learning rate");
  auto* olam = t->add_option("--lambda-init", a.lambda_init, "initial multiplier");
  auto* olmax = t->add_option("--lambda-max", a.lambda_max, "multiplier ceiling");
  auto* ozeta = t->add_option("--zeta-init", a.zeta_init,
                              "initial entropy multiplier");
  auto* oa1 = t->add_option("--a1", a.a1, "primal step scale");
  auto* oa2 = t->add_option("--a2", a.a2, "dual step scale");
  auto* op1 = t->add_option("--p1", a.p1, "primal step exponent");
  auto* op2 = t->add_option("--p2", a.p2, "dual step exponent");

  t->callback([&a, oc, oenv, oalg, oarch, otemp, oinit, oseeds, oout, oname, opre,
               odis, ogrid, otea, ockpt, otrt, otit, oit, obs, odel, odent, odir,
               odist, oclip, orho, osem, ogrp, olr, olrd, olam, olmax, ozeta, oa1,
               oa2, op1, op2]() {
    std::string grid_flag = a.cfg.grid_path, teacher_flag = a.cfg.teacher_table_path;
    if (oc->count()) a.cfg = load_experiment_config(a.config_path);
    if (oenv->count()) a.cfg.env = a.env;
    if (oalg->count()) a.cfg.algorithm = a.algorithm;
    if (oarch->count()) a.cfg.arch = arch_from_name(a.arch);
    if (otemp->count()) a.cfg.temperature = a.temperature;
    if (oinit->count()) a.cfg.init = init_from_name(a.init);
    if (oseeds->count()) a.cfg.seeds = a.seeds;
    if (oout->count()) a.cfg.output_dir = a.output_dir;
    if (oname->count()) a.cfg.name = a.name;
    if (opre->count()) a.cfg.pretrain_iterations = a.pretrain_iterations;
    if (odis->count()) a.cfg.distill_iterations = a.distill_iterations;
    if (ogrid->count()) a.cfg.grid_path = grid_flag;
    if (otea->count()) a.cfg.teacher_table_path = teacher_flag;
    if (ockpt->count()) a.cfg.teacher_ckpt = a.teacher_ckpt;
    if (otrt->count()) a.cfg.train_teacher = a.train_teacher;
    if (otit->count()) a.cfg.teacher_iterations = a.teacher_iterations;

    bool practical = a.cfg.algorithm == "practical";
    if (oit->count()) (practical ? a.cfg.practical.iterations : a.cfg.pdpg.iterations) =
        a.iterations;
    if (obs->count()) (practical ? a.cfg.practical.batch_size : a.cfg.pdpg.batch_size) =
        a.batch_size;
    if (odel->count()) (practical ? a.cfg.practical.delta : a.cfg.pdpg.delta) = a.delta;
    if (odir->count()) {
      KlDirection d = kl_direction_from_name(a.direction);
      (practical ? a.cfg.practical.direction : a.cfg.pdpg.direction) = d;
    }
    if (olam->count())
      (practical ? a.cfg.practical.lambda_init : a.cfg.pdpg.lambda_init) = a.lambda_init;
    if (olmax->count())
      (practical ? a.cfg.practical.lambda_max : a.cfg.pdpg.lambda_max) = a.lambda_max;
    if (odent->count()) a.cfg.practical.delta_entropy = a.delta_entropy;
    if (odist->count()) a.cfg.practical.distance = distance_from_name(a.distance);
    if (oclip->count()) a.cfg.practical.clip.enabled = a.clip;
    if (orho->count()) {
      a.cfg.practical.clip.rho = a.rho;
      a.cfg.practical.clip.enabled = true;
    }
    if (osem->count())
      a.cfg.practical.clip.semantics =
          a.clip_semantics == "cap" ? ClipSemantics::cap : ClipSemantics::literal_max;
    if (ogrp->count())
      a.cfg.practical.clip.grouping =
          a.clip_grouping == "batch" ? ClipGrouping::batch : ClipGrouping::per_timestep;
    if (olr->count()) a.cfg.practical.lr = a.lr;
    if (olrd->count()) a.cfg.practical.lr_dual = a.lr_dual;
    if (ozeta->count()) a.cfg.practical.zeta_init = a.zeta_init;
    if (oa1->count()) a.cfg.pdpg.schedule.a1 = a.a1;
    if (oa2->count()) a.cfg.pdpg.schedule.a2 = a.a2;
    if (op1->count()) a.cfg.pdpg.schedule.p1 = a.p1;
    if (op2->count()) a.cfg.pdpg.schedule.p2 = a.p2;

    ExperimentOutcome out = run_experiment(a.cfg);
    for (const SeedOutcome& so : out.seeds)
      std::cout << "seed " << so.seed << ": greedy_reward "
                << num(so.summary.final_greedy_reward) << ", kl "
                << num(so.summary.final_kl) << ", entropy "
                << num(so.summary.final_entropy) << ", lambda "
                << num(so.summary.lambda_final) << ", zeta "
                << num(so.summary.zeta_final) << "\n";
    std::cout << "mean: greedy_reward " << num(out.mean.final_greedy_reward)
              << " (std " << num(out.stddev.final_greedy_reward) << "), kl "
              << num(out.mean.final_kl) << ", entropy "
              << num(out.mean.final_entropy) << "\n"
              << "wrote " << out.output_dir << "\n";
  });
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
  std::string grid_path, policy_path, teacher_path;
  int episodes = 100;
  std::uint64_t seed = 1;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  CLI::App* e = app.add_subcommand("eval", "Roll out a saved policy on a grid");
  e->add_option("--grid", a.grid_path, "grid file")->required();
  e->add_option("--policy", a.policy_path, "policy checkpoint")->required();
  e->add_option("--teacher-table", a.teacher_path,
                "teacher table for divergence reporting");
  e->add_option("--episodes", a.episodes, "sampled episodes");
  e->add_option("--seed", a.seed, "sampling seed");

  e->callback([&a]() {
    GridSpec g = load_grid_file(a.grid_path);
    MdpSpec mdp = g.to_mdp();
    ParametricPolicy pi(load_policy(a.policy_path));
    check_grid_policy(g, pi.params().state_count, pi.params().action_count, "policy");
    if (a.episodes <= 0) throw ConfigError("episodes must be positive");
    RandomSource root(a.seed);
    std::vector<Trajectory> batch = sample_batch(mdp, pi, root, a.episodes);
    double mean = 0.0;
    for (const Trajectory& tau : batch) mean += total_reward(tau);
    mean /= static_cast<double>(batch.size());
    double var = 0.0;
    for (const Trajectory& tau : batch)
      var += (total_reward(tau) - mean) * (total_reward(tau) - mean);
    var = batch.size() > 1 ? var / static_cast<double>(batch.size() - 1) : 0.0;

    std::cout << "mean_reward: " << num(mean) << " (std " << num(std::sqrt(var))
              << ")\n"
              << "greedy_reward: " << num(greedy_reward(mdp, pi)) << "\n"
              << "entropy: " << num(entropy_estimate(pi, batch)) << "\n";
    if (!a.teacher_path.empty()) {
      TablePolicy teacher = load_table_policy(a.teacher_path);
      check_grid_policy(g, teacher.state_count(), teacher.action_count(),
                        "teacher table");
      StepKlOptions opts;
      std::cout << "step_kl_forward: " << num(kl_step_estimate(pi, teacher, batch, opts))
                << "\n";
    }
  });
}

// ------------------------------------------------------------- kl-bench ----

struct BenchArgs {
  std::string arch = "mlp";
  std::uint64_t seed = 1;
  double noise = 0.08;
  std::vector<int> samples = {1, 10, 100, 1000, 10000};
  int repeats = 50;
  std::string out = "kl_bench.csv";
};

void add_kl_bench(CLI::App& app, BenchArgs& a) {
  CLI::App* b = app.add_subcommand(
      "kl-bench", "Compare trajectory- and step-wise KL estimators on the 2x2 world");
  b->add_option("--arch", a.arch, "tabular | linear | mlp");
  b->add_option("--seed", a.seed, "policy perturbation / sampling seed");
  b->add_option("--noise", a.noise, "student perturbation half-width");
  b->add_option("--samples", a.samples, "sample counts")->delimiter(',');
  b->add_option("--repeats", a.repeats, "independent batches per count");
  b->add_option("-o,--out", a.out, "output CSV");

  b->callback([&a]() {
    KlBenchEnv env = build_kl_bench_2x2(arch_from_name(a.arch), a.seed, a.noise);
    ParametricPolicy student(env.student);
    ParametricPolicy teacher(env.teacher);
    if (a.repeats <= 0) throw ConfigError("repeats must be positive");
    RandomSource root(splitmix64(a.seed + 0x6b6c));
    std::vector<KlBenchRow> rows =
        run_kl_bench(env.env.mdp, student, teacher, a.samples, a.repeats, root);
    write_kl_bench_csv(a.out, rows);
    double exact = rows.empty() ? 0.0 : rows.front().exact_value;
    std::cout << "exact_kl_forward: " << num(exact) << "\n";
    for (int count : a.samples)
      for (const char* est : {"trajectory", "step"}) {
        double mse = 0.0;
        int n = 0;
        for (const KlBenchRow& r : rows)
          if (r.sample_count == count && r.estimator == est) {
            mse += r.abs_error * r.abs_error;
            ++n;
          }
        if (n)
          std::cout << est << " n=" << count
                    << ": rmse " << num(std::sqrt(mse / n)) << "\n";
      }
    std::cout << "wrote " << a.out << "\n";
  });
}

// ------------------------------------------------------------ enumerate ----

struct EnumArgs {
  std::string grid_path, policy_path, table_path;
  std::string out = "enumeration.csv";
};

void add_enumerate(CLI::App& app, EnumArgs& a) {
  CLI::App* e = app.add_subcommand(
      "enumerate", "Exact trajectory distribution of a policy on a small grid");
  e->add_option("--grid", a.grid_path, "grid file")->required();
  auto* op = e->add_option("--policy", a.policy_path, "policy checkpoint");
  auto* ot = e->add_option("--teacher-table", a.table_path, "table policy file");
  op->excludes(ot);
  e->add_option("-o,--out", a.out, "output CSV");

  e->callback([&a]() {
    GridSpec g = load_grid_file(a.grid_path);
    MdpSpec mdp = g.to_mdp();
    std::unique_ptr<Policy> pi;
    if (!a.policy_path.empty()) {
      auto p = std::make_unique<ParametricPolicy>(load_policy(a.policy_path));
      check_grid_policy(g, p->params().state_count, p->params().action_count,
                        "policy");
      pi = std::move(p);
    } else if (!a.table_path.empty()) {
      auto p = std::make_unique<TablePolicy>(load_table_policy(a.table_path));
      check_grid_policy(g, p->state_count(), p->action_count(), "table policy");
      pi = std::move(p);
    } else {
      throw ConfigError("enumerate needs --policy or --teacher-table");
    }
    EnumerationTable table = enumerate_distribution(mdp, *pi);
    write_enumeration_csv(a.out, table);
    double cost = 0.0;
    for (const EnumEntry& entry : table.entries) cost += entry.prob * entry.cost;
    std::cout << "trajectories: " << table.entries.size() << "\n"
              << "total_mass: " << num(table.total_mass()) << "\n"
              << "expected_cost: " << num(cost) << "\n"
              << "wrote " << a.out << "\n";
  });
}

// ------------------------------------------------------------- make-env ----

struct MakeEnvArgs {
  std::string name;
  std::string dir = "data/envs";
};

void add_make_env(CLI::App& app, MakeEnvArgs& a) {
  CLI::App* m = app.add_subcommand("make-env", "Write a bundled environment's files");
  m->add_option("--name", a.name, "square_wave | wall_leap | kl_bench_2x2")
      ->required();
  m->add_option("--dir", a.dir, "output directory");
  m->callback([&a]() {
    for (const std::string& f : write_env_files(a.name, a.dir))
      std::cout << "wrote " << f << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained policy-gradient training against a reference policy"};
  app.require_subcommand(1);

  TrainArgs train_args;
  EvalArgs eval_args;
  BenchArgs bench_args;
  EnumArgs enum_args;
  MakeEnvArgs make_env_args;
  add_train(app, train_args);
  add_eval(app, eval_args);
  add_kl_bench(app, bench_args);
  add_enumerate(app, enum_args);
  add_make_env(app, make_env_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? crl::exit_ok : crl::exit_config_error;
  } catch (const crl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return crl::exit_config_error;
  } catch (const crl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return crl::exit_io_error;
  } catch (const crl::AssumptionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return crl::exit_assumption_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return crl::exit_assumption_error;
  }
  return crl::exit_ok;
}
