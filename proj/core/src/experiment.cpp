#include "crl/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "crl/envs.hpp"
#include "crl/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace crl {

std::string init_name(InitKind k) {
  switch (k) {
    case InitKind::uniform: return "uniform";
    case InitKind::pretrained: return "pretrained";
    case InitKind::teacher: return "teacher";
  }
  return "uniform";
}

InitKind init_from_name(const std::string& name) {
  if (name == "uniform") return InitKind::uniform;
  if (name == "pretrained") return InitKind::pretrained;
  if (name == "teacher") return InitKind::teacher;
  throw ConfigError("unknown init kind: " + name);
}

namespace {

const char* norm_name(StepNorm n) { return n == StepNorm::h_minus_1 ? "h_minus_1" : "h"; }
StepNorm norm_from_name(const std::string& s) {
  if (s == "h_minus_1") return StepNorm::h_minus_1;
  if (s == "h") return StepNorm::h;
  throw ConfigError("unknown step normalization: " + s);
}

const char* semantics_name(ClipSemantics s) {
  return s == ClipSemantics::cap ? "cap" : "literal_max";
}
ClipSemantics semantics_from_name(const std::string& s) {
  if (s == "cap") return ClipSemantics::cap;
  if (s == "literal_max") return ClipSemantics::literal_max;
  throw ConfigError("unknown clip semantics: " + s);
}

const char* grouping_name(ClipGrouping g) {
  return g == ClipGrouping::batch ? "batch" : "per_timestep";
}
ClipGrouping grouping_from_name(const std::string& s) {
  if (s == "batch") return ClipGrouping::batch;
  if (s == "per_timestep") return ClipGrouping::per_timestep;
  throw ConfigError("unknown clip grouping: " + s);
}

void expect_keys(const json& j, std::initializer_list<const char*> keys,
                 const std::string& origin, const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(origin + ": unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void take(const json& j, const char* key, T& out, const std::string& origin) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    it->get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": field '" + std::string(key) + "': " + e.what());
  }
}

template <typename T, typename FromName>
void take_named(const json& j, const char* key, T& out, FromName from_name,
                const std::string& origin) {
  std::string s;
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    it->get_to(s);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": field '" + std::string(key) + "': " + e.what());
  }
  try {
    out = from_name(s);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": field '" + std::string(key) + "': " + e.what());
  }
}

void parse_clip(const json& j, ClipConfig& clip, const std::string& origin) {
  expect_keys(j, {"enabled", "rho", "semantics", "grouping"}, origin, "clip");
  take(j, "enabled", clip.enabled, origin);
  take(j, "rho", clip.rho, origin);
  take_named(j, "semantics", clip.semantics, semantics_from_name, origin);
  take_named(j, "grouping", clip.grouping, grouping_from_name, origin);
}

void parse_practical(const json& j, PracticalConfig& pc, const std::string& origin) {
  expect_keys(j,
              {"iterations", "batch_size", "delta", "delta_entropy", "direction",
               "distance", "clip", "normalize_step", "norm", "lr", "lr_dual",
               "dual_lr_decay", "dual_lr_decay_rate", "lambda_init", "zeta_init",
               "lambda_max", "zeta_min", "zeta_max", "zeta_expand",
               "boundary_window", "boundary_margin", "discount", "critic_steps",
               "theta_radius"},
              origin, "practical");
  take(j, "iterations", pc.iterations, origin);
  take(j, "batch_size", pc.batch_size, origin);
  take(j, "delta", pc.delta, origin);
  take(j, "delta_entropy", pc.delta_entropy, origin);
  take_named(j, "direction", pc.direction, kl_direction_from_name, origin);
  take_named(j, "distance", pc.distance, distance_from_name, origin);
  if (j.contains("clip")) parse_clip(j.at("clip"), pc.clip, origin);
  take(j, "normalize_step", pc.normalize_step, origin);
  take_named(j, "norm", pc.norm, norm_from_name, origin);
  take(j, "lr", pc.lr, origin);
  take(j, "lr_dual", pc.lr_dual, origin);
  take(j, "dual_lr_decay", pc.dual_lr_decay, origin);
  take(j, "dual_lr_decay_rate", pc.dual_lr_decay_rate, origin);
  take(j, "lambda_init", pc.lambda_init, origin);
  take(j, "zeta_init", pc.zeta_init, origin);
  take(j, "lambda_max", pc.lambda_max, origin);
  take(j, "zeta_min", pc.zeta_min, origin);
  take(j, "zeta_max", pc.zeta_max, origin);
  take(j, "zeta_expand", pc.zeta_expand, origin);
  take(j, "boundary_window", pc.boundary_window, origin);
  take(j, "boundary_margin", pc.boundary_margin, origin);
  take(j, "discount", pc.discount, origin);
  take(j, "critic_steps", pc.critic_steps, origin);
  take(j, "theta_radius", pc.theta_radius, origin);
}

void parse_pdpg(const json& j, PdpgConfig& pc, const std::string& origin) {
  expect_keys(j,
              {"iterations", "batch_size", "delta", "direction", "lambda_init",
               "lambda_max", "theta_radius", "discount", "schedule",
               "boundary_window", "boundary_margin", "convergence_window",
               "theta_tol", "lambda_tol"},
              origin, "pdpg");
  take(j, "iterations", pc.iterations, origin);
  take(j, "batch_size", pc.batch_size, origin);
  take(j, "delta", pc.delta, origin);
  take_named(j, "direction", pc.direction, kl_direction_from_name, origin);
  take(j, "lambda_init", pc.lambda_init, origin);
  take(j, "lambda_max", pc.lambda_max, origin);
  take(j, "theta_radius", pc.theta_radius, origin);
  take(j, "discount", pc.discount, origin);
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    expect_keys(s, {"a1", "a2", "p1", "p2"}, origin, "schedule");
    take(s, "a1", pc.schedule.a1, origin);
    take(s, "a2", pc.schedule.a2, origin);
    take(s, "p1", pc.schedule.p1, origin);
    take(s, "p2", pc.schedule.p2, origin);
  }
  take(j, "boundary_window", pc.boundary_window, origin);
  take(j, "boundary_margin", pc.boundary_margin, origin);
  take(j, "convergence_window", pc.convergence_window, origin);
  take(j, "theta_tol", pc.theta_tol, origin);
  take(j, "lambda_tol", pc.lambda_tol, origin);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("experiment name must not be empty");
  if (env != "square_wave_determined" && env != "square_wave_less_confident" &&
      env != "wall_leap" && env != "grid")
    throw ConfigError("unknown environment: " + env);
  if (env == "grid" && grid_path.empty())
    throw ConfigError("the grid environment needs grid_path");
  if (env == "grid" && teacher_table_path.empty())
    throw ConfigError("the grid environment needs teacher_table_path");
  if (algorithm != "practical" && algorithm != "pdpg")
    throw ConfigError("unknown algorithm: " + algorithm);
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (pretrain_iterations <= 0)
    throw ConfigError("pretrain iterations must be positive");
  if (distill_iterations <= 0)
    throw ConfigError("distillation iterations must be positive");
  if (teacher_iterations <= 0)
    throw ConfigError("teacher iterations must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (output_dir.empty()) throw ConfigError("output directory must not be empty");
  if (algorithm == "practical") practical.validate();
  if (algorithm == "pdpg") pdpg.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ": config root must be an object");
  expect_keys(j,
              {"name", "env", "grid_path", "teacher_table_path", "teacher_ckpt",
               "train_teacher", "teacher_iterations", "algorithm", "arch",
               "temperature", "init", "pretrain_iterations", "distill_iterations",
               "seeds", "output_dir", "practical", "pdpg"},
              origin, "config");
  ExperimentConfig cfg;
  take(j, "name", cfg.name, origin);
  take(j, "env", cfg.env, origin);
  take(j, "grid_path", cfg.grid_path, origin);
  take(j, "teacher_table_path", cfg.teacher_table_path, origin);
  take(j, "teacher_ckpt", cfg.teacher_ckpt, origin);
  take(j, "train_teacher", cfg.train_teacher, origin);
  take(j, "teacher_iterations", cfg.teacher_iterations, origin);
  take(j, "algorithm", cfg.algorithm, origin);
  take_named(j, "arch", cfg.arch, arch_from_name, origin);
  take(j, "temperature", cfg.temperature, origin);
  take_named(j, "init", cfg.init, init_from_name, origin);
  take(j, "pretrain_iterations", cfg.pretrain_iterations, origin);
  take(j, "distill_iterations", cfg.distill_iterations, origin);
  take(j, "seeds", cfg.seeds, origin);
  take(j, "output_dir", cfg.output_dir, origin);
  if (j.contains("practical")) parse_practical(j.at("practical"), cfg.practical, origin);
  if (j.contains("pdpg")) parse_pdpg(j.at("pdpg"), cfg.pdpg, origin);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path);
}

void save_experiment_config(const std::string& path, const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["env"] = cfg.env;
  if (!cfg.grid_path.empty()) j["grid_path"] = cfg.grid_path;
  if (!cfg.teacher_table_path.empty()) j["teacher_table_path"] = cfg.teacher_table_path;
  if (!cfg.teacher_ckpt.empty()) j["teacher_ckpt"] = cfg.teacher_ckpt;
  j["train_teacher"] = cfg.train_teacher;
  j["teacher_iterations"] = cfg.teacher_iterations;
  j["algorithm"] = cfg.algorithm;
  j["arch"] = arch_name(cfg.arch);
  j["temperature"] = cfg.temperature;
  j["init"] = init_name(cfg.init);
  j["pretrain_iterations"] = cfg.pretrain_iterations;
  j["distill_iterations"] = cfg.distill_iterations;
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  json pr;
  pr["iterations"] = cfg.practical.iterations;
  pr["batch_size"] = cfg.practical.batch_size;
  pr["delta"] = cfg.practical.delta;
  pr["delta_entropy"] = cfg.practical.delta_entropy;
  pr["direction"] = kl_direction_name(cfg.practical.direction);
  pr["distance"] = distance_name(cfg.practical.distance);
  pr["clip"] = {{"enabled", cfg.practical.clip.enabled},
                {"rho", cfg.practical.clip.rho},
                {"semantics", semantics_name(cfg.practical.clip.semantics)},
                {"grouping", grouping_name(cfg.practical.clip.grouping)}};
  pr["normalize_step"] = cfg.practical.normalize_step;
  pr["norm"] = norm_name(cfg.practical.norm);
  pr["lr"] = cfg.practical.lr;
  pr["lr_dual"] = cfg.practical.lr_dual;
  pr["dual_lr_decay"] = cfg.practical.dual_lr_decay;
  pr["dual_lr_decay_rate"] = cfg.practical.dual_lr_decay_rate;
  pr["lambda_init"] = cfg.practical.lambda_init;
  pr["zeta_init"] = cfg.practical.zeta_init;
  pr["lambda_max"] = cfg.practical.lambda_max;
  pr["zeta_min"] = cfg.practical.zeta_min;
  pr["zeta_max"] = cfg.practical.zeta_max;
  pr["zeta_expand"] = cfg.practical.zeta_expand;
  pr["boundary_window"] = cfg.practical.boundary_window;
  pr["boundary_margin"] = cfg.practical.boundary_margin;
  pr["discount"] = cfg.practical.discount;
  pr["critic_steps"] = cfg.practical.critic_steps;
  pr["theta_radius"] = cfg.practical.theta_radius;
  j["practical"] = pr;
  json pd;
  pd["iterations"] = cfg.pdpg.iterations;
  pd["batch_size"] = cfg.pdpg.batch_size;
  pd["delta"] = cfg.pdpg.delta;
  pd["direction"] = kl_direction_name(cfg.pdpg.direction);
  pd["lambda_init"] = cfg.pdpg.lambda_init;
  pd["lambda_max"] = cfg.pdpg.lambda_max;
  pd["theta_radius"] = cfg.pdpg.theta_radius;
  pd["discount"] = cfg.pdpg.discount;
  pd["schedule"] = {{"a1", cfg.pdpg.schedule.a1},
                    {"a2", cfg.pdpg.schedule.a2},
                    {"p1", cfg.pdpg.schedule.p1},
                    {"p2", cfg.pdpg.schedule.p2}};
  pd["boundary_window"] = cfg.pdpg.boundary_window;
  pd["boundary_margin"] = cfg.pdpg.boundary_margin;
  pd["convergence_window"] = cfg.pdpg.convergence_window;
  pd["theta_tol"] = cfg.pdpg.theta_tol;
  pd["lambda_tol"] = cfg.pdpg.lambda_tol;
  j["pdpg"] = pd;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  fs::path p(cfg.output_dir);
  const char* root = std::getenv("CRL_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  return p.string();
}

namespace {

std::string cache_dir() {
  const char* root = std::getenv("CRL_OUTPUT_ROOT");
  fs::path base = (root && *root) ? fs::path(root) : fs::path(".");
  return (base / "crl_cache").string();
}

std::string double_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

bool params_match(const PolicyParams& p, Arch arch, int states, int actions,
                  double temperature) {
  return p.arch == arch && p.state_count == states && p.action_count == actions &&
         p.temperature == temperature &&
         p.theta.size() == PolicyParams::param_count_for(arch, states, actions,
                                                         p.hidden1, p.hidden2);
}

/// Loads a cached checkpoint when it matches; otherwise builds and caches it.
template <typename Build>
PolicyParams cached_params(const std::string& file, Arch arch, int states,
                           int actions, double temperature, Build build) {
  fs::path path = fs::path(cache_dir()) / file;
  if (fs::exists(path)) {
    try {
      PolicyParams p = load_policy(path.string());
      if (params_match(p, arch, states, actions, temperature)) return p;
    } catch (const std::exception&) {
      // fall through to a rebuild
    }
  }
  PolicyParams p = build();
  fs::create_directories(path.parent_path());
  save_policy(path.string(), p);
  return p;
}

constexpr std::uint64_t kPretrainInitSeed = 9001;
constexpr std::uint64_t kPretrainCriticSeed = 9002;
constexpr std::uint64_t kPretrainRunSeed = 9003;
constexpr std::uint64_t kTeacherInitSeed = 9101;
constexpr std::uint64_t kTeacherCriticSeed = 9102;
constexpr std::uint64_t kTeacherRunSeed = 9103;
constexpr std::uint64_t kDistillInitSeed = 9201;
constexpr std::uint64_t kUniformInitSeed = 9301;

/// Softmax temperature of the on-demand wall-leap reference network. Fixed so
/// every experiment shares one cached checkpoint regardless of the student's
/// own temperature.
constexpr double kTeacherTemperature = 5.0;

/// Reward training without a reference policy: the divergence budget is set
/// far beyond reach so the multiplier stays at zero, while the entropy
/// constraint still drives the policy toward determinism.
PracticalConfig free_run_config(const PracticalConfig& base, int iterations) {
  PracticalConfig pc = base;
  pc.iterations = iterations;
  pc.delta = 1e9;
  pc.lambda_init = 0.0;
  pc.direction = KlDirection::forward;
  pc.distance = DistanceMode::kl;
  pc.clip.enabled = false;
  return pc;
}

struct FreeRun {
  PolicyParams params;
  ValueNet critic;
};

FreeRun train_free(const MdpSpec& mdp, const PracticalConfig& pc, Arch arch,
                   double temperature, std::uint64_t init_seed,
                   std::uint64_t critic_seed, std::uint64_t run_seed) {
  RandomSource ir(init_seed);
  PolicyParams init =
      init_policy(arch, mdp.state_count, mdp.action_count, temperature, ir);
  RandomSource cr(critic_seed);
  ValueNet critic = ValueNet::init(mdp.state_count, cr);
  TablePolicy uniform = TablePolicy::uniform(mdp.state_count, mdp.action_count);
  PracticalResult res = run_practical(mdp, init, critic, uniform, pc, run_seed);
  critic.params() = res.critic_params;
  return {std::move(res.params), std::move(critic)};
}

/// Full-state divergence matching against the reference policy (no
/// environment interaction); deterministic given the seed.
PolicyParams distill_params(const Policy& teacher, Arch arch, int states, int actions,
                            double temperature, int iterations,
                            std::uint64_t init_seed) {
  RandomSource ir(init_seed);
  PolicyParams params = init_policy(arch, states, actions, temperature, ir);
  AdamState opt(params.theta.size());
  std::vector<Eigen::VectorXd> targets;
  targets.reserve(states);
  for (StateId x = 0; x < states; ++x) targets.push_back(teacher.action_probs(x));
  for (int k = 0; k < iterations; ++k) {
    ParametricPolicy pol(params);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.theta.size());
    for (StateId x = 0; x < states; ++x) {
      StateEval ev = pol.eval(x);
      Eigen::VectorXd d =
          dlogits_kl_forward(ev, targets[x], temperature) / static_cast<double>(states);
      pol.backward(x, ev, d, grad);
    }
    adam_step(params.theta, opt, grad, 1e-3);
  }
  return params;
}

struct BuiltEnv {
  MdpSpec mdp;
  std::shared_ptr<Policy> teacher;
  int states = 0;
};

/// Resolves the wall-leap reference policy. An explicit checkpoint wins;
/// otherwise a cached network is reused or, when permitted, trained on demand
/// on the solid grid (the variant whose gaps are real walls) with the plain
/// actor-critic trainer.
std::shared_ptr<Policy> wall_leap_teacher(const ExperimentConfig& cfg,
                                          const WallLeapEnv& wl) {
  const int states = wl.solid_env.grid.rows * wl.solid_env.grid.cols;
  const int actions = wl.solid_env.mdp.action_count;
  if (!cfg.teacher_ckpt.empty()) {
    PolicyParams p = load_policy(cfg.teacher_ckpt);
    if (p.state_count != states || p.action_count != actions)
      throw ConfigError("teacher checkpoint does not match the wall-leap grid: " +
                        cfg.teacher_ckpt);
    return std::make_shared<ParametricPolicy>(std::move(p));
  }
  std::string file = "teacher_wall_leap_mlp_t" + double_tag(kTeacherTemperature) +
                     "_n" + std::to_string(cfg.teacher_iterations) + ".bin";
  fs::path path = fs::path(cache_dir()) / file;
  if (fs::exists(path)) {
    try {
      PolicyParams p = load_policy(path.string());
      if (params_match(p, Arch::mlp, states, actions, kTeacherTemperature))
        return std::make_shared<ParametricPolicy>(std::move(p));
    } catch (const std::exception&) {
      // fall through to a rebuild
    }
  }
  if (!cfg.train_teacher)
    throw ConfigError(
        "wall-leap teacher checkpoint not found; pass a checkpoint or allow "
        "training it on demand");
  PracticalConfig pc = free_run_config(PracticalConfig{}, cfg.teacher_iterations);
  FreeRun fr = train_free(wl.solid_env.mdp, pc, Arch::mlp, kTeacherTemperature,
                          kTeacherInitSeed, kTeacherCriticSeed, kTeacherRunSeed);
  fs::create_directories(path.parent_path());
  save_policy(path.string(), fr.params);
  return std::make_shared<ParametricPolicy>(std::move(fr.params));
}

BuiltEnv build_env(const ExperimentConfig& cfg) {
  BuiltEnv be;
  if (cfg.env == "square_wave_determined" || cfg.env == "square_wave_less_confident") {
    SquareWaveEnv sw = build_square_wave(cfg.env == "square_wave_determined"
                                             ? TeacherKind::determined
                                             : TeacherKind::less_confident);
    be.mdp = sw.env.mdp;
    be.states = sw.env.grid.rows * sw.env.grid.cols;
    be.teacher = std::make_shared<TablePolicy>(std::move(sw.teacher));
    return be;
  }
  if (cfg.env == "wall_leap") {
    WallLeapEnv wl = build_wall_leap();
    be.mdp = wl.env.mdp;
    be.states = wl.env.grid.rows * wl.env.grid.cols;
    be.teacher = wall_leap_teacher(cfg, wl);
    return be;
  }
  // Generic grid from files.
  GridSpec g = load_grid_file(cfg.grid_path);
  be.mdp = g.to_mdp();
  be.states = g.rows * g.cols;
  TablePolicy teacher = load_table_policy(cfg.teacher_table_path);
  if (teacher.state_count() != be.states || teacher.action_count() != 4)
    throw ConfigError("teacher table does not match the grid: " +
                      cfg.teacher_table_path);
  be.teacher = std::make_shared<TablePolicy>(std::move(teacher));
  return be;
}

/// Starting point shared by all seeds of a run: the policy parameters, plus a
/// warm critic when the init scheme produced one (pretraining trains both).
struct InitBundle {
  PolicyParams params;
  std::shared_ptr<ValueNet> critic;
};

InitBundle initial_params(const ExperimentConfig& cfg, const BuiltEnv& env) {
  if (cfg.init == InitKind::uniform) {
    RandomSource ir(kUniformInitSeed);
    return {init_policy(cfg.arch, env.states, env.mdp.action_count, cfg.temperature,
                        ir),
            nullptr};
  }
  std::string env_tag = cfg.env == "grid" ? "grid_" + cfg.name : cfg.env;
  if (cfg.init == InitKind::pretrained) {
    std::string stem = "pretrain_" + env_tag + "_" + arch_name(cfg.arch) + "_t" +
                       double_tag(cfg.temperature) + "_n" +
                       std::to_string(cfg.pretrain_iterations);
    fs::path pol_path = fs::path(cache_dir()) / (stem + ".bin");
    fs::path crit_path = fs::path(cache_dir()) / (stem + "_critic.bin");
    if (fs::exists(pol_path) && fs::exists(crit_path)) {
      try {
        PolicyParams p = load_policy(pol_path.string());
        ValueNet v = load_value_net(crit_path.string());
        if (params_match(p, cfg.arch, env.states, env.mdp.action_count,
                         cfg.temperature) &&
            v.state_count() == env.states)
          return {std::move(p), std::make_shared<ValueNet>(std::move(v))};
      } catch (const std::exception&) {
        // fall through to a rebuild
      }
    }
    PracticalConfig pc = free_run_config(cfg.practical, cfg.pretrain_iterations);
    FreeRun fr = train_free(env.mdp, pc, cfg.arch, cfg.temperature,
                            kPretrainInitSeed, kPretrainCriticSeed,
                            kPretrainRunSeed);
    fs::create_directories(pol_path.parent_path());
    save_policy(pol_path.string(), fr.params);
    save_value_net(crit_path.string(), fr.critic);
    return {std::move(fr.params), std::make_shared<ValueNet>(std::move(fr.critic))};
  }
  std::string file = "distill_" + env_tag + "_" + arch_name(cfg.arch) + "_t" +
                     double_tag(cfg.temperature) + "_n" +
                     std::to_string(cfg.distill_iterations) + ".bin";
  return {cached_params(file, cfg.arch, env.states, env.mdp.action_count,
                        cfg.temperature,
                        [&]() {
                          return distill_params(*env.teacher, cfg.arch, env.states,
                                                env.mdp.action_count,
                                                cfg.temperature,
                                                cfg.distill_iterations,
                                                kDistillInitSeed);
                        }),
          nullptr};
}

void aggregate(const std::vector<SummaryRow>& rows, SummaryRow& mean, SummaryRow& dev) {
  auto n = static_cast<double>(rows.size());
  auto acc = [&](auto field) {
    double m = 0.0;
    for (const SummaryRow& r : rows) m += r.*field;
    m /= n;
    double s = 0.0;
    for (const SummaryRow& r : rows) s += (r.*field - m) * (r.*field - m);
    s = n > 1 ? std::sqrt(s / (n - 1.0)) : 0.0;
    return std::make_pair(m, s);
  };
  mean.seed_label = "mean";
  dev.seed_label = "std";
  std::tie(mean.final_greedy_reward, dev.final_greedy_reward) =
      acc(&SummaryRow::final_greedy_reward);
  std::tie(mean.final_kl, dev.final_kl) = acc(&SummaryRow::final_kl);
  std::tie(mean.final_entropy, dev.final_entropy) = acc(&SummaryRow::final_entropy);
  std::tie(mean.lambda_final, dev.lambda_final) = acc(&SummaryRow::lambda_final);
  std::tie(mean.zeta_final, dev.zeta_final) = acc(&SummaryRow::zeta_final);
  std::tie(mean.iterations_to_entropy_below, dev.iterations_to_entropy_below) =
      acc(&SummaryRow::iterations_to_entropy_below);
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentOutcome out;
  out.output_dir = resolve_output_dir(cfg);
  fs::create_directories(out.output_dir);
  save_experiment_config((fs::path(out.output_dir) / "config.json").string(), cfg);

  BuiltEnv env = build_env(cfg);
  InitBundle start = initial_params(cfg, env);
  const PolicyParams& init = start.params;

  std::vector<SummaryRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    SeedOutcome so;
    so.seed = seed;
    so.summary.seed_label = std::to_string(seed);
    fs::path metrics =
        fs::path(out.output_dir) / ("metrics_seed" + std::to_string(seed) + ".csv");
    fs::path ckpt =
        fs::path(out.output_dir) / ("policy_seed" + std::to_string(seed) + ".bin");

    if (cfg.algorithm == "practical") {
      RandomSource cr(RandomSource(seed).substream(101).seed());
      ValueNet critic =
          start.critic ? *start.critic : ValueNet::init(env.states, cr);
      PracticalResult pr =
          run_practical(env.mdp, init, critic, *env.teacher, cfg.practical, seed);
      so.params = pr.params;
      so.trace = std::move(pr.trace);
      const PracticalTraceRow& last = so.trace.back();
      so.summary.final_greedy_reward = last.greedy_reward;
      so.summary.final_kl = last.kl_step;
      so.summary.final_entropy = last.entropy;
      so.summary.lambda_final = pr.lambda;
      so.summary.zeta_final = pr.zeta;
      so.summary.iterations_to_entropy_below = -1;
      for (const PracticalTraceRow& r : so.trace)
        if (r.entropy < 0.05) {
          so.summary.iterations_to_entropy_below = r.iter;
          break;
        }
      write_practical_trace_csv(metrics.string(), so.trace);
    } else {
      PdpgResult dr = run_pdpg(env.mdp, init, *env.teacher, cfg.pdpg, seed);
      so.params = dr.params;
      so.pdpg_trace = std::move(dr.trace);
      ParametricPolicy pol(so.params);
      so.summary.final_greedy_reward = greedy_reward(env.mdp, pol);
      so.summary.final_kl =
          so.pdpg_trace.empty() ? 0.0 : so.pdpg_trace.back().kl_estimate;
      RandomSource er(RandomSource(seed).substream(202).seed());
      std::vector<Trajectory> eval_batch = sample_batch(env.mdp, pol, er, 16);
      so.summary.final_entropy = entropy_estimate(pol, eval_batch);
      so.summary.lambda_final = dr.lambda;
      so.summary.zeta_final = 0.0;
      so.summary.iterations_to_entropy_below = -1;
      write_pdpg_trace_csv(metrics.string(), so.pdpg_trace);
    }
    save_policy(ckpt.string(), so.params);
    rows.push_back(so.summary);
    out.seeds.push_back(std::move(so));
  }

  aggregate(rows, out.mean, out.stddev);
  std::vector<SummaryRow> all = rows;
  all.push_back(out.mean);
  all.push_back(out.stddev);
  write_summary_csv((fs::path(out.output_dir) / "summary.csv").string(), all);
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary: " + path);
  out << "seed,greedy_reward,kl,entropy,lambda,zeta,iters_to_entropy_below\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const SummaryRow& r : rows)
    out << r.seed_label << ',' << fmt(r.final_greedy_reward) << ',' << fmt(r.final_kl)
        << ',' << fmt(r.final_entropy) << ',' << fmt(r.lambda_final) << ','
        << fmt(r.zeta_final) << ',' << fmt(r.iterations_to_entropy_below) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace crl
