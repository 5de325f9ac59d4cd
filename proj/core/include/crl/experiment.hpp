#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crl/pdpg.hpp"
#include "crl/policy.hpp"
#include "crl/practical.hpp"

namespace crl {

enum class InitKind { uniform, pretrained, teacher };
std::string init_name(InitKind k);
InitKind init_from_name(const std::string& name);

/// A reproducible multi-seed experiment. Off-disk defaults match the
/// square-wave setup; everything is overridable from a JSON config file and
/// again from command line flags (flags > file > defaults).
struct ExperimentConfig {
  std::string name = "experiment";
  /// square_wave_determined | square_wave_less_confident | wall_leap | grid
  std::string env = "square_wave_determined";
  std::string grid_path;           // env == "grid"
  std::string teacher_table_path;  // env == "grid"
  std::string algorithm = "practical";  // practical | pdpg
  Arch arch = Arch::mlp;
  double temperature = 5.0;
  InitKind init = InitKind::pretrained;
  int pretrain_iterations = 6000;
  int distill_iterations = 3000;
  /// Wall-leap reference policy: explicit checkpoint path, or (when empty)
  /// a cached network trained on demand on the solid grid when
  /// `train_teacher` allows it.
  std::string teacher_ckpt;
  bool train_teacher = true;
  int teacher_iterations = 12000;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "out";
  PracticalConfig practical;
  PdpgConfig pdpg;

  void validate() const;  // throws ConfigError with field-specific messages
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::string& origin = "<config>");
void save_experiment_config(const std::string& path, const ExperimentConfig& cfg);

/// Output root resolution: $CRL_OUTPUT_ROOT, when set, is prepended to
/// relative output directories.
std::string resolve_output_dir(const ExperimentConfig& cfg);

struct SummaryRow {
  std::string seed_label;  // seed number, or "mean"/"std" in aggregate rows
  double final_greedy_reward = 0.0;
  double final_kl = 0.0;
  double final_entropy = 0.0;
  double lambda_final = 0.0;
  double zeta_final = 0.0;
  double iterations_to_entropy_below = -1;  // threshold 0.05; -1 when never
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  PolicyParams params;
  std::vector<PracticalTraceRow> trace;       // practical runs
  std::vector<PdpgTraceRow> pdpg_trace;       // pdpg runs
  SummaryRow summary;
};

struct ExperimentOutcome {
  std::string output_dir;
  std::vector<SeedOutcome> seeds;
  SummaryRow mean;
  SummaryRow stddev;
};

/// Runs every seed, writes per-seed metric CSVs and checkpoints plus a
/// summary.csv with mean/std aggregate rows. Reruns with the same config and
/// seeds produce byte-identical CSVs.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);

}  // namespace crl
