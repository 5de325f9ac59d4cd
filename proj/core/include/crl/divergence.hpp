#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "crl/mdp.hpp"
#include "crl/policy.hpp"

namespace crl {

/// Direction convention used everywhere: APIs take (student, teacher);
///   forward  = D(teacher || student), the mass-covering direction;
///   reverse  = D(student || teacher), the mode-seeking direction.
enum class KlDirection { forward, reverse };
std::string kl_direction_name(KlDirection d);
KlDirection kl_direction_from_name(const std::string& name);

/// KL(p || q) for one action distribution, with 0 * log(0/q) == 0.
/// Throws InfiniteDivergenceError when p puts mass where q has none.
double kl_step_state(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Shannon entropy of one action distribution.
double entropy_state(const Eigen::VectorXd& p);

/// Hellinger distance sqrt(0.5 * sum (sqrt(p)-sqrt(q))^2); always finite.
double hellinger_step(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Nearest-rank percentile: the ceil(rho/100 * n)-th smallest value.
/// rho must lie in (0, 100].
double percentile_nearest_rank(const std::vector<double>& values, double rho);

enum class ClipSemantics {
  cap,         // value := min(value, percentile)
  literal_max  // value := max(percentile, value), the verbatim formula
};
enum class ClipGrouping { batch, per_timestep };

struct ClipConfig {
  bool enabled = false;
  double rho = 100.0;
  ClipSemantics semantics = ClipSemantics::cap;
  ClipGrouping grouping = ClipGrouping::batch;
};

/// Clipped values plus, for each entry, the index of the entry whose
/// underlying quantity now carries its gradient (itself when unclipped, the
/// percentile-owning entry when clipped). Treats `values` as one group.
struct ClipResult {
  std::vector<double> values;
  std::vector<int> owner;
};
ClipResult apply_clip(const std::vector<double>& values, const ClipConfig& clip);

enum class StepNorm { h_minus_1, h };

struct StepKlOptions {
  KlDirection direction = KlDirection::forward;
  bool normalize = true;        // per-trajectory 1/(H-1) (or 1/H) factor
  StepNorm norm = StepNorm::h_minus_1;  // trajectories with H < 2 use factor 1
  ClipConfig clip;
};

/// Step-wise KL estimate over the states visited by `batch`: mean over
/// trajectories of the (optionally normalized) sum of per-state KLs, with
/// optional percentile clipping. Unnormalized and with the batch drawn from
/// the divergence's distribution side, this is unbiased for the trajectory
/// KL; along the student's own trajectories it is the training surrogate.
double kl_step_estimate(const Policy& student, const Policy& teacher,
                        const std::vector<Trajectory>& batch,
                        const StepKlOptions& opts);

/// Step-wise entropy of the student along its own trajectories, with the
/// same normalization convention as kl_step_estimate (never clipped).
double entropy_estimate(const Policy& student, const std::vector<Trajectory>& batch,
                        bool normalize = true, StepNorm norm = StepNorm::h_minus_1);

/// Trajectory-wise Monte Carlo KL: the mean log-ratio over a batch drawn
/// from the divergence's distribution side (student for reverse, teacher for
/// forward). Throws InfiniteDivergenceError when a sampled path leaves the
/// other policy's support.
double kl_trajectory_mc(const Policy& student, const Policy& teacher,
                        const std::vector<Trajectory>& batch, KlDirection direction);

/// Exact trajectory KL by enumeration (environment terms cancel).
double kl_trajectory_exact(const MdpSpec& mdp, const Policy& student,
                           const Policy& teacher, KlDirection direction,
                           std::int64_t cap = 10'000'000);

/// Visitation-weight normalization for occupancy-based bounds.
enum class OccupancyNorm {
  expected_horizon,  // expected visits / E[H]; terminal excluded
  horizon_cap        // averaged-over-time with absorbing terminal, / H_max
};

/// Checks trajectory-KL(teacher||student) <= scale * step-KL mixed under the
/// teacher's visitation distribution, both sides exact. The scale is E[H]
/// (an equality, by the tower property) or the horizon cap (a bound).
struct StepBoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};
StepBoundReport check_step_bound(const MdpSpec& mdp, const Policy& student,
                                 const Policy& teacher,
                                 OccupancyNorm norm = OccupancyNorm::expected_horizon);

/// One benchmark measurement row; `value` is a single estimate and
/// `abs_error` its distance to the enumerated exact value.
struct KlBenchRow {
  int sample_count = 0;
  std::string estimator;  // "trajectory" or "step"
  std::string direction;  // "forward"
  double value = 0.0;
  double exact_value = 0.0;
  double abs_error = 0.0;
};

/// Runs both estimators for `repeats` independent batches at each sample
/// count; estimators share batches so rows are paired.
std::vector<KlBenchRow> run_kl_bench(const MdpSpec& mdp, const Policy& student,
                                     const Policy& teacher,
                                     const std::vector<int>& sample_counts,
                                     int repeats, const RandomSource& root);

void write_kl_bench_csv(const std::string& path, const std::vector<KlBenchRow>& rows);

}  // namespace crl
