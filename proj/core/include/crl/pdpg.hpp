#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crl/divergence.hpp"
#include "crl/mdp.hpp"
#include "crl/policy.hpp"

namespace crl {

/// Two-timescale step sizes alpha1(k) = a1/(1+k)^p1, alpha2(k) = a2/(1+k)^p2.
/// The constructor enforces the stochastic-approximation conditions:
/// divergent sums (p <= 1), square summability (p > 0.5), and the dual scale
/// being asymptotically slower (p2 > p1).
struct StepSchedule {
  double a1 = 0.05;
  double a2 = 0.05;
  double p1 = 0.6;
  double p2 = 0.9;

  StepSchedule() = default;
  StepSchedule(double a1_, double a2_, double p1_, double p2_);
  void validate() const;
  double alpha1(int k) const;
  double alpha2(int k) const;
};

struct PdpgConfig {
  int iterations = 5000;
  int batch_size = 16;
  double delta = 0.2;
  KlDirection direction = KlDirection::reverse;
  double lambda_init = 1.0;
  double lambda_max = 10.0;
  double theta_radius = 1e3;
  double discount = 1.0;
  StepSchedule schedule;
  // lambda_max doubles after this many consecutive iterations with lambda
  // within `boundary_margin` (relative) of lambda_max.
  int boundary_window = 200;
  double boundary_margin = 0.01;
  // Converged when both parameter and multiplier movement stay below the
  // tolerances for `convergence_window` consecutive iterations.
  int convergence_window = 200;
  double theta_tol = 1e-5;
  double lambda_tol = 1e-6;

  void validate() const;
};

/// Sampled update directions for one batch (drawn under the student).
/// theta_term is the descent direction multiplying alpha1; kl_estimate is the
/// constraint estimate whose excess over delta drives the multiplier.
struct DualUpdate {
  Eigen::VectorXd theta_term;
  double kl_estimate = 0.0;
};

DualUpdate pdpg_update_terms(const ParametricPolicy& student, const Policy& teacher,
                             const std::vector<Trajectory>& batch, double lambda,
                             double discount, KlDirection direction);

struct PdpgTraceRow {
  int iter = 0;
  double mean_reward = 0.0;
  double kl_estimate = 0.0;
  double lambda = 0.0;
  double grad_norm = 0.0;
  double lambda_max = 0.0;
};

struct PdpgResult {
  PolicyParams params;
  double lambda = 0.0;
  double lambda_max = 0.0;
  bool converged = false;
  int iterations_run = 0;
  std::vector<PdpgTraceRow> trace;
};

PdpgResult run_pdpg(const MdpSpec& mdp, const PolicyParams& init, const Policy& teacher,
                    const PdpgConfig& cfg, std::uint64_t seed);

void write_pdpg_trace_csv(const std::string& path, const std::vector<PdpgTraceRow>& trace);

}  // namespace crl
