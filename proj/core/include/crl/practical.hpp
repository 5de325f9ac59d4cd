#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crl/divergence.hpp"
#include "crl/mdp.hpp"
#include "crl/policy.hpp"

namespace crl {

/// Adaptive-moment optimizer state (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
struct AdamState {
  Eigen::VectorXd m, v;
  std::int64_t t = 0;

  explicit AdamState(std::int64_t n)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

void adam_step(Eigen::VectorXd& x, AdamState& state, const Eigen::VectorXd& grad,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Small value network V(x): one-hot state -> tanh(h1) -> tanh(h2) -> scalar.
class ValueNet {
 public:
  ValueNet(int state_count, int hidden1 = 64, int hidden2 = 64);
  static ValueNet init(int state_count, RandomSource& rng, int hidden1 = 64,
                       int hidden2 = 64);

  struct Eval {
    Eigen::VectorXd h1, h2;
    double v = 0.0;
  };
  Eval eval(StateId x) const;
  double value(StateId x) const { return eval(x).v; }
  void backward(StateId x, const Eval& ev, double dv, Eigen::VectorXd& grad) const;

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }
  int state_count() const { return state_count_; }
  int hidden1() const { return h1_; }
  int hidden2() const { return h2_; }

 private:
  int state_count_, h1_, h2_;
  Eigen::VectorXd theta_;
};

void save_value_net(const std::string& path, const ValueNet& net);
ValueNet load_value_net(const std::string& path);

/// One sub-trajectory: the suffix of trajectory `traj` starting at step
/// `start`, with its origin state and discounted suffix cost.
struct SubTrajectory {
  int traj = 0;
  int start = 0;
  StateId origin = 0;
  double suffix_cost = 0.0;
};

/// One sub-trajectory per visited non-terminal state of each trajectory.
std::vector<SubTrajectory> extract_subtrajectories(const std::vector<Trajectory>& batch,
                                                   double discount);

enum class DistanceMode { kl, hellinger };
std::string distance_name(DistanceMode d);
DistanceMode distance_from_name(const std::string& name);

struct PracticalConfig {
  int iterations = 20000;
  int batch_size = 16;
  double delta = 0.2;
  double delta_entropy = 0.02;
  KlDirection direction = KlDirection::forward;
  DistanceMode distance = DistanceMode::kl;
  ClipConfig clip;
  bool normalize_step = true;
  StepNorm norm = StepNorm::h_minus_1;
  double lr = 1e-3;
  double lr_dual = 1e-3;        // lambda and zeta step size
  bool dual_lr_decay = false;   // optional exponential decay of lr_dual
  double dual_lr_decay_rate = 0.9995;
  double lambda_init = 1.0;
  double zeta_init = 1.0;
  double lambda_max = 10.0;
  double zeta_min = -5.0;
  double zeta_max = 5.0;
  double zeta_expand = 5.0;     // additive interval growth at the boundary
  int boundary_window = 200;
  double boundary_margin = 0.01;
  double discount = 1.0;
  int critic_steps = 1;
  double theta_radius = 1e3;

  void validate() const;
};

/// Value and theta-gradient of the full practical loss on a fixed batch:
///   (1/|T|) sum_j,t logP(tau_jt) (J_jt - V(x_jt))
///   + lambda (Dhat - delta) + zeta (ent_hat - delta_ent)
/// The gradient treats returns, critic values, lambda and zeta as constants;
/// percentile clipping routes clipped entries' gradients to the
/// percentile-owning state, so the gradient is exact for the reported value.
struct LossReport {
  double total = 0.0;
  double pg = 0.0;
  double kl_term = 0.0;
  double ent_term = 0.0;
  double kl_value = 0.0;   // Dhat, the clipped step-wise divergence estimate
  double ent_value = 0.0;  // ent_hat
  Eigen::VectorXd theta_grad;
};

LossReport practical_loss(const ParametricPolicy& student, const Policy& teacher,
                          const ValueNet& critic, const std::vector<Trajectory>& batch,
                          double lambda, double zeta, const PracticalConfig& cfg);

/// One adaptive-moment step of the critic on the squared error against
/// sub-trajectory suffix costs.
void critic_update(ValueNet& critic, AdamState& state,
                   const std::vector<SubTrajectory>& subs, double lr);

struct PracticalTraceRow {
  int iter = 0;
  double mean_train_reward = 0.0;
  double greedy_reward = 0.0;
  double kl_step = 0.0;
  double entropy = 0.0;
  double lambda = 0.0;
  double zeta = 0.0;
  double loss_pg = 0.0;
  double loss_kl = 0.0;
  double loss_ent = 0.0;
};

struct PracticalResult {
  PolicyParams params;
  Eigen::VectorXd critic_params;
  double lambda = 0.0;
  double zeta = 0.0;
  double lambda_max = 0.0;
  double zeta_min = 0.0;
  double zeta_max = 0.0;
  std::vector<PracticalTraceRow> trace;
};

PracticalResult run_practical(const MdpSpec& mdp, const PolicyParams& init,
                              const ValueNet& critic_init, const Policy& teacher,
                              const PracticalConfig& cfg, std::uint64_t seed);

/// Undiscounted total reward of the argmax rollout from the start state.
double greedy_reward(const MdpSpec& mdp, const Policy& pi);

void write_practical_trace_csv(const std::string& path,
                               const std::vector<PracticalTraceRow>& trace);

}  // namespace crl
