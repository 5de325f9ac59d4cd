#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "crl/mdp.hpp"

namespace crl {

/// A stochastic stationary policy over a finite MDP's non-terminal states.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int action_count() const = 0;
  /// Probabilities over actions at state x; sums to 1.
  virtual Eigen::VectorXd action_probs(StateId x) const = 0;

  /// log pi(a|x); -infinity when the probability is zero.
  double log_prob(StateId x, ActionId a) const;
  ActionId sample_action(StateId x, RandomSource& rng) const;
  /// Argmax action; lowest index wins ties.
  ActionId greedy_action(StateId x) const;
};

/// Dense per-state action probability table.
class TablePolicy : public Policy {
 public:
  TablePolicy() = default;
  explicit TablePolicy(Eigen::MatrixXd probs);  // rows: states, cols: actions
  static TablePolicy uniform(int state_count, int action_count);

  int action_count() const override;
  Eigen::VectorXd action_probs(StateId x) const override;
  int state_count() const { return static_cast<int>(probs_.rows()); }
  const Eigen::MatrixXd& table() const { return probs_; }
  Eigen::MatrixXd& table() { return probs_; }

 private:
  Eigen::MatrixXd probs_;
};

/// Writes/reads a table policy as text with round-trip exact doubles.
void save_table_policy(const std::string& path, const TablePolicy& pi);
TablePolicy load_table_policy(const std::string& path);

enum class Arch { tabular, linear, mlp };
std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

/// Differentiable softmax policy parameters. States are one-hot encoded;
/// logits are divided by `temperature` before the softmax.
///   tabular: one logit parameter per (state, action)
///   linear:  logits = W x + b
///   mlp:     logits = W3 tanh(W2 tanh(W1 x + b1) + b2) + b3
struct PolicyParams {
  Arch arch = Arch::tabular;
  std::int32_t state_count = 0;
  std::int32_t action_count = 0;
  std::int32_t hidden1 = 64;  // mlp only
  std::int32_t hidden2 = 64;  // mlp only
  double temperature = 1.0;
  Eigen::VectorXd theta;

  std::int64_t param_count() const { return theta.size(); }
  static std::int64_t param_count_for(Arch arch, int state_count, int action_count,
                                      int hidden1, int hidden2);
};

/// Uniform(-0.05, 0.05) initialization of all parameters.
PolicyParams init_policy(Arch arch, int state_count, int action_count,
                         double temperature, RandomSource& rng,
                         int hidden1 = 64, int hidden2 = 64);

/// Cached forward pass at one state.
struct StateEval {
  Eigen::VectorXd h1, h2;     // post-tanh hidden activations (mlp only)
  Eigen::VectorXd logits;     // raw logits, before temperature scaling
  Eigen::VectorXd probs;      // softmax(logits / temperature)
};

class ParametricPolicy : public Policy {
 public:
  explicit ParametricPolicy(PolicyParams params);

  int action_count() const override { return params_.action_count; }
  Eigen::VectorXd action_probs(StateId x) const override;

  StateEval eval(StateId x) const;
  /// Reverse-mode accumulation: given dL/d(raw logits) at state x, add
  /// dL/dtheta into `grad` (size param_count).
  void backward(StateId x, const StateEval& ev, const Eigen::VectorXd& dlogits,
                Eigen::VectorXd& grad) const;
  /// Gradient of log pi(a|x) with respect to theta.
  Eigen::VectorXd grad_log_prob(StateId x, ActionId a) const;

  const PolicyParams& params() const { return params_; }
  PolicyParams& params() { return params_; }

 private:
  PolicyParams params_;
};

/// Projection of theta onto the Euclidean ball of the given radius
/// (rescales when the norm exceeds it).
void project_theta(Eigen::VectorXd& theta, double radius = 1e3);

/// Versioned binary checkpoint with a magic header; round-trips bit-exactly.
void save_policy(const std::string& path, const PolicyParams& params);
PolicyParams load_policy(const std::string& path);

/// dL/d(raw logits) helpers. All include the 1/temperature chain factor.
/// For log pi(a|x): (e_a - p) / temperature.
Eigen::VectorXd dlogits_log_prob(const StateEval& ev, ActionId a, double temperature);
/// For KL(teacher || student) at one state: -(t - p) / temperature.
Eigen::VectorXd dlogits_kl_forward(const StateEval& ev, const Eigen::VectorXd& teacher,
                                   double temperature);
/// For KL(student || teacher) at one state: p .* (log(p/t) - kl) / temperature.
Eigen::VectorXd dlogits_kl_reverse(const StateEval& ev, const Eigen::VectorXd& teacher,
                                   double temperature);
/// For the student's action entropy at one state: -p .* (log p + ent) / temperature.
Eigen::VectorXd dlogits_entropy(const StateEval& ev, double temperature);
/// For the Hellinger distance at one state.
Eigen::VectorXd dlogits_hellinger(const StateEval& ev, const Eigen::VectorXd& teacher,
                                  double temperature);

}  // namespace crl
