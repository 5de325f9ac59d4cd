#pragma once

#include <cstdint>
#include <vector>

#include "crl/common.hpp"
#include "crl/rng.hpp"

namespace crl {

using StateId = std::int32_t;
using ActionId = std::int32_t;

class Policy;

struct Transition {
  StateId next = 0;
  double prob = 0.0;
};

/// Finite cost MDP with one absorbing terminal state and first-hitting
/// episodes: a trajectory ends on reaching the terminal state or after
/// `horizon_cap` steps, whichever comes first. Costs are incurred per step;
/// any "reward" reported by the tooling is the negated cost.
struct MdpSpec {
  std::int32_t state_count = 0;   // non-terminal states, ids 0..state_count-1
  std::int32_t action_count = 0;
  std::vector<double> initial;    // over non-terminal states, sums to 1
  /// outcomes[s][a]: support of P(.|s,a); `next` may be terminal_state().
  std::vector<std::vector<std::vector<Transition>>> outcomes;
  std::vector<std::vector<double>> step_cost;  // [s][a]
  double discount = 1.0;
  std::int32_t horizon_cap = 200;

  StateId terminal_state() const { return state_count; }
  bool is_terminal(StateId s) const { return s == state_count; }
  /// Throws ConfigError on inconsistent sizes, probabilities, or cap.
  void validate() const;
};

struct Trajectory {
  std::vector<StateId> states;    // x_0 .. x_H (last entry may be terminal)
  std::vector<ActionId> actions;  // a_0 .. a_{H-1}
  std::vector<double> costs;      // c_0 .. c_{H-1}
  bool truncated = false;         // stopped by the horizon cap, not by terminal

  std::int32_t horizon() const { return static_cast<std::int32_t>(actions.size()); }
};

/// Sum over steps of discount^t * cost_t.
double discounted_cost(const Trajectory& tau, double discount);

/// Undiscounted total reward (negated cost sum); the reporting convention.
double total_reward(const Trajectory& tau);

Trajectory sample_trajectory(const MdpSpec& mdp, const Policy& pi, RandomSource& rng);

/// n trajectories drawn from independent per-index substreams of `root`, so
/// the result is reproducible and independent of evaluation order.
std::vector<Trajectory> sample_batch(const MdpSpec& mdp, const Policy& pi,
                                     const RandomSource& root, int n);

struct LogProb {
  double value = 0.0;   // sum over steps of log pi(a_t | x_t); -inf when undefined
  bool defined = true;  // false when some step has zero probability under pi
};

/// Policy-only trajectory log-probability. Environment terms are omitted by
/// contract: they cancel in every probability ratio formed by this library.
LogProb trajectory_log_prob(const Policy& pi, const Trajectory& tau);

/// All trajectories induced by action sequences of length horizon_cap,
/// branching over the support of stochastic transitions and over the initial
/// distribution. Sequences that reach the terminal early contribute one entry
/// per completion of the remaining choices, so duplicates are retained (a 2x2
/// grid with cap 4 yields exactly 4^4 entries). Refuses with ConfigError when
/// the size bound exceeds `cap`.
std::vector<Trajectory> enumerate_trajectories(const MdpSpec& mdp,
                                               std::int64_t cap = 10'000'000);

}  // namespace crl
