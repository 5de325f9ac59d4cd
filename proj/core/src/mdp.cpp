#include "crl/mdp.hpp"

#include <cmath>
#include <limits>

#include "crl/policy.hpp"

namespace crl {

namespace {
constexpr double kProbTol = 1e-9;
}

void MdpSpec::validate() const {
  if (state_count <= 0) throw ConfigError("MdpSpec: state_count must be positive");
  if (action_count <= 0) throw ConfigError("MdpSpec: action_count must be positive");
  if (horizon_cap <= 0) throw ConfigError("MdpSpec: horizon_cap must be positive");
  if (discount <= 0.0 || discount > 1.0)
    throw ConfigError("MdpSpec: discount must be in (0, 1]");
  if (static_cast<std::int32_t>(initial.size()) != state_count)
    throw ConfigError("MdpSpec: initial distribution size mismatch");
  double mass = 0.0;
  for (double p : initial) {
    if (p < 0.0) throw ConfigError("MdpSpec: negative initial probability");
    mass += p;
  }
  if (std::abs(mass - 1.0) > kProbTol)
    throw ConfigError("MdpSpec: initial distribution does not sum to 1");
  if (static_cast<std::int32_t>(outcomes.size()) != state_count ||
      static_cast<std::int32_t>(step_cost.size()) != state_count)
    throw ConfigError("MdpSpec: table size mismatch");
  for (StateId s = 0; s < state_count; ++s) {
    if (static_cast<std::int32_t>(outcomes[s].size()) != action_count ||
        static_cast<std::int32_t>(step_cost[s].size()) != action_count)
      throw ConfigError("MdpSpec: per-state table size mismatch");
    for (ActionId a = 0; a < action_count; ++a) {
      double p = 0.0;
      for (const Transition& tr : outcomes[s][a]) {
        if (tr.prob < 0.0) throw ConfigError("MdpSpec: negative transition probability");
        if (tr.next < 0 || tr.next > state_count)
          throw ConfigError("MdpSpec: transition to unknown state");
        p += tr.prob;
      }
      if (std::abs(p - 1.0) > kProbTol)
        throw ConfigError("MdpSpec: transition probabilities do not sum to 1");
    }
  }
}

double discounted_cost(const Trajectory& tau, double discount) {
  double j = 0.0;
  double g = 1.0;
  for (double c : tau.costs) {
    j += g * c;
    g *= discount;
  }
  return j;
}

double total_reward(const Trajectory& tau) {
  double r = 0.0;
  for (double c : tau.costs) r -= c;
  return r;
}

namespace {

StateId sample_categorical(const std::vector<Transition>& branches, RandomSource& rng) {
  if (branches.size() == 1) return branches[0].next;
  double u = rng.uniform();
  double acc = 0.0;
  for (const Transition& tr : branches) {
    acc += tr.prob;
    if (u < acc) return tr.next;
  }
  return branches.back().next;
}

StateId sample_initial(const MdpSpec& mdp, RandomSource& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (StateId s = 0; s < mdp.state_count; ++s) {
    acc += mdp.initial[s];
    if (u < acc) return s;
  }
  for (StateId s = mdp.state_count - 1; s >= 0; --s)
    if (mdp.initial[s] > 0.0) return s;
  return 0;
}

}  // namespace

Trajectory sample_trajectory(const MdpSpec& mdp, const Policy& pi, RandomSource& rng) {
  Trajectory tau;
  StateId x = sample_initial(mdp, rng);
  tau.states.push_back(x);
  for (std::int32_t t = 0; t < mdp.horizon_cap; ++t) {
    if (mdp.is_terminal(x)) return tau;
    ActionId a = pi.sample_action(x, rng);
    tau.actions.push_back(a);
    tau.costs.push_back(mdp.step_cost[x][a]);
    x = sample_categorical(mdp.outcomes[x][a], rng);
    tau.states.push_back(x);
  }
  tau.truncated = !mdp.is_terminal(x);
  return tau;
}

std::vector<Trajectory> sample_batch(const MdpSpec& mdp, const Policy& pi,
                                     const RandomSource& root, int n) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RandomSource rng = root.substream(static_cast<std::uint64_t>(i));
    out.push_back(sample_trajectory(mdp, pi, rng));
  }
  return out;
}

LogProb trajectory_log_prob(const Policy& pi, const Trajectory& tau) {
  LogProb lp;
  for (std::int32_t t = 0; t < tau.horizon(); ++t) {
    double l = pi.log_prob(tau.states[t], tau.actions[t]);
    if (!std::isfinite(l)) {
      lp.value = -std::numeric_limits<double>::infinity();
      lp.defined = false;
      return lp;
    }
    lp.value += l;
  }
  return lp;
}

namespace {

void enumerate_rec(const MdpSpec& mdp, Trajectory& tau, StateId x, std::int32_t t,
                   std::vector<Trajectory>& out) {
  if (mdp.is_terminal(x)) {
    // Remaining action choices complete the sequence without changing the
    // induced trajectory; emit one copy per completion.
    std::int64_t copies = 1;
    for (std::int32_t u = t; u < mdp.horizon_cap; ++u) copies *= mdp.action_count;
    for (std::int64_t i = 0; i < copies; ++i) out.push_back(tau);
    return;
  }
  if (t == mdp.horizon_cap) {
    Trajectory cut = tau;
    cut.truncated = true;
    out.push_back(cut);
    return;
  }
  for (ActionId a = 0; a < mdp.action_count; ++a) {
    for (const Transition& tr : mdp.outcomes[x][a]) {
      if (tr.prob <= 0.0) continue;
      tau.actions.push_back(a);
      tau.costs.push_back(mdp.step_cost[x][a]);
      tau.states.push_back(tr.next);
      enumerate_rec(mdp, tau, tr.next, t + 1, out);
      tau.actions.pop_back();
      tau.costs.pop_back();
      tau.states.pop_back();
    }
  }
}

}  // namespace

std::vector<Trajectory> enumerate_trajectories(const MdpSpec& mdp, std::int64_t cap) {
  std::int64_t max_branch = 1;
  for (StateId s = 0; s < mdp.state_count; ++s)
    for (ActionId a = 0; a < mdp.action_count; ++a) {
      std::int64_t b = 0;
      for (const Transition& tr : mdp.outcomes[s][a])
        if (tr.prob > 0.0) ++b;
      if (b > max_branch) max_branch = b;
    }
  std::int64_t starts = 0;
  for (double p : mdp.initial)
    if (p > 0.0) ++starts;

  long double bound = static_cast<long double>(starts);
  for (std::int32_t t = 0; t < mdp.horizon_cap; ++t) {
    bound *= static_cast<long double>(mdp.action_count) * max_branch;
    if (bound > static_cast<long double>(cap))
      throw ConfigError("enumerate_trajectories: size bound exceeds cap; "
                        "reduce the horizon or the instance");
  }

  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(bound));
  for (StateId s0 = 0; s0 < mdp.state_count; ++s0) {
    if (mdp.initial[s0] <= 0.0) continue;
    Trajectory tau;
    tau.states.push_back(s0);
    enumerate_rec(mdp, tau, s0, 0, out);
  }
  return out;
}

}  // namespace crl
