#include "crl/oracle.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace crl {

double EnumerationTable::total_mass() const {
  double m = 0.0;
  for (const EnumEntry& e : entries) m += e.prob;
  return m;
}

namespace {

void check_enumeration_bound(const MdpSpec& mdp, std::int64_t cap) {
  std::int64_t max_branch = 1;
  for (StateId s = 0; s < mdp.state_count; ++s)
    for (ActionId a = 0; a < mdp.action_count; ++a) {
      std::int64_t b = 0;
      for (const Transition& tr : mdp.outcomes[s][a])
        if (tr.prob > 0.0) ++b;
      if (b > max_branch) max_branch = b;
    }
  long double bound = 0;
  for (double p : mdp.initial)
    if (p > 0.0) bound += 1;
  for (std::int32_t t = 0; t < mdp.horizon_cap; ++t) {
    bound *= static_cast<long double>(mdp.action_count) * max_branch;
    if (bound > static_cast<long double>(cap))
      throw ConfigError("enumeration: size bound exceeds cap; the instance is "
                        "too large for exact treatment");
  }
}

struct EnumRec {
  const MdpSpec& mdp;
  const Policy& pi;
  std::vector<Eigen::VectorXd> probs;  // per-state cache
  std::vector<EnumEntry>& out;

  EnumRec(const MdpSpec& m, const Policy& p, std::vector<EnumEntry>& o)
      : mdp(m), pi(p), out(o) {
    probs.reserve(m.state_count);
    for (StateId s = 0; s < m.state_count; ++s) probs.push_back(pi.action_probs(s));
  }

  void walk(Trajectory& tau, StateId x, std::int32_t t, double prob, double plogp) {
    if (mdp.is_terminal(x) || t == mdp.horizon_cap) {
      EnumEntry e;
      e.traj = tau;
      e.traj.truncated = !mdp.is_terminal(x);
      e.prob = prob;
      e.policy_log_prob = plogp;
      e.cost = discounted_cost(tau, mdp.discount);
      out.push_back(std::move(e));
      return;
    }
    const Eigen::VectorXd& pr = probs[x];
    for (ActionId a = 0; a < mdp.action_count; ++a) {
      double pa = pr(a);
      if (pa <= 0.0) continue;
      for (const Transition& tr : mdp.outcomes[x][a]) {
        if (tr.prob <= 0.0) continue;
        tau.actions.push_back(a);
        tau.costs.push_back(mdp.step_cost[x][a]);
        tau.states.push_back(tr.next);
        walk(tau, tr.next, t + 1, prob * pa * tr.prob, plogp + std::log(pa));
        tau.actions.pop_back();
        tau.costs.pop_back();
        tau.states.pop_back();
      }
    }
  }
};

}  // namespace

EnumerationTable enumerate_distribution(const MdpSpec& mdp, const Policy& pi,
                                        std::int64_t cap) {
  check_enumeration_bound(mdp, cap);
  EnumerationTable table;
  EnumRec rec(mdp, pi, table.entries);
  for (StateId s0 = 0; s0 < mdp.state_count; ++s0) {
    if (mdp.initial[s0] <= 0.0) continue;
    Trajectory tau;
    tau.states.push_back(s0);
    rec.walk(tau, s0, 0, mdp.initial[s0], 0.0);
  }
  return table;
}

double exact_value(const MdpSpec& mdp, const Policy& pi) {
  EnumerationTable table = enumerate_distribution(mdp, pi);
  double v = 0.0;
  for (const EnumEntry& e : table.entries) v += e.prob * e.cost;
  return v;
}

double exact_kl(const MdpSpec& mdp, const Policy& student, const Policy& teacher,
                KlDirection direction, std::int64_t cap) {
  const Policy& sampler = direction == KlDirection::reverse
                              ? student
                              : teacher;
  const Policy& other = direction == KlDirection::reverse
                            ? static_cast<const Policy&>(teacher)
                            : static_cast<const Policy&>(student);
  EnumerationTable table = enumerate_distribution(mdp, sampler, cap);
  double kl = 0.0;
  for (const EnumEntry& e : table.entries) {
    LogProb lp = trajectory_log_prob(other, e.traj);
    if (!lp.defined)
      throw InfiniteDivergenceError(
          "exact_kl: support violation; the divergence is infinite");
    kl += e.prob * (e.policy_log_prob - lp.value);
  }
  return kl;
}

namespace {

/// Accumulates sum over entries of prob * coef(entry) * grad log P(traj).
Eigen::VectorXd weighted_score_gradient(
    const ParametricPolicy& student, const EnumerationTable& table,
    const std::vector<double>& coef) {
  const double temp = student.params().temperature;
  std::unordered_map<StateId, StateEval> evals;
  std::unordered_map<StateId, Eigen::VectorXd> dlogits;
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const EnumEntry& e = table.entries[i];
    double c = e.prob * coef[i];
    if (c == 0.0) continue;
    for (std::int32_t t = 0; t < e.traj.horizon(); ++t) {
      StateId x = e.traj.states[t];
      ActionId a = e.traj.actions[t];
      auto it = evals.find(x);
      if (it == evals.end()) {
        it = evals.emplace(x, student.eval(x)).first;
        dlogits.emplace(x, Eigen::VectorXd::Zero(student.action_count()));
      }
      Eigen::VectorXd& d = dlogits[x];
      d -= (c / temp) * it->second.probs;
      d(a) += c / temp;
    }
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(student.params().theta.size());
  for (const auto& [x, d] : dlogits) student.backward(x, evals[x], d, grad);
  return grad;
}

std::vector<double> teacher_log_probs(const Policy& teacher, const EnumerationTable& table) {
  std::vector<double> out(table.entries.size());
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    LogProb lp = trajectory_log_prob(teacher, table.entries[i].traj);
    out[i] = lp.defined ? lp.value : -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

Eigen::VectorXd exact_lagrangian_grad(const MdpSpec& mdp, const ParametricPolicy& student,
                                      const Policy& teacher, double lambda,
                                      KlDirection direction, std::int64_t cap) {
  EnumerationTable table = enumerate_distribution(mdp, student, cap);
  std::vector<double> lphi = teacher_log_probs(teacher, table);
  std::vector<double> coef(table.entries.size());
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const EnumEntry& e = table.entries[i];
    if (direction == KlDirection::reverse) {
      if (!std::isfinite(lphi[i]))
        throw InfiniteDivergenceError(
            "exact_lagrangian_grad: teacher support violation");
      coef[i] = e.cost + lambda * (e.policy_log_prob - lphi[i]) + lambda;
    } else {
      double is = std::isfinite(lphi[i]) ? std::exp(lphi[i] - e.policy_log_prob) : 0.0;
      coef[i] = e.cost - lambda * is;
    }
  }
  return weighted_score_gradient(student, table, coef);
}

Eigen::VectorXd exact_update_expectation(const MdpSpec& mdp, const ParametricPolicy& student,
                                         const Policy& teacher, double lambda,
                                         KlDirection direction, std::int64_t cap) {
  if (direction == KlDirection::reverse)
    return exact_lagrangian_grad(mdp, student, teacher, lambda, direction, cap);
  EnumerationTable table = enumerate_distribution(mdp, student, cap);
  std::vector<double> lphi = teacher_log_probs(teacher, table);
  std::vector<double> coef(table.entries.size());
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const EnumEntry& e = table.entries[i];
    double isl = 0.0;
    if (std::isfinite(lphi[i])) {
      double lr = lphi[i] - e.policy_log_prob;
      isl = std::exp(lr) * lr;
    }
    coef[i] = e.cost + lambda * isl - lambda;
  }
  return weighted_score_gradient(student, table, coef);
}

namespace {

/// Alive-mass forward recursion; calls visit(t, alive) for t = 0..steps.
template <typename F>
void occupancy_walk(const MdpSpec& mdp, const Policy& pi, std::int32_t steps, F visit) {
  std::vector<Eigen::VectorXd> probs;
  probs.reserve(mdp.state_count);
  for (StateId s = 0; s < mdp.state_count; ++s) probs.push_back(pi.action_probs(s));
  std::vector<double> alive(mdp.initial);
  visit(0, alive);
  for (std::int32_t t = 1; t <= steps; ++t) {
    std::vector<double> next(mdp.state_count, 0.0);
    for (StateId x = 0; x < mdp.state_count; ++x) {
      if (alive[x] <= 0.0) continue;
      for (ActionId a = 0; a < mdp.action_count; ++a) {
        double pa = probs[x](a);
        if (pa <= 0.0) continue;
        for (const Transition& tr : mdp.outcomes[x][a]) {
          if (tr.prob <= 0.0 || mdp.is_terminal(tr.next)) continue;
          next[tr.next] += alive[x] * pa * tr.prob;
        }
      }
    }
    alive.swap(next);
    visit(t, alive);
  }
}

}  // namespace

double expected_horizon(const MdpSpec& mdp, const Policy& pi) {
  double eh = 0.0;
  occupancy_walk(mdp, pi, mdp.horizon_cap - 1, [&](std::int32_t, const std::vector<double>& alive) {
    for (double m : alive) eh += m;
  });
  return eh;
}

std::vector<double> exact_state_distribution(const MdpSpec& mdp, const Policy& pi,
                                             OccupancyNorm norm) {
  std::vector<double> out(mdp.state_count + 1, 0.0);
  if (norm == OccupancyNorm::expected_horizon) {
    occupancy_walk(mdp, pi, mdp.horizon_cap - 1,
                   [&](std::int32_t, const std::vector<double>& alive) {
                     for (StateId x = 0; x < mdp.state_count; ++x) out[x] += alive[x];
                   });
    double eh = 0.0;
    for (StateId x = 0; x < mdp.state_count; ++x) eh += out[x];
    if (eh > 0.0)
      for (StateId x = 0; x < mdp.state_count; ++x) out[x] /= eh;
    return out;
  }
  // horizon_cap: averaged over t = 0..H_max with the terminal absorbing.
  occupancy_walk(mdp, pi, mdp.horizon_cap,
                 [&](std::int32_t, const std::vector<double>& alive) {
                   double mass = 0.0;
                   for (StateId x = 0; x < mdp.state_count; ++x) {
                     out[x] += alive[x];
                     mass += alive[x];
                   }
                   out[mdp.state_count] += 1.0 - mass;
                 });
  for (double& v : out) v /= mdp.horizon_cap;
  return out;
}

void write_enumeration_csv(const std::string& path, const EnumerationTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write enumeration table: " + path);
  out << "actions,states,prob,policy_log_prob,cost\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const EnumEntry& e : table.entries) {
    for (std::size_t i = 0; i < e.traj.actions.size(); ++i) {
      if (i) out << '-';
      out << e.traj.actions[i];
    }
    out << ',';
    for (std::size_t i = 0; i < e.traj.states.size(); ++i) {
      if (i) out << '-';
      out << e.traj.states[i];
    }
    out << ',' << fmt(e.prob) << ',' << fmt(e.policy_log_prob) << ',' << fmt(e.cost)
        << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace crl
