#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "crl/envs.hpp"
#include "crl/oracle.hpp"
#include "crl/policy.hpp"
#include "crl/rng.hpp"

using namespace crl;

namespace {

/// Coin-flip bandit: state 0, action 0 terminates at cost 1, action 1
/// terminates at cost 3. Expected cost under pi is 1*p + 3*(1-p).
MdpSpec bandit() {
  MdpSpec m;
  m.state_count = 1;
  m.action_count = 2;
  m.initial = {1.0};
  m.outcomes = {{{{1, 1.0}}, {{1, 1.0}}}};
  m.step_cost = {{1.0, 3.0}};
  m.horizon_cap = 3;
  m.validate();
  return m;
}

MdpSpec two_state_mdp() {
  MdpSpec m;
  m.state_count = 2;
  m.action_count = 2;
  m.initial = {0.75, 0.25};
  m.outcomes = {
      {{{1, 1.0}}, {{2, 1.0}}},
      {{{2, 1.0}}, {{0, 0.5}, {2, 0.5}}},
  };
  m.step_cost = {{1.0, 2.0}, {-1.0, 0.5}};
  m.horizon_cap = 6;
  m.validate();
  return m;
}

TablePolicy table2(double p00, double p10) {
  Eigen::MatrixXd t(2, 2);
  t << p00, 1.0 - p00, p10, 1.0 - p10;
  return TablePolicy(t);
}

ParametricPolicy random_parametric(Arch arch, const MdpSpec& mdp, std::uint64_t seed,
                                   double temperature = 1.0) {
  RandomSource rng(seed);
  return ParametricPolicy(
      init_policy(arch, mdp.state_count, mdp.action_count, temperature, rng, 8, 8));
}

double rel_norm_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1e-12, b.norm());
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("bandit value is the probability mixture of the two arms") {
  MdpSpec m = bandit();
  Eigen::MatrixXd t(1, 2);
  t << 0.25, 0.75;
  TablePolicy pi(t);
  CHECK(exact_value(m, pi) == doctest::Approx(0.25 * 1.0 + 0.75 * 3.0).epsilon(1e-12));

  EnumerationTable table = enumerate_distribution(m, pi);
  REQUIRE(table.entries.size() == 2);
  CHECK(table.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  for (const EnumEntry& e : table.entries) {
    REQUIRE(e.traj.actions.size() == 1);
    double p = e.traj.actions[0] == 0 ? 0.25 : 0.75;
    CHECK(e.prob == doctest::Approx(p).epsilon(1e-12));
    CHECK(e.policy_log_prob == doctest::Approx(std::log(p)).epsilon(1e-12));
    CHECK(e.cost == doctest::Approx(e.traj.actions[0] == 0 ? 1.0 : 3.0));
  }
}

TEST_CASE("enumeration covers the branching chain exactly once per path") {
  MdpSpec m = two_state_mdp();
  TablePolicy pi = table2(0.5, 0.5);
  EnumerationTable table = enumerate_distribution(m, pi);
  CHECK(table.total_mass() == doctest::Approx(1.0).epsilon(1e-12));

  // Paths must be distinct as (state, action) sequences.
  std::set<std::vector<int>> seen;
  for (const EnumEntry& e : table.entries) {
    std::vector<int> key;
    for (std::size_t i = 0; i < e.traj.actions.size(); ++i) {
      key.push_back(static_cast<int>(e.traj.states[i]));
      key.push_back(static_cast<int>(e.traj.actions[i]));
    }
    CHECK(seen.insert(key).second);
  }

  // Expected cost from the table agrees with the closed-form recursion.
  double mix = 0.0;
  for (const EnumEntry& e : table.entries) mix += e.prob * e.cost;
  CHECK(mix == doctest::Approx(exact_value(m, pi)).epsilon(1e-12));

  CHECK_THROWS_AS(enumerate_distribution(m, pi, 3), ConfigError);
}

TEST_CASE("exact value matches a horizon-capped hand recursion") {
  MdpSpec m = two_state_mdp();
  TablePolicy pi = table2(0.8, 0.3);
  // Hand recursion over remaining-step budgets.
  // V_k(x): expected cost starting at x with k steps left.
  std::vector<double> v0(2, 0.0), v1(2, 0.0);
  for (int k = 1; k <= m.horizon_cap; ++k) {
    v1[0] = 0.8 * (1.0 + v0[1]) + 0.2 * 2.0;
    v1[1] = 0.3 * (-1.0) + 0.7 * (0.5 + 0.5 * v0[0]);
    v0 = v1;
  }
  double expected = 0.75 * v0[0] + 0.25 * v0[1];
  CHECK(exact_value(m, pi) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exact KL agrees with the per-path log-ratio mixture") {
  MdpSpec m = two_state_mdp();
  TablePolicy student = table2(0.85, 0.4);
  TablePolicy teacher = table2(0.6, 0.7);

  EnumerationTable st = enumerate_distribution(m, student);
  double manual = 0.0;
  for (const EnumEntry& e : st.entries) {
    double lp_t = 0.0;
    for (std::size_t i = 0; i < e.traj.actions.size(); ++i)
      lp_t += teacher.log_prob(e.traj.states[i], e.traj.actions[i]);
    manual += e.prob * (e.policy_log_prob - lp_t);
  }
  CHECK(exact_kl(m, student, teacher, KlDirection::reverse) ==
        doctest::Approx(manual).epsilon(1e-12));

  CHECK(exact_kl(m, student, student, KlDirection::forward) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(exact_kl(m, student, teacher, KlDirection::forward) > 0.0);
}

TEST_CASE("lagrangian gradient matches finite differences of the exact objective") {
  MdpSpec m = two_state_mdp();
  const double lambda = 0.7;
  for (KlDirection dir : {KlDirection::reverse, KlDirection::forward}) {
    for (Arch arch : {Arch::tabular, Arch::mlp}) {
      ParametricPolicy student = random_parametric(arch, m, 31 + static_cast<int>(arch));
      TablePolicy teacher = table2(0.6, 0.7);
      Eigen::VectorXd analytic =
          exact_lagrangian_grad(m, student, teacher, lambda, dir);

      auto objective = [&](const PolicyParams& q) {
        ParametricPolicy pi(q);
        return exact_value(m, pi) + lambda * exact_kl(m, pi, teacher, dir);
      };
      Eigen::VectorXd numeric(student.params().theta.size());
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < numeric.size(); ++i) {
        PolicyParams plus = student.params();
        plus.theta(i) += h;
        PolicyParams minus = student.params();
        minus.theta(i) -= h;
        numeric(i) = (objective(plus) - objective(minus)) / (2.0 * h);
      }
      CHECK(rel_norm_err(analytic, numeric) < 1e-6);
    }
  }
}

TEST_CASE("reverse update expectation is the lagrangian gradient itself") {
  MdpSpec m = two_state_mdp();
  ParametricPolicy student = random_parametric(Arch::tabular, m, 47);
  TablePolicy teacher = table2(0.6, 0.7);
  Eigen::VectorXd grad =
      exact_lagrangian_grad(m, student, teacher, 0.7, KlDirection::reverse);
  Eigen::VectorXd update =
      exact_update_expectation(m, student, teacher, 0.7, KlDirection::reverse);
  CHECK(rel_norm_err(update, grad) < 1e-12);

  // The forward-direction update is a different integrand but still a
  // descent-compatible estimate: it must agree with the gradient when the
  // student equals the teacher (the IS correction collapses).
  ParametricPolicy matched = random_parametric(Arch::tabular, m, 48);
  Eigen::VectorXd g_fwd = exact_lagrangian_grad(m, matched, matched, 0.7,
                                                KlDirection::forward);
  Eigen::VectorXd u_fwd = exact_update_expectation(m, matched, matched, 0.7,
                                                   KlDirection::forward);
  CHECK(rel_norm_err(u_fwd, g_fwd) < 1e-9);
}

TEST_CASE("state distribution sums to one and weights the terminal slot correctly") {
  MdpSpec m = two_state_mdp();
  TablePolicy pi = table2(0.8, 0.3);
  std::vector<double> occ_eh = exact_state_distribution(m, pi, OccupancyNorm::expected_horizon);
  REQUIRE(occ_eh.size() == 3);
  CHECK(occ_eh[2] == 0.0);  // terminal excluded
  CHECK(occ_eh[0] + occ_eh[1] == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> occ_cap = exact_state_distribution(m, pi, OccupancyNorm::horizon_cap);
  REQUIRE(occ_cap.size() == 3);
  CHECK(occ_cap[0] + occ_cap[1] + occ_cap[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(occ_cap[2] > 0.0);  // absorbing terminal keeps mass under the cap norm

  // Expected-horizon weights are visit counts / E[H]: recover visit counts.
  double eh = expected_horizon(m, pi);
  EnumerationTable table = enumerate_distribution(m, pi);
  double visits0 = 0.0, horizon = 0.0;
  for (const EnumEntry& e : table.entries) {
    horizon += e.prob * static_cast<double>(e.traj.actions.size());
    for (std::size_t i = 0; i < e.traj.actions.size(); ++i)
      if (e.traj.states[i] == 0) visits0 += e.prob;
  }
  CHECK(eh == doctest::Approx(horizon).epsilon(1e-12));
  CHECK(occ_eh[0] == doctest::Approx(visits0 / eh).epsilon(1e-12));
}

TEST_CASE("bandit horizon is exactly one step") {
  MdpSpec m = bandit();
  Eigen::MatrixXd t(1, 2);
  t << 0.5, 0.5;
  CHECK(expected_horizon(m, TablePolicy(t)) == doctest::Approx(1.0).epsilon(1e-12));
}

}  // TEST_SUITE
