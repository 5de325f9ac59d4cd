#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "crl/divergence.hpp"
#include "crl/mdp.hpp"
#include "crl/policy.hpp"

namespace crl {

/// One distinct trajectory with its exact probability under a policy
/// (initial distribution times policy steps times environment steps).
struct EnumEntry {
  Trajectory traj;
  double prob = 0.0;
  double policy_log_prob = 0.0;  // policy terms only
  double cost = 0.0;             // discounted cost J
};

struct EnumerationTable {
  std::vector<EnumEntry> entries;
  double total_mass() const;
};

/// Distinct-trajectory enumeration (no duplicate completions); probability
/// mass sums to 1. Refuses with ConfigError beyond `cap`.
EnumerationTable enumerate_distribution(const MdpSpec& mdp, const Policy& pi,
                                        std::int64_t cap = 10'000'000);

/// Exact expected discounted cost under the policy.
double exact_value(const MdpSpec& mdp, const Policy& pi);

/// Exact trajectory-distribution KL between student and teacher.
/// Throws InfiniteDivergenceError on support violation.
double exact_kl(const MdpSpec& mdp, const Policy& student, const Policy& teacher,
                KlDirection direction, std::int64_t cap = 10'000'000);

/// Exact gradient of the Lagrangian V(theta) + lambda * (KL - delta) with
/// respect to theta (the delta term has no gradient). The reverse direction
/// matches the expectation of the sampled update; the forward direction is
/// the true gradient E[grad logP * (J - lambda * IS)].
Eigen::VectorXd exact_lagrangian_grad(const MdpSpec& mdp, const ParametricPolicy& student,
                                      const Policy& teacher, double lambda,
                                      KlDirection direction,
                                      std::int64_t cap = 10'000'000);

/// Exact expectation of the sampled primal update direction used by the
/// trainer (reverse: identical to exact_lagrangian_grad; forward: the
/// appendix integrand J + lambda * IS * logratio - lambda).
Eigen::VectorXd exact_update_expectation(const MdpSpec& mdp, const ParametricPolicy& student,
                                         const Policy& teacher, double lambda,
                                         KlDirection direction,
                                         std::int64_t cap = 10'000'000);

/// State visitation weights under the policy, size state_count + 1 with the
/// terminal slot last (zero under expected_horizon normalization).
std::vector<double> exact_state_distribution(const MdpSpec& mdp, const Policy& pi,
                                             OccupancyNorm norm);

/// Expected first-hitting horizon E[H] (actions taken, cap included).
double expected_horizon(const MdpSpec& mdp, const Policy& pi);

void write_enumeration_csv(const std::string& path, const EnumerationTable& table);

}  // namespace crl
