#include "crl/pdpg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "crl/rng.hpp"

namespace crl {

StepSchedule::StepSchedule(double a1_, double a2_, double p1_, double p2_)
    : a1(a1_), a2(a2_), p1(p1_), p2(p2_) {
  validate();
}

void StepSchedule::validate() const {
  if (!(a1 > 0.0) || !(a2 > 0.0))
    throw ConfigError("step schedule: scales must be positive");
  if (!(p1 > 0.5))
    throw ConfigError("step schedule: primal exponent must exceed 0.5 for "
                      "square-summable steps");
  if (!(p2 > p1))
    throw ConfigError("step schedule: dual exponent must exceed the primal one "
                      "(two-timescale separation)");
  if (!(p2 <= 1.0))
    throw ConfigError("step schedule: dual exponent above 1 gives summable "
                      "steps and stalls the multiplier");
}

double StepSchedule::alpha1(int k) const { return a1 / std::pow(1.0 + k, p1); }
double StepSchedule::alpha2(int k) const { return a2 / std::pow(1.0 + k, p2); }

void PdpgConfig::validate() const {
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(delta >= 0.0)) throw ConfigError("divergence budget must be nonnegative");
  if (!(lambda_init >= 0.0)) throw ConfigError("multiplier init must be nonnegative");
  if (!(lambda_max > 0.0)) throw ConfigError("multiplier ceiling must be positive");
  if (!(theta_radius > 0.0)) throw ConfigError("parameter radius must be positive");
  if (!(discount > 0.0 && discount <= 1.0))
    throw ConfigError("discount must lie in (0, 1]");
  if (boundary_window <= 0 || convergence_window <= 0)
    throw ConfigError("streak windows must be positive");
  if (!(boundary_margin > 0.0 && boundary_margin < 1.0))
    throw ConfigError("boundary margin must lie in (0, 1)");
  if (!(theta_tol > 0.0) || !(lambda_tol > 0.0))
    throw ConfigError("convergence tolerances must be positive");
  schedule.validate();
}

DualUpdate pdpg_update_terms(const ParametricPolicy& student, const Policy& teacher,
                             const std::vector<Trajectory>& batch, double lambda,
                             double discount, KlDirection direction) {
  if (batch.empty()) throw ConfigError("policy update over an empty batch");
  const double temp = student.params().temperature;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  std::unordered_map<StateId, StateEval> evals;
  auto eval_of = [&](StateId x) -> const StateEval& {
    auto it = evals.find(x);
    if (it == evals.end()) it = evals.emplace(x, student.eval(x)).first;
    return it->second;
  };

  // Per-trajectory log probs under both policies.
  std::vector<double> lstu(batch.size()), ltea(batch.size());
  std::vector<bool> tea_def(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double ls = 0.0;
    for (std::int32_t t = 0; t < batch[i].horizon(); ++t) {
      double p = eval_of(batch[i].states[t]).probs(batch[i].actions[t]);
      ls += std::log(p);
    }
    lstu[i] = ls;
    LogProb lt = trajectory_log_prob(teacher, batch[i]);
    ltea[i] = lt.value;
    tea_def[i] = lt.defined;
  }

  DualUpdate du;
  double kl_acc = 0.0;
  std::vector<double> coef(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double cost = discounted_cost(batch[i], discount);
    if (direction == KlDirection::reverse) {
      if (!tea_def[i])
        throw InfiniteDivergenceError(
            "policy update: sampled path leaves the teacher's support");
      double lr = lstu[i] - ltea[i];
      coef[i] = cost + lambda * lr + lambda;
      kl_acc += lr;
    } else {
      double is = tea_def[i] ? std::exp(ltea[i] - lstu[i]) : 0.0;
      double isl = tea_def[i] ? is * (ltea[i] - lstu[i]) : 0.0;
      coef[i] = cost + lambda * isl - lambda;
      kl_acc += isl;
    }
  }
  du.kl_estimate = kl_acc * inv_n;

  std::unordered_map<StateId, Eigen::VectorXd> dlogits;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double w = coef[i] * inv_n;
    if (w == 0.0) continue;
    for (std::int32_t t = 0; t < batch[i].horizon(); ++t) {
      StateId x = batch[i].states[t];
      ActionId a = batch[i].actions[t];
      auto it = dlogits.find(x);
      if (it == dlogits.end())
        it = dlogits.emplace(x, Eigen::VectorXd::Zero(student.action_count())).first;
      it->second -= (w / temp) * eval_of(x).probs;
      it->second(a) += w / temp;
    }
  }
  du.theta_term = Eigen::VectorXd::Zero(student.params().theta.size());
  for (const auto& [x, d] : dlogits) student.backward(x, evals.at(x), d, du.theta_term);
  return du;
}

PdpgResult run_pdpg(const MdpSpec& mdp, const PolicyParams& init, const Policy& teacher,
                    const PdpgConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PdpgResult res;
  res.params = init;
  double lambda = cfg.lambda_init;
  double lambda_max = cfg.lambda_max;
  int boundary_streak = 0;
  int conv_streak = 0;
  RandomSource root(seed);

  for (int k = 0; k < cfg.iterations; ++k) {
    ParametricPolicy pol(res.params);
    RandomSource iter_stream = root.substream(static_cast<std::uint64_t>(k));
    std::vector<Trajectory> batch = sample_batch(mdp, pol, iter_stream, cfg.batch_size);
    DualUpdate du =
        pdpg_update_terms(pol, teacher, batch, lambda, cfg.discount, cfg.direction);

    double a1 = cfg.schedule.alpha1(k);
    double a2 = cfg.schedule.alpha2(k);
    Eigen::VectorXd theta_new = res.params.theta - a1 * du.theta_term;
    project_theta(theta_new, cfg.theta_radius);
    double dtheta = (theta_new - res.params.theta).lpNorm<Eigen::Infinity>();
    double lambda_new =
        std::clamp(lambda + a2 * (du.kl_estimate - cfg.delta), 0.0, lambda_max);
    double dlambda = std::abs(lambda_new - lambda);
    res.params.theta = std::move(theta_new);
    lambda = lambda_new;

    if (lambda >= lambda_max * (1.0 - cfg.boundary_margin)) {
      if (++boundary_streak >= cfg.boundary_window) {
        lambda_max *= 2.0;
        boundary_streak = 0;
      }
    } else {
      boundary_streak = 0;
    }

    double mean_reward = 0.0;
    for (const Trajectory& tau : batch) mean_reward += total_reward(tau);
    mean_reward /= static_cast<double>(batch.size());
    res.trace.push_back({k, mean_reward, du.kl_estimate, lambda,
                         du.theta_term.norm(), lambda_max});

    res.iterations_run = k + 1;
    if (dtheta < cfg.theta_tol && dlambda < cfg.lambda_tol) {
      if (++conv_streak >= cfg.convergence_window) {
        res.converged = true;
        break;
      }
    } else {
      conv_streak = 0;
    }
  }
  res.lambda = lambda;
  res.lambda_max = lambda_max;
  return res;
}

void write_pdpg_trace_csv(const std::string& path,
                          const std::vector<PdpgTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace: " + path);
  out << "iter,mean_reward,kl_estimate,lambda,grad_norm,lambda_max\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const PdpgTraceRow& r : trace)
    out << r.iter << ',' << fmt(r.mean_reward) << ',' << fmt(r.kl_estimate) << ','
        << fmt(r.lambda) << ',' << fmt(r.grad_norm) << ',' << fmt(r.lambda_max)
        << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace crl
