#include "crl/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "crl/oracle.hpp"

namespace crl {

std::string kl_direction_name(KlDirection d) {
  return d == KlDirection::forward ? "forward" : "reverse";
}

KlDirection kl_direction_from_name(const std::string& name) {
  if (name == "forward") return KlDirection::forward;
  if (name == "reverse") return KlDirection::reverse;
  throw ConfigError("unknown kl direction: " + name);
}

double kl_step_state(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double kl = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) <= 0.0) continue;
    if (q(a) <= 0.0)
      throw InfiniteDivergenceError(
          "state KL: support violation; the divergence is infinite");
    kl += p(a) * (std::log(p(a)) - std::log(q(a)));
  }
  return kl;
}

double entropy_state(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a)
    if (p(a) > 0.0) h -= p(a) * std::log(p(a));
  return h;
}

double hellinger_step(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double bc = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) bc += std::sqrt(p(a) * q(a));
  double h2 = std::max(0.0, 1.0 - bc);
  return std::sqrt(h2);
}

namespace {

std::size_t nearest_rank(double rho, std::size_t n) {
  auto k =
      static_cast<std::size_t>(std::ceil(rho / 100.0 * static_cast<double>(n)));
  if (k < 1) k = 1;
  if (k > n) k = n;
  return k;
}

}  // namespace

double percentile_nearest_rank(const std::vector<double>& values, double rho) {
  if (values.empty()) throw ConfigError("percentile of an empty sample");
  if (!(rho > 0.0 && rho <= 100.0))
    throw ConfigError("percentile rank must lie in (0, 100]");
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  return sorted[nearest_rank(rho, sorted.size()) - 1];
}

ClipResult apply_clip(const std::vector<double>& values, const ClipConfig& cfg) {
  ClipResult res;
  res.values = values;
  res.owner.resize(values.size());
  std::iota(res.owner.begin(), res.owner.end(), 0);
  if (!cfg.enabled || values.empty()) return res;
  if (!(cfg.rho > 0.0 && cfg.rho <= 100.0))
    throw ConfigError("clip percentile must lie in (0, 100]");

  std::vector<int> order(res.owner);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  int thr_idx = order[nearest_rank(cfg.rho, values.size()) - 1];
  double thr = values[thr_idx];

  for (std::size_t i = 0; i < values.size(); ++i) {
    bool reroute = cfg.semantics == ClipSemantics::cap ? values[i] > thr
                                                       : values[i] < thr;
    if (reroute) {
      res.values[i] = thr;
      res.owner[i] = thr_idx;
    }
  }
  return res;
}

namespace {

struct StatePair {
  Eigen::VectorXd student;
  Eigen::VectorXd teacher;
};

const StatePair& lookup(std::unordered_map<StateId, StatePair>& cache,
                        const Policy& student, const Policy& teacher, StateId x) {
  auto it = cache.find(x);
  if (it == cache.end())
    it = cache.emplace(x, StatePair{student.action_probs(x), teacher.action_probs(x)})
             .first;
  return it->second;
}

double step_denominator(const Trajectory& tau, bool normalize, StepNorm norm) {
  if (!normalize) return 1.0;
  auto h = static_cast<double>(tau.horizon());
  if (norm == StepNorm::h_minus_1) return std::max(h - 1.0, 1.0);
  return std::max(h, 1.0);
}

}  // namespace

double kl_step_estimate(const Policy& student, const Policy& teacher,
                        const std::vector<Trajectory>& batch,
                        const StepKlOptions& opts) {
  if (batch.empty()) throw ConfigError("step KL estimate over an empty batch");
  std::unordered_map<StateId, StatePair> cache;
  struct Item {
    std::size_t j;
    std::int32_t t;
    double value;
  };
  std::vector<Item> items;
  std::vector<double> denom(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Trajectory& tau = batch[j];
    denom[j] = step_denominator(tau, opts.normalize, opts.norm);
    for (std::int32_t t = 0; t < tau.horizon(); ++t) {
      const StatePair& sp = lookup(cache, student, teacher, tau.states[t]);
      double v = opts.direction == KlDirection::forward
                     ? kl_step_state(sp.teacher, sp.student)
                     : kl_step_state(sp.student, sp.teacher);
      items.push_back({j, t, v});
    }
  }
  if (opts.clip.enabled && !items.empty()) {
    if (opts.clip.grouping == ClipGrouping::batch) {
      std::vector<double> vals(items.size());
      for (std::size_t i = 0; i < items.size(); ++i) vals[i] = items[i].value;
      ClipResult cr = apply_clip(vals, opts.clip);
      for (std::size_t i = 0; i < items.size(); ++i) items[i].value = cr.values[i];
    } else {
      std::unordered_map<std::int32_t, std::vector<std::size_t>> by_t;
      for (std::size_t i = 0; i < items.size(); ++i) by_t[items[i].t].push_back(i);
      for (auto& [t, idx] : by_t) {
        std::vector<double> vals(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) vals[i] = items[idx[i]].value;
        ClipResult cr = apply_clip(vals, opts.clip);
        for (std::size_t i = 0; i < idx.size(); ++i) items[idx[i]].value = cr.values[i];
      }
    }
  }
  double total = 0.0;
  for (const Item& it : items) total += it.value / denom[it.j];
  return total / static_cast<double>(batch.size());
}

double entropy_estimate(const Policy& student, const std::vector<Trajectory>& batch,
                        bool normalize, StepNorm norm) {
  if (batch.empty()) throw ConfigError("entropy estimate over an empty batch");
  std::unordered_map<StateId, double> cache;
  double total = 0.0;
  for (const Trajectory& tau : batch) {
    double d = step_denominator(tau, normalize, norm);
    double sum = 0.0;
    for (std::int32_t t = 0; t < tau.horizon(); ++t) {
      StateId x = tau.states[t];
      auto it = cache.find(x);
      if (it == cache.end()) it = cache.emplace(x, entropy_state(student.action_probs(x))).first;
      sum += it->second;
    }
    total += sum / d;
  }
  return total / static_cast<double>(batch.size());
}

double kl_trajectory_mc(const Policy& student, const Policy& teacher,
                        const std::vector<Trajectory>& batch, KlDirection direction) {
  if (batch.empty()) throw ConfigError("trajectory KL estimate over an empty batch");
  double total = 0.0;
  for (const Trajectory& tau : batch) {
    LogProb ls = trajectory_log_prob(student, tau);
    LogProb lt = trajectory_log_prob(teacher, tau);
    if (direction == KlDirection::reverse) {
      // Batch sampled under the student: its own log prob is finite.
      if (!lt.defined)
        throw InfiniteDivergenceError(
            "trajectory KL: sampled path leaves the teacher's support");
      total += ls.value - lt.value;
    } else {
      // Batch sampled under the teacher.
      if (!ls.defined)
        throw InfiniteDivergenceError(
            "trajectory KL: sampled path leaves the student's support");
      total += lt.value - ls.value;
    }
  }
  return total / static_cast<double>(batch.size());
}

double kl_trajectory_exact(const MdpSpec& mdp, const Policy& student,
                           const Policy& teacher, KlDirection direction) {
  return exact_kl(mdp, student, teacher, direction);
}

StepBoundReport check_step_bound(const MdpSpec& mdp, const Policy& student,
                                 const Policy& teacher, OccupancyNorm norm) {
  StepBoundReport rep;
  rep.lhs = exact_kl(mdp, student, teacher, KlDirection::forward);
  std::vector<double> d = exact_state_distribution(mdp, teacher, norm);
  double scale = norm == OccupancyNorm::expected_horizon
                     ? expected_horizon(mdp, teacher)
                     : static_cast<double>(mdp.horizon_cap);
  double mix = 0.0;
  std::unordered_map<StateId, StatePair> cache;
  for (StateId x = 0; x < mdp.state_count; ++x) {
    if (d[x] <= 0.0) continue;
    const StatePair& sp = lookup(cache, student, teacher, x);
    mix += d[x] * kl_step_state(sp.teacher, sp.student);
  }
  rep.rhs = scale * mix;
  rep.holds = rep.lhs <= rep.rhs + 1e-9;
  return rep;
}

std::vector<KlBenchRow> run_kl_bench(const MdpSpec& mdp, const Policy& student,
                                     const Policy& teacher,
                                     const std::vector<int>& sample_counts,
                                     int repeats, const RandomSource& root) {
  double exact = exact_kl(mdp, student, teacher, KlDirection::forward);
  StepKlOptions step_opts;
  step_opts.direction = KlDirection::forward;
  step_opts.normalize = false;
  std::vector<KlBenchRow> rows;
  for (std::size_t ci = 0; ci < sample_counts.size(); ++ci) {
    RandomSource count_stream = root.substream(static_cast<std::uint64_t>(ci));
    for (int r = 0; r < repeats; ++r) {
      RandomSource rep_stream = count_stream.substream(static_cast<std::uint64_t>(r));
      std::vector<Trajectory> batch =
          sample_batch(mdp, teacher, rep_stream, sample_counts[ci]);
      double traj = kl_trajectory_mc(student, teacher, batch, KlDirection::forward);
      double step = kl_step_estimate(student, teacher, batch, step_opts);
      rows.push_back({sample_counts[ci], "trajectory", "forward", traj, exact,
                      std::abs(traj - exact)});
      rows.push_back({sample_counts[ci], "step", "forward", step, exact,
                      std::abs(step - exact)});
    }
  }
  return rows;
}

void write_kl_bench_csv(const std::string& path, const std::vector<KlBenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write kl bench table: " + path);
  out << "sample_count,estimator,direction,value,exact_value,abs_error\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const KlBenchRow& r : rows)
    out << r.sample_count << ',' << r.estimator << ',' << r.direction << ','
        << fmt(r.value) << ',' << fmt(r.exact_value) << ',' << fmt(r.abs_error)
        << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace crl
