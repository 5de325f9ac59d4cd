#include "crl/practical.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "crl/rng.hpp"

namespace crl {

void adam_step(Eigen::VectorXd& x, AdamState& state, const Eigen::VectorXd& grad,
               double lr, double beta1, double beta2, double eps) {
  if (state.m.size() != grad.size() || x.size() != grad.size())
    throw ConfigError("optimizer state does not match the parameter size");
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  x.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

namespace {

struct ValueLayout {
  std::int64_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, total = 0;
};

ValueLayout value_layout(int s, int h1, int h2) {
  ValueLayout l;
  l.w1 = 0;
  l.b1 = l.w1 + static_cast<std::int64_t>(h1) * s;
  l.w2 = l.b1 + h1;
  l.b2 = l.w2 + static_cast<std::int64_t>(h2) * h1;
  l.w3 = l.b2 + h2;
  l.b3 = l.w3 + h2;
  l.total = l.b3 + 1;
  return l;
}

}  // namespace

ValueNet::ValueNet(int state_count, int hidden1, int hidden2)
    : state_count_(state_count), h1_(hidden1), h2_(hidden2) {
  if (state_count <= 0 || hidden1 <= 0 || hidden2 <= 0)
    throw ConfigError("value net dimensions must be positive");
  theta_ = Eigen::VectorXd::Zero(value_layout(state_count, hidden1, hidden2).total);
}

ValueNet ValueNet::init(int state_count, RandomSource& rng, int hidden1, int hidden2) {
  ValueNet net(state_count, hidden1, hidden2);
  for (Eigen::Index i = 0; i < net.theta_.size(); ++i)
    net.theta_(i) = rng.uniform(-0.05, 0.05);
  return net;
}

namespace {
constexpr char kValueMagic[8] = {'C', 'R', 'L', 'V', 'A', 'L', '1', '\n'};
}

void save_value_net(const std::string& path, const ValueNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write critic checkpoint: " + path);
  out.write(kValueMagic, sizeof(kValueMagic));
  std::int32_t dims[3] = {net.state_count(), net.hidden1(), net.hidden2()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::int64_t n = net.params().size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(net.params().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

ValueNet load_value_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read critic checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kValueMagic, sizeof(magic)) != 0)
    throw ConfigError("critic checkpoint: bad magic in " + path);
  std::int32_t dims[3] = {0, 0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0 || n < 0)
    throw ConfigError("critic checkpoint: truncated header");
  ValueNet net(dims[0], dims[1], dims[2]);
  if (n != net.params().size())
    throw ConfigError("critic checkpoint: parameter count mismatch");
  in.read(reinterpret_cast<char*>(net.params().data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ConfigError("critic checkpoint: truncated parameters");
  return net;
}

ValueNet::Eval ValueNet::eval(StateId x) const {
  if (x < 0 || x >= state_count_)
    throw ConfigError("value net evaluated outside the state range");
  ValueLayout l = value_layout(state_count_, h1_, h2_);
  const double* p = theta_.data();
  Eigen::Map<const Eigen::MatrixXd> w1(p + l.w1, h1_, state_count_);
  Eigen::Map<const Eigen::VectorXd> b1(p + l.b1, h1_);
  Eigen::Map<const Eigen::MatrixXd> w2(p + l.w2, h2_, h1_);
  Eigen::Map<const Eigen::VectorXd> b2(p + l.b2, h2_);
  Eigen::Map<const Eigen::VectorXd> w3(p + l.w3, h2_);
  Eval ev;
  ev.h1 = (w1.col(x) + b1).array().tanh();
  ev.h2 = (w2 * ev.h1 + b2).array().tanh();
  ev.v = w3.dot(ev.h2) + theta_(l.b3);
  return ev;
}

void ValueNet::backward(StateId x, const Eval& ev, double dv,
                        Eigen::VectorXd& grad) const {
  ValueLayout l = value_layout(state_count_, h1_, h2_);
  const double* p = theta_.data();
  Eigen::Map<const Eigen::MatrixXd> w2(p + l.w2, h2_, h1_);
  Eigen::Map<const Eigen::VectorXd> w3(p + l.w3, h2_);
  double* g = grad.data();
  Eigen::Map<Eigen::MatrixXd> gw1(g + l.w1, h1_, state_count_);
  Eigen::Map<Eigen::VectorXd> gb1(g + l.b1, h1_);
  Eigen::Map<Eigen::MatrixXd> gw2(g + l.w2, h2_, h1_);
  Eigen::Map<Eigen::VectorXd> gb2(g + l.b2, h2_);
  Eigen::Map<Eigen::VectorXd> gw3(g + l.w3, h2_);

  gw3 += dv * ev.h2;
  grad(l.b3) += dv;
  Eigen::VectorXd dz2 =
      (dv * w3).cwiseProduct((1.0 - ev.h2.array().square()).matrix());
  gw2 += dz2 * ev.h1.transpose();
  gb2 += dz2;
  Eigen::VectorXd dz1 =
      (w2.transpose() * dz2).cwiseProduct((1.0 - ev.h1.array().square()).matrix());
  gw1.col(x) += dz1;
  gb1 += dz1;
}

std::vector<SubTrajectory> extract_subtrajectories(const std::vector<Trajectory>& batch,
                                                   double discount) {
  std::vector<SubTrajectory> subs;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Trajectory& tau = batch[j];
    std::int32_t h = tau.horizon();
    std::vector<double> suffix(static_cast<std::size_t>(h) + 1, 0.0);
    for (std::int32_t t = h - 1; t >= 0; --t)
      suffix[t] = tau.costs[t] + discount * suffix[t + 1];
    for (std::int32_t t = 0; t < h; ++t)
      subs.push_back({static_cast<int>(j), t, tau.states[t], suffix[t]});
  }
  return subs;
}

std::string distance_name(DistanceMode d) {
  return d == DistanceMode::kl ? "kl" : "hellinger";
}

DistanceMode distance_from_name(const std::string& name) {
  if (name == "kl") return DistanceMode::kl;
  if (name == "hellinger") return DistanceMode::hellinger;
  throw ConfigError("unknown distance: " + name);
}

void PracticalConfig::validate() const {
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(delta >= 0.0)) throw ConfigError("divergence budget must be nonnegative");
  if (!(delta_entropy >= 0.0))
    throw ConfigError("entropy target must be nonnegative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_dual >= 0.0))
    throw ConfigError("multiplier learning rate must be nonnegative");
  if (!(dual_lr_decay_rate > 0.0 && dual_lr_decay_rate <= 1.0))
    throw ConfigError("multiplier decay rate must lie in (0, 1]");
  if (!(lambda_init >= 0.0)) throw ConfigError("multiplier init must be nonnegative");
  if (!(lambda_max > 0.0)) throw ConfigError("multiplier ceiling must be positive");
  if (!(zeta_min <= zeta_init && zeta_init <= zeta_max))
    throw ConfigError("entropy multiplier init must lie inside its interval");
  if (!(zeta_expand >= 0.0))
    throw ConfigError("interval expansion must be nonnegative");
  if (boundary_window <= 0) throw ConfigError("boundary window must be positive");
  if (!(boundary_margin > 0.0 && boundary_margin < 1.0))
    throw ConfigError("boundary margin must lie in (0, 1)");
  if (!(discount > 0.0 && discount <= 1.0))
    throw ConfigError("discount must lie in (0, 1]");
  if (critic_steps < 0) throw ConfigError("critic steps must be nonnegative");
  if (!(theta_radius > 0.0)) throw ConfigError("parameter radius must be positive");
  if (clip.enabled && !(clip.rho > 0.0 && clip.rho <= 100.0))
    throw ConfigError("clip percentile must lie in (0, 100]");
}

LossReport practical_loss(const ParametricPolicy& student, const Policy& teacher,
                          const ValueNet& critic, const std::vector<Trajectory>& batch,
                          double lambda, double zeta, const PracticalConfig& cfg) {
  if (batch.empty()) throw ConfigError("loss over an empty batch");
  const double temp = student.params().temperature;
  const double n = static_cast<double>(batch.size());

  std::unordered_map<StateId, StateEval> sev;
  std::unordered_map<StateId, Eigen::VectorXd> tprobs;
  std::unordered_map<StateId, double> cval;
  auto ev_of = [&](StateId x) -> const StateEval& {
    auto it = sev.find(x);
    if (it == sev.end()) it = sev.emplace(x, student.eval(x)).first;
    return it->second;
  };
  auto tp_of = [&](StateId x) -> const Eigen::VectorXd& {
    auto it = tprobs.find(x);
    if (it == tprobs.end()) it = tprobs.emplace(x, teacher.action_probs(x)).first;
    return it->second;
  };
  auto v_of = [&](StateId x) -> double {
    auto it = cval.find(x);
    if (it == cval.end()) it = cval.emplace(x, critic.value(x)).first;
    return it->second;
  };

  std::unordered_map<StateId, Eigen::VectorXd> dlogits;
  auto dl_of = [&](StateId x) -> Eigen::VectorXd& {
    auto it = dlogits.find(x);
    if (it == dlogits.end())
      it = dlogits.emplace(x, Eigen::VectorXd::Zero(student.action_count())).first;
    return it->second;
  };

  // Policy-gradient part: one sub-trajectory per visited state, averaged over
  // all of them; returns and critic values enter as constants.
  std::int64_t sub_count = 0;
  for (const Trajectory& tau : batch) sub_count += tau.horizon();
  if (sub_count == 0) throw AssumptionError("batch contains no steps");
  const double inv_m = 1.0 / static_cast<double>(sub_count);

  double pg = 0.0;
  for (const Trajectory& tau : batch) {
    std::int32_t h = tau.horizon();
    std::vector<double> adv(h);
    {
      double suffix = 0.0;
      for (std::int32_t t = h - 1; t >= 0; --t) {
        suffix = tau.costs[t] + cfg.discount * suffix;
        adv[t] = (suffix - v_of(tau.states[t])) * inv_m;
      }
    }
    double suffix_logp = 0.0;
    for (std::int32_t t = h - 1; t >= 0; --t) {
      suffix_logp += std::log(ev_of(tau.states[t]).probs(tau.actions[t]));
      pg += adv[t] * suffix_logp;
    }
    double prefix = 0.0;
    for (std::int32_t u = 0; u < h; ++u) {
      prefix += adv[u];
      StateId x = tau.states[u];
      Eigen::VectorXd& d = dl_of(x);
      d -= (prefix / temp) * ev_of(x).probs;
      d(tau.actions[u]) += prefix / temp;
    }
  }

  // Step-wise divergence with optional percentile clipping. Each visited
  // state contributes once per visit; clipping reroutes a clipped entry's
  // gradient to the percentile-owning entry.
  struct Entry {
    StateId x;
    std::int32_t t;
    double inv_denom;
  };
  std::vector<Entry> entries;
  std::vector<double> vals;
  std::unordered_map<StateId, double> dist_cache;
  auto dist_of = [&](StateId x) -> double {
    auto it = dist_cache.find(x);
    if (it == dist_cache.end()) {
      const Eigen::VectorXd& sp = ev_of(x).probs;
      const Eigen::VectorXd& tp = tp_of(x);
      double v = 0.0;
      if (cfg.distance == DistanceMode::hellinger)
        v = hellinger_step(sp, tp);
      else
        v = cfg.direction == KlDirection::forward ? kl_step_state(tp, sp)
                                                  : kl_step_state(sp, tp);
      it = dist_cache.emplace(x, v).first;
    }
    return it->second;
  };
  for (const Trajectory& tau : batch) {
    auto h = static_cast<double>(tau.horizon());
    double denom = 1.0;
    if (cfg.normalize_step)
      denom = cfg.norm == StepNorm::h_minus_1 ? std::max(h - 1.0, 1.0)
                                              : std::max(h, 1.0);
    for (std::int32_t t = 0; t < tau.horizon(); ++t) {
      entries.push_back({tau.states[t], t, 1.0 / denom});
      vals.push_back(dist_of(tau.states[t]));
    }
  }

  std::vector<double> clipped(vals);
  std::vector<int> owner(vals.size());
  std::iota(owner.begin(), owner.end(), 0);
  if (cfg.clip.enabled && !vals.empty()) {
    if (cfg.clip.grouping == ClipGrouping::batch) {
      ClipResult cr = apply_clip(vals, cfg.clip);
      clipped = std::move(cr.values);
      owner = std::move(cr.owner);
    } else {
      std::unordered_map<std::int32_t, std::vector<int>> by_t;
      for (std::size_t i = 0; i < entries.size(); ++i)
        by_t[entries[i].t].push_back(static_cast<int>(i));
      for (auto& [t, idx] : by_t) {
        std::vector<double> sub(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) sub[i] = vals[idx[i]];
        ClipResult cr = apply_clip(sub, cfg.clip);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          clipped[idx[i]] = cr.values[i];
          owner[idx[i]] = idx[cr.owner[i]];
        }
      }
    }
  }

  double dhat = 0.0;
  std::unordered_map<StateId, double> div_weight;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    dhat += clipped[i] * entries[i].inv_denom / n;
    div_weight[entries[owner[i]].x] += lambda * entries[i].inv_denom / n;
  }
  for (const auto& [x, w] : div_weight) {
    if (w == 0.0) continue;
    const StateEval& ev = ev_of(x);
    const Eigen::VectorXd& tp = tp_of(x);
    Eigen::VectorXd d;
    if (cfg.distance == DistanceMode::hellinger)
      d = dlogits_hellinger(ev, tp, temp);
    else
      d = cfg.direction == KlDirection::forward ? dlogits_kl_forward(ev, tp, temp)
                                                : dlogits_kl_reverse(ev, tp, temp);
    dl_of(x) += w * d;
  }

  // Entropy term, same per-trajectory normalization, never clipped.
  double enth = 0.0;
  std::unordered_map<StateId, double> ent_weight;
  std::unordered_map<StateId, double> ent_cache;
  for (const Entry& e : entries) {
    auto it = ent_cache.find(e.x);
    if (it == ent_cache.end())
      it = ent_cache.emplace(e.x, entropy_state(ev_of(e.x).probs)).first;
    enth += it->second * e.inv_denom / n;
    ent_weight[e.x] += zeta * e.inv_denom / n;
  }
  for (const auto& [x, w] : ent_weight) {
    if (w == 0.0) continue;
    dl_of(x) += w * dlogits_entropy(ev_of(x), temp);
  }

  LossReport rep;
  rep.pg = pg;
  rep.kl_value = dhat;
  rep.ent_value = enth;
  rep.kl_term = lambda * (dhat - cfg.delta);
  rep.ent_term = zeta * (enth - cfg.delta_entropy);
  rep.total = rep.pg + rep.kl_term + rep.ent_term;
  rep.theta_grad = Eigen::VectorXd::Zero(student.params().theta.size());
  for (const auto& [x, d] : dlogits) student.backward(x, sev.at(x), d, rep.theta_grad);
  return rep;
}

void critic_update(ValueNet& critic, AdamState& state,
                   const std::vector<SubTrajectory>& subs, double lr) {
  if (subs.empty()) throw ConfigError("critic update with no sub-trajectories");
  const double inv_m = 1.0 / static_cast<double>(subs.size());
  std::unordered_map<StateId, ValueNet::Eval> evals;
  std::unordered_map<StateId, double> dv;
  for (const SubTrajectory& sub : subs) {
    auto it = evals.find(sub.origin);
    if (it == evals.end()) it = evals.emplace(sub.origin, critic.eval(sub.origin)).first;
    dv[sub.origin] += 2.0 * (it->second.v - sub.suffix_cost) * inv_m;
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(critic.params().size());
  for (const auto& [x, d] : dv) critic.backward(x, evals.at(x), d, grad);
  adam_step(critic.params(), state, grad, lr);
}

PracticalResult run_practical(const MdpSpec& mdp, const PolicyParams& init,
                              const ValueNet& critic_init, const Policy& teacher,
                              const PracticalConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PracticalResult res;
  res.params = init;
  ValueNet critic = critic_init;
  AdamState popt(init.theta.size());
  AdamState copt(critic.params().size());
  double lambda = cfg.lambda_init;
  double zeta = cfg.zeta_init;
  double lambda_max = cfg.lambda_max;
  double zeta_min = cfg.zeta_min;
  double zeta_max = cfg.zeta_max;
  int lam_streak = 0, zhi_streak = 0, zlo_streak = 0;
  RandomSource root(seed);
  res.trace.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int k = 0; k < cfg.iterations; ++k) {
    ParametricPolicy pol(res.params);
    RandomSource iter_stream = root.substream(static_cast<std::uint64_t>(k));
    std::vector<Trajectory> batch = sample_batch(mdp, pol, iter_stream, cfg.batch_size);
    LossReport rep = practical_loss(pol, teacher, critic, batch, lambda, zeta, cfg);

    adam_step(res.params.theta, popt, rep.theta_grad, cfg.lr);
    project_theta(res.params.theta, cfg.theta_radius);

    std::vector<SubTrajectory> subs = extract_subtrajectories(batch, cfg.discount);
    for (int c = 0; c < cfg.critic_steps; ++c) critic_update(critic, copt, subs, cfg.lr);

    double dlr = cfg.dual_lr_decay
                     ? cfg.lr_dual * std::pow(cfg.dual_lr_decay_rate, k)
                     : cfg.lr_dual;
    lambda = std::clamp(lambda + dlr * (rep.kl_value - cfg.delta), 0.0, lambda_max);
    zeta = std::clamp(zeta + dlr * (rep.ent_value - cfg.delta_entropy), zeta_min,
                      zeta_max);

    if (lambda >= lambda_max * (1.0 - cfg.boundary_margin)) {
      if (++lam_streak >= cfg.boundary_window) {
        lambda_max *= 2.0;
        lam_streak = 0;
      }
    } else {
      lam_streak = 0;
    }
    double zspan = zeta_max - zeta_min;
    if (zeta >= zeta_max - cfg.boundary_margin * zspan) {
      if (++zhi_streak >= cfg.boundary_window) {
        zeta_max += cfg.zeta_expand;
        zhi_streak = 0;
      }
    } else {
      zhi_streak = 0;
    }
    if (zeta <= zeta_min + cfg.boundary_margin * zspan) {
      if (++zlo_streak >= cfg.boundary_window) {
        zeta_min -= cfg.zeta_expand;
        zlo_streak = 0;
      }
    } else {
      zlo_streak = 0;
    }

    double mean_reward = 0.0;
    for (const Trajectory& tau : batch) mean_reward += total_reward(tau);
    mean_reward /= static_cast<double>(batch.size());
    ParametricPolicy post(res.params);
    res.trace.push_back({k, mean_reward, greedy_reward(mdp, post), rep.kl_value,
                         rep.ent_value, lambda, zeta, rep.pg, rep.kl_term,
                         rep.ent_term});
  }

  res.critic_params = critic.params();
  res.lambda = lambda;
  res.zeta = zeta;
  res.lambda_max = lambda_max;
  res.zeta_min = zeta_min;
  res.zeta_max = zeta_max;
  return res;
}

double greedy_reward(const MdpSpec& mdp, const Policy& pi) {
  StateId x = 0;
  double best = -1.0;
  for (StateId s = 0; s < mdp.state_count; ++s)
    if (mdp.initial[s] > best) {
      best = mdp.initial[s];
      x = s;
    }
  double reward = 0.0;
  for (std::int32_t t = 0; t < mdp.horizon_cap && !mdp.is_terminal(x); ++t) {
    ActionId a = pi.greedy_action(x);
    reward -= mdp.step_cost[x][a];
    const std::vector<Transition>& outs = mdp.outcomes[x][a];
    const Transition* pick = &outs.front();
    for (const Transition& tr : outs)
      if (tr.prob > pick->prob) pick = &tr;
    x = pick->next;
  }
  return reward;
}

void write_practical_trace_csv(const std::string& path,
                               const std::vector<PracticalTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace: " + path);
  out << "iter,mean_train_reward,greedy_reward,kl_step,entropy,lambda,zeta,"
         "loss_pg,loss_kl,loss_ent\n";
  char buf[32];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const PracticalTraceRow& r : trace)
    out << r.iter << ',' << fmt(r.mean_train_reward) << ',' << fmt(r.greedy_reward)
        << ',' << fmt(r.kl_step) << ',' << fmt(r.entropy) << ',' << fmt(r.lambda)
        << ',' << fmt(r.zeta) << ',' << fmt(r.loss_pg) << ',' << fmt(r.loss_kl)
        << ',' << fmt(r.loss_ent) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace crl
