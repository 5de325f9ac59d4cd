#include "crl/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace crl {

double Policy::log_prob(StateId x, ActionId a) const {
  double p = action_probs(x)(a);
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(p);
}

ActionId Policy::sample_action(StateId x, RandomSource& rng) const {
  Eigen::VectorXd p = action_probs(x);
  double u = rng.uniform();
  double acc = 0.0;
  for (int a = 0; a < p.size(); ++a) {
    acc += p(a);
    if (u < acc) return a;
  }
  return static_cast<ActionId>(p.size() - 1);
}

ActionId Policy::greedy_action(StateId x) const {
  Eigen::VectorXd p = action_probs(x);
  ActionId best = 0;
  for (int a = 1; a < p.size(); ++a)
    if (p(a) > p(best)) best = a;
  return best;
}

TablePolicy::TablePolicy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {}

TablePolicy TablePolicy::uniform(int state_count, int action_count) {
  return TablePolicy(Eigen::MatrixXd::Constant(state_count, action_count,
                                               1.0 / action_count));
}

int TablePolicy::action_count() const { return static_cast<int>(probs_.cols()); }

Eigen::VectorXd TablePolicy::action_probs(StateId x) const {
  return probs_.row(x).transpose();
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_table_policy(const std::string& path, const TablePolicy& pi) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write table policy: " + path);
  out << "# crl table-policy v1\n";
  out << "states " << pi.state_count() << "\n";
  out << "actions " << pi.action_count() << "\n";
  for (int s = 0; s < pi.state_count(); ++s) {
    for (int a = 0; a < pi.action_count(); ++a) {
      if (a) out << ' ';
      out << format_double(pi.table()(s, a));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

TablePolicy load_table_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read table policy: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "# crl table-policy v1")
    throw ConfigError("table policy: bad header in " + path);
  std::string key;
  int states = 0, actions = 0;
  in >> key >> states;
  if (key != "states") throw ConfigError("table policy: expected 'states' in " + path);
  in >> key >> actions;
  if (key != "actions") throw ConfigError("table policy: expected 'actions' in " + path);
  if (states <= 0 || actions <= 0)
    throw ConfigError("table policy: bad dimensions in " + path);
  Eigen::MatrixXd m(states, actions);
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a)
      if (!(in >> m(s, a)))
        throw ConfigError("table policy: truncated table in " + path);
  return TablePolicy(std::move(m));
}

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::tabular: return "tabular";
    case Arch::linear: return "linear";
    case Arch::mlp: return "mlp";
  }
  return "tabular";
}

Arch arch_from_name(const std::string& name) {
  if (name == "tabular") return Arch::tabular;
  if (name == "linear") return Arch::linear;
  if (name == "mlp") return Arch::mlp;
  throw ConfigError("unknown architecture: " + name);
}

std::int64_t PolicyParams::param_count_for(Arch arch, int state_count, int action_count,
                                           int hidden1, int hidden2) {
  const std::int64_t s = state_count, a = action_count, h1 = hidden1, h2 = hidden2;
  switch (arch) {
    case Arch::tabular: return s * a;
    case Arch::linear: return a * s + a;
    case Arch::mlp: return h1 * s + h1 + h2 * h1 + h2 + a * h2 + a;
  }
  return 0;
}

PolicyParams init_policy(Arch arch, int state_count, int action_count,
                         double temperature, RandomSource& rng,
                         int hidden1, int hidden2) {
  PolicyParams p;
  p.arch = arch;
  p.state_count = state_count;
  p.action_count = action_count;
  p.hidden1 = hidden1;
  p.hidden2 = hidden2;
  p.temperature = temperature;
  std::int64_t n = PolicyParams::param_count_for(arch, state_count, action_count,
                                                 hidden1, hidden2);
  p.theta.resize(n);
  for (std::int64_t i = 0; i < n; ++i) p.theta(i) = rng.uniform(-0.05, 0.05);
  return p;
}

ParametricPolicy::ParametricPolicy(PolicyParams params) : params_(std::move(params)) {
  std::int64_t want = PolicyParams::param_count_for(
      params_.arch, params_.state_count, params_.action_count, params_.hidden1,
      params_.hidden2);
  if (params_.theta.size() != want)
    throw ConfigError("PolicyParams: theta size does not match architecture");
  if (params_.temperature <= 0.0)
    throw ConfigError("PolicyParams: temperature must be positive");
}

namespace {

Eigen::VectorXd softmax_scaled(const Eigen::VectorXd& logits, double temperature) {
  Eigen::VectorXd z = logits / temperature;
  double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

}  // namespace

StateEval ParametricPolicy::eval(StateId x) const {
  const auto& p = params_;
  const int s = p.state_count, a = p.action_count, h1 = p.hidden1, h2 = p.hidden2;
  StateEval ev;
  switch (p.arch) {
    case Arch::tabular:
      ev.logits = p.theta.segment(static_cast<std::int64_t>(x) * a, a);
      break;
    case Arch::linear: {
      Eigen::Map<const Eigen::MatrixXd> w(p.theta.data(), a, s);
      ev.logits = w.col(x) + p.theta.segment(static_cast<std::int64_t>(a) * s, a);
      break;
    }
    case Arch::mlp: {
      const double* d = p.theta.data();
      std::int64_t off = 0;
      Eigen::Map<const Eigen::MatrixXd> w1(d + off, h1, s);
      off += static_cast<std::int64_t>(h1) * s;
      Eigen::Map<const Eigen::VectorXd> b1(d + off, h1);
      off += h1;
      Eigen::Map<const Eigen::MatrixXd> w2(d + off, h2, h1);
      off += static_cast<std::int64_t>(h2) * h1;
      Eigen::Map<const Eigen::VectorXd> b2(d + off, h2);
      off += h2;
      Eigen::Map<const Eigen::MatrixXd> w3(d + off, a, h2);
      off += static_cast<std::int64_t>(a) * h2;
      Eigen::Map<const Eigen::VectorXd> b3(d + off, a);
      ev.h1 = (w1.col(x) + b1).array().tanh();
      ev.h2 = (w2 * ev.h1 + b2).array().tanh();
      ev.logits = w3 * ev.h2 + b3;
      break;
    }
  }
  ev.probs = softmax_scaled(ev.logits, p.temperature);
  return ev;
}

Eigen::VectorXd ParametricPolicy::action_probs(StateId x) const {
  return eval(x).probs;
}

void ParametricPolicy::backward(StateId x, const StateEval& ev,
                                const Eigen::VectorXd& dlogits,
                                Eigen::VectorXd& grad) const {
  const auto& p = params_;
  const int s = p.state_count, a = p.action_count, h1 = p.hidden1, h2 = p.hidden2;
  switch (p.arch) {
    case Arch::tabular:
      grad.segment(static_cast<std::int64_t>(x) * a, a) += dlogits;
      break;
    case Arch::linear: {
      Eigen::Map<Eigen::MatrixXd> dw(grad.data(), a, s);
      dw.col(x) += dlogits;
      grad.segment(static_cast<std::int64_t>(a) * s, a) += dlogits;
      break;
    }
    case Arch::mlp: {
      const double* d = p.theta.data();
      double* g = grad.data();
      std::int64_t o_w1 = 0;
      std::int64_t o_b1 = o_w1 + static_cast<std::int64_t>(h1) * s;
      std::int64_t o_w2 = o_b1 + h1;
      std::int64_t o_b2 = o_w2 + static_cast<std::int64_t>(h2) * h1;
      std::int64_t o_w3 = o_b2 + h2;
      std::int64_t o_b3 = o_w3 + static_cast<std::int64_t>(a) * h2;
      Eigen::Map<const Eigen::MatrixXd> w2(d + o_w2, h2, h1);
      Eigen::Map<const Eigen::MatrixXd> w3(d + o_w3, a, h2);
      Eigen::Map<Eigen::MatrixXd> gw1(g + o_w1, h1, s);
      Eigen::Map<Eigen::VectorXd> gb1(g + o_b1, h1);
      Eigen::Map<Eigen::MatrixXd> gw2(g + o_w2, h2, h1);
      Eigen::Map<Eigen::VectorXd> gb2(g + o_b2, h2);
      Eigen::Map<Eigen::MatrixXd> gw3(g + o_w3, a, h2);
      Eigen::Map<Eigen::VectorXd> gb3(g + o_b3, a);

      gw3 += dlogits * ev.h2.transpose();
      gb3 += dlogits;
      Eigen::VectorXd dh2 = w3.transpose() * dlogits;
      Eigen::VectorXd dz2 =
          dh2.array() * (1.0 - ev.h2.array() * ev.h2.array());
      gw2 += dz2 * ev.h1.transpose();
      gb2 += dz2;
      Eigen::VectorXd dh1 = w2.transpose() * dz2;
      Eigen::VectorXd dz1 =
          dh1.array() * (1.0 - ev.h1.array() * ev.h1.array());
      gw1.col(x) += dz1;
      gb1 += dz1;
      break;
    }
  }
}

Eigen::VectorXd ParametricPolicy::grad_log_prob(StateId x, ActionId a) const {
  StateEval ev = eval(x);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.theta.size());
  backward(x, ev, dlogits_log_prob(ev, a, params_.temperature), grad);
  return grad;
}

void project_theta(Eigen::VectorXd& theta, double radius) {
  double n = theta.norm();
  if (n > radius) theta *= radius / n;
}

namespace {
constexpr char kPolicyMagic[8] = {'C', 'R', 'L', 'P', 'O', 'L', '1', '\n'};
}

void save_policy(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write policy checkpoint: " + path);
  out.write(kPolicyMagic, sizeof(kPolicyMagic));
  std::uint32_t version = 1;
  std::uint8_t arch = static_cast<std::uint8_t>(params.arch);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&arch), sizeof(arch));
  out.write(reinterpret_cast<const char*>(&params.state_count), sizeof(params.state_count));
  out.write(reinterpret_cast<const char*>(&params.action_count), sizeof(params.action_count));
  out.write(reinterpret_cast<const char*>(&params.hidden1), sizeof(params.hidden1));
  out.write(reinterpret_cast<const char*>(&params.hidden2), sizeof(params.hidden2));
  out.write(reinterpret_cast<const char*>(&params.temperature), sizeof(params.temperature));
  std::int64_t n = params.theta.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(params.theta.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read policy checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kPolicyMagic, sizeof(magic)) != 0)
    throw ConfigError("policy checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1) throw ConfigError("policy checkpoint: unsupported version");
  std::uint8_t arch = 0;
  PolicyParams p;
  in.read(reinterpret_cast<char*>(&arch), sizeof(arch));
  in.read(reinterpret_cast<char*>(&p.state_count), sizeof(p.state_count));
  in.read(reinterpret_cast<char*>(&p.action_count), sizeof(p.action_count));
  in.read(reinterpret_cast<char*>(&p.hidden1), sizeof(p.hidden1));
  in.read(reinterpret_cast<char*>(&p.hidden2), sizeof(p.hidden2));
  in.read(reinterpret_cast<char*>(&p.temperature), sizeof(p.temperature));
  if (arch > 2) throw ConfigError("policy checkpoint: bad architecture byte");
  p.arch = static_cast<Arch>(arch);
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n < 0) throw ConfigError("policy checkpoint: truncated header");
  p.theta.resize(n);
  in.read(reinterpret_cast<char*>(p.theta.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ConfigError("policy checkpoint: truncated parameters");
  return p;
}

Eigen::VectorXd dlogits_log_prob(const StateEval& ev, ActionId a, double temperature) {
  Eigen::VectorXd d = -ev.probs;
  d(a) += 1.0;
  return d / temperature;
}

Eigen::VectorXd dlogits_kl_forward(const StateEval& ev, const Eigen::VectorXd& teacher,
                                   double temperature) {
  return (ev.probs - teacher) / temperature;
}

Eigen::VectorXd dlogits_kl_reverse(const StateEval& ev, const Eigen::VectorXd& teacher,
                                   double temperature) {
  const Eigen::VectorXd& p = ev.probs;
  int n = static_cast<int>(p.size());
  Eigen::VectorXd logratio(n);
  double kl = 0.0;
  for (int a = 0; a < n; ++a) {
    if (p(a) <= 0.0) {
      logratio(a) = 0.0;
      continue;
    }
    if (teacher(a) <= 0.0)
      throw InfiniteDivergenceError(
          "reverse KL gradient: teacher has zero mass on a student action");
    logratio(a) = std::log(p(a) / teacher(a));
    kl += p(a) * logratio(a);
  }
  Eigen::VectorXd d(n);
  for (int a = 0; a < n; ++a) d(a) = p(a) * (logratio(a) - kl) / temperature;
  return d;
}

Eigen::VectorXd dlogits_entropy(const StateEval& ev, double temperature) {
  const Eigen::VectorXd& p = ev.probs;
  int n = static_cast<int>(p.size());
  double ent = 0.0;
  for (int a = 0; a < n; ++a)
    if (p(a) > 0.0) ent -= p(a) * std::log(p(a));
  Eigen::VectorXd d(n);
  for (int a = 0; a < n; ++a) {
    double lg = p(a) > 0.0 ? std::log(p(a)) : 0.0;
    d(a) = -p(a) * (lg + ent) / temperature;
  }
  return d;
}

Eigen::VectorXd dlogits_hellinger(const StateEval& ev, const Eigen::VectorXd& teacher,
                                  double temperature) {
  const Eigen::VectorXd& p = ev.probs;
  int n = static_cast<int>(p.size());
  double bc = 0.0;
  for (int a = 0; a < n; ++a) bc += std::sqrt(teacher(a) * p(a));
  double h2 = 1.0 - bc;
  if (h2 < 1e-24) return Eigen::VectorXd::Zero(n);
  double h = std::sqrt(h2);
  Eigen::VectorXd d(n);
  for (int a = 0; a < n; ++a)
    d(a) = (p(a) * bc - std::sqrt(teacher(a) * p(a))) / (4.0 * h * temperature);
  return d;
}

}  // namespace crl
