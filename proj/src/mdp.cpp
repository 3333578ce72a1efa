#include "roer/mdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "roer/errors.hpp"

namespace roer::mdp {

namespace {

constexpr double kStochasticTol = 1e-12;

bool stochastic(std::span<const double> row) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kStochasticTol * static_cast<double>(row.size());
}

// M[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')
Eigen::MatrixXd successor_matrix(const TabularMdp& mdp, const Policy& policy) {
  const auto n = static_cast<Eigen::Index>(mdp.n_pairs());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const auto row = static_cast<Eigen::Index>(mdp.sa(s, a));
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
        const double p = mdp.p(s, a, s2);
        if (p == 0.0) continue;
        for (std::size_t a2 = 0; a2 < mdp.n_actions; ++a2) {
          m(row, static_cast<Eigen::Index>(mdp.sa(s2, a2))) += p * policy[mdp.sa(s2, a2)];
        }
      }
    }
  }
  return m;
}

Eigen::VectorXd as_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void check_q(const TabularMdp& mdp, std::span<const double> q) {
  if (q.size() != mdp.n_pairs()) throw InvalidInput("Q table size does not match the MDP");
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw InvalidInput("MDP must have states and actions");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in (0, 1)");
  if (transitions.size() != n_states * n_actions * n_states || rewards.size() != n_pairs() ||
      initial.size() != n_states) {
    throw InvalidInput("MDP table sizes are inconsistent");
  }
  for (std::size_t i = 0; i < n_pairs(); ++i) {
    if (!stochastic({transitions.data() + i * n_states, n_states})) {
      throw InvalidInput("transition row " + std::to_string(i) + " is not a probability distribution");
    }
    if (!std::isfinite(rewards[i])) throw InvalidInput("rewards must be finite");
  }
  if (!stochastic(initial)) throw InvalidInput("initial distribution does not sum to 1");
}

void validate_policy(const TabularMdp& mdp, const Policy& policy) {
  if (policy.size() != mdp.n_pairs()) throw InvalidInput("policy table size does not match the MDP");
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (!stochastic({policy.data() + s * mdp.n_actions, mdp.n_actions})) {
      throw InvalidInput("policy row " + std::to_string(s) + " is not a distribution");
    }
  }
}

Policy deterministic_policy(const TabularMdp& mdp, std::span<const std::size_t> actions) {
  if (actions.size() != mdp.n_states) throw InvalidInput("need one action per state");
  Policy pi(mdp.n_pairs(), 0.0);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (actions[s] >= mdp.n_actions) throw InvalidInput("action index out of range");
    pi[mdp.sa(s, actions[s])] = 1.0;
  }
  return pi;
}

Policy uniform_policy(const TabularMdp& mdp) {
  return Policy(mdp.n_pairs(), 1.0 / static_cast<double>(mdp.n_actions));
}

Policy random_policy(const TabularMdp& mdp, Rng& rng) {
  Policy pi(mdp.n_pairs());
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) sum += (pi[mdp.sa(s, a)] = 0.05 + uniform01(rng));
    for (std::size_t a = 0; a < mdp.n_actions; ++a) pi[mdp.sa(s, a)] /= sum;
  }
  return pi;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol) {
  mdp.validate();
  ValueIterationResult out;
  out.q.assign(mdp.n_pairs(), 0.0);
  out.v.assign(mdp.n_states, 0.0);
  std::vector<double> next(mdp.n_pairs());
  const std::size_t cap = 1'000'000;
  for (out.iterations = 0; out.iterations < cap; ++out.iterations) {
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      out.v[s] = *std::max_element(out.q.begin() + static_cast<long>(s * mdp.n_actions),
                                   out.q.begin() + static_cast<long>((s + 1) * mdp.n_actions));
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
      double ev = 0.0;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) ev += mdp.transitions[i * mdp.n_states + s2] * out.v[s2];
      next[i] = mdp.rewards[i] + mdp.gamma * ev;
      residual = std::max(residual, std::abs(next[i] - out.q[i]));
    }
    out.residual = residual;
    if (residual <= tol) break;
    out.q.swap(next);
  }
  out.greedy.resize(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < mdp.n_actions; ++a) {
      const double qa = out.q[mdp.sa(s, a)];
      const double qb = out.q[mdp.sa(s, best)];
      if (qa > qb + 1e-12 * (1.0 + std::abs(qb))) best = a;
    }
    out.greedy[s] = best;
    out.v[s] = out.q[mdp.sa(s, best)];
  }
  return out;
}

std::vector<double> policy_q_values(const TabularMdp& mdp, const Policy& policy) {
  mdp.validate();
  validate_policy(mdp, policy);
  const auto n = static_cast<Eigen::Index>(mdp.n_pairs());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * successor_matrix(mdp, policy);
  Eigen::VectorXd q = a.partialPivLu().solve(as_vector(mdp.rewards));
  return as_std(q);
}

OccupancyTable occupancy(const TabularMdp& mdp, const Policy& policy) {
  mdp.validate();
  validate_policy(mdp, policy);
  const auto ns = static_cast<Eigen::Index>(mdp.n_states);
  // State flow: d_s = (1 - gamma) rho0 + gamma P_pi^T d_s.
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(ns, ns);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      const double w = policy[mdp.sa(s, a)];
      if (w == 0.0) continue;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
        p_pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) += w * mdp.p(s, a, s2);
      }
    }
  }
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(ns, ns) - mdp.gamma * p_pi.transpose();
  const Eigen::VectorXd rhs = (1.0 - mdp.gamma) * as_vector(mdp.initial);
  const auto lu = lhs.fullPivLu();
  if (!lu.isInvertible()) throw Error("occupancy: singular flow system");
  const Eigen::VectorXd ds = lu.solve(rhs);
  OccupancyTable d(mdp.n_pairs());
  double total = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      d[mdp.sa(s, a)] = std::max(ds(static_cast<Eigen::Index>(s)), 0.0) * policy[mdp.sa(s, a)];
      total += d[mdp.sa(s, a)];
    }
  }
  for (double& v : d) v /= total;
  return d;
}

std::vector<double> bellman_residuals(const TabularMdp& mdp, std::span<const double> q, const Policy& policy) {
  check_q(mdp, q);
  std::vector<double> vnext(mdp.n_states, 0.0);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) vnext[s] += policy[mdp.sa(s, a)] * q[mdp.sa(s, a)];
  }
  std::vector<double> res(mdp.n_pairs());
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    double ev = 0.0;
    for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) ev += mdp.transitions[i * mdp.n_states + s2] * vnext[s2];
    res[i] = mdp.rewards[i] + mdp.gamma * ev - q[i];
  }
  return res;
}

double dual_objective(const TabularMdp& mdp, std::span<const double> q, std::span<const double> d_data, double beta,
                      const divergences::DivergenceSpec& div, const Policy& policy) {
  check_q(mdp, q);
  if (d_data.size() != mdp.n_pairs()) throw InvalidInput("data distribution size does not match the MDP");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  validate_policy(mdp, policy);
  const auto res = bellman_residuals(mdp, q, policy);
  double conj = 0.0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (d_data[i] > 0.0) conj += d_data[i] * divergences::conjugate(div, res[i] / beta);
  }
  double start = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) start += mdp.initial[s] * policy[mdp.sa(s, a)] * q[mdp.sa(s, a)];
  }
  return beta * conj + (1.0 - mdp.gamma) * start;
}

DualSolution dual_minimize(const TabularMdp& mdp, std::span<const double> d_data, double beta,
                           const divergences::DivergenceSpec& div, const Policy& policy, DualOptions opts) {
  mdp.validate();
  validate_policy(mdp, policy);
  if (d_data.size() != mdp.n_pairs()) throw InvalidInput("data distribution size does not match the MDP");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  const auto n = static_cast<Eigen::Index>(mdp.n_pairs());
  const double gamma = mdp.gamma;

  // residual = r + A q with A = gamma M - I.
  const Eigen::MatrixXd a = gamma * successor_matrix(mdp, policy) - Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd r = as_vector(mdp.rewards);
  Eigen::VectorXd start(n);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t act = 0; act < mdp.n_actions; ++act) {
      start(static_cast<Eigen::Index>(mdp.sa(s, act))) = (1.0 - gamma) * mdp.initial[s] * policy[mdp.sa(s, act)];
    }
  }

  auto objective = [&](const Eigen::VectorXd& q) {
    const Eigen::VectorXd res = r + a * q;
    double conj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d_data[i] <= 0.0) continue;
      const double y = res(i) / beta;
      if (!div.domain_conj().contains(y)) return std::numeric_limits<double>::infinity();
      conj += d_data[i] * divergences::conjugate(div, y);
    }
    return beta * conj + start.dot(q);
  };

  // Start where every residual is zero, inside every conjugate domain.
  Eigen::VectorXd q = (-a).partialPivLu().solve(r);
  double value = objective(q);
  DualSolution sol;
  for (sol.iterations = 0;; ++sol.iterations) {
    const Eigen::VectorXd res = r + a * q;
    Eigen::VectorXd first(n);
    Eigen::VectorXd second(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d_data[i] > 0.0) {
        first(i) = d_data[i] * divergences::conjugate_prime(div, res(i) / beta);
        second(i) = d_data[i] * divergences::conjugate_second(div, res(i) / beta) / beta;
      } else {
        first(i) = 0.0;
        second(i) = 0.0;
      }
    }
    const Eigen::VectorXd grad = a.transpose() * first + start;
    sol.gradient_norm = grad.norm();
    if (sol.gradient_norm <= opts.gradient_tol) break;
    if (sol.iterations >= opts.max_iterations) {
      throw ConvergenceError("dual_minimize did not converge", sol.gradient_norm);
    }
    Eigen::MatrixXd hess = a.transpose() * second.asDiagonal() * a;
    const double ridge = 1e-12 * std::max(1e-300, hess.diagonal().maxCoeff());
    hess.diagonal().array() += ridge;
    Eigen::VectorXd step = -hess.ldlt().solve(grad);
    if (!step.allFinite() || step.dot(grad) >= 0.0) step = -grad;
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Eigen::VectorXd candidate = q + t * step;
      const double cand_value = objective(candidate);
      if (cand_value <= value + 1e-4 * t * grad.dot(step)) {
        q = candidate;
        value = cand_value;
        moved = true;
        break;
      }
    }
    if (!moved) {
      throw ConvergenceError("dual_minimize line search stalled", sol.gradient_norm);
    }
  }

  sol.q = as_std(q);
  sol.objective = value;
  sol.residuals = as_std(r + a * q);
  sol.reweighted.assign(mdp.n_pairs(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) {
    if (d_data[i] <= 0.0) continue;
    sol.reweighted[i] = divergences::conjugate_prime(div, sol.residuals[i] / beta) * d_data[i];
    total += sol.reweighted[i];
  }
  for (double& v : sol.reweighted) v /= total;
  return sol;
}

double telescoping_check(const TabularMdp& mdp, const Policy& policy, std::span<const double> q) {
  check_q(mdp, q);
  const auto d = occupancy(mdp, policy);
  const auto res = bellman_residuals(mdp, q, policy);
  // Q - gamma E[Q'] = r - residual.
  double lhs = 0.0;
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) lhs += d[i] * (mdp.rewards[i] - res[i]);
  double rhs = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) rhs += mdp.initial[s] * policy[mdp.sa(s, a)] * q[mdp.sa(s, a)];
  }
  return std::abs(lhs - (1.0 - mdp.gamma) * rhs);
}

double expected_reward(const TabularMdp& mdp, const OccupancyTable& d) {
  double sum = 0.0;
  for (std::size_t i = 0; i < mdp.n_pairs(); ++i) sum += d[i] * mdp.rewards[i];
  return sum;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidInput("distributions differ in size");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidInput("distributions differ in size");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    sum += p[i] * std::log(p[i] / q[i]);
  }
  return sum;
}

TabularMdp chain_mdp(std::size_t n, double gamma, double goal_reward, double distractor_reward, double slip,
                     bool start_at_zero) {
  if (n < 2) throw InvalidInput("chain needs at least two states");
  if (!(slip >= 0.0 && slip < 0.5)) throw InvalidInput("slip must lie in [0, 0.5)");
  TabularMdp m;
  m.n_states = n;
  m.n_actions = 2;
  m.gamma = gamma;
  m.transitions.assign(n * 2 * n, 0.0);
  m.rewards.assign(n * 2, 0.0);
  m.initial.assign(n, start_at_zero ? 0.0 : 1.0 / static_cast<double>(n));
  if (start_at_zero) m.initial[0] = 1.0;
  auto move = [n](std::size_t s, bool right) { return right ? std::min(s + 1, n - 1) : (s == 0 ? 0 : s - 1); };
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < 2; ++a) {
      const bool right = a == 1;
      const std::size_t row = m.sa(s, a) * n;
      m.transitions[row + move(s, right)] += 1.0 - slip;
      m.transitions[row + move(s, !right)] += slip;
    }
  }
  m.rewards[m.sa(n - 1, 1)] = goal_reward;
  m.rewards[m.sa(0, 0)] = distractor_reward;
  m.validate();
  return m;
}

TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng) {
  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.transitions.resize(n_states * n_actions * n_states);
  m.rewards.resize(n_states * n_actions);
  m.initial.resize(n_states);
  for (std::size_t i = 0; i < n_states * n_actions; ++i) {
    double sum = 0.0;
    for (std::size_t s2 = 0; s2 < n_states; ++s2) {
      const double u = uniform01(rng);
      sum += (m.transitions[i * n_states + s2] = u * u * u);  // skewed rows
    }
    for (std::size_t s2 = 0; s2 < n_states; ++s2) m.transitions[i * n_states + s2] /= sum;
    m.rewards[i] = 2.0 * uniform01(rng) - 1.0;
  }
  double sum = 0.0;
  for (auto& v : m.initial) sum += (v = 0.1 + uniform01(rng));
  for (auto& v : m.initial) v /= sum;
  return m;
}

void write_mdp(std::ostream& os, const TabularMdp& mdp) {
  auto line = [&os](const char* key, const std::vector<double>& values) {
    os << key;
    for (double v : values) os << ' ' << std::setprecision(17) << v;
    os << '\n';
  };
  os << "roer-mdp 1\n";
  os << "states " << mdp.n_states << '\n';
  os << "actions " << mdp.n_actions << '\n';
  os << "gamma " << std::setprecision(17) << mdp.gamma << '\n';
  line("initial", mdp.initial);
  line("rewards", mdp.rewards);
  line("transitions", mdp.transitions);
}

TabularMdp read_mdp(std::istream& is) {
  auto expect_key = [&is](const std::string& key) {
    std::string got;
    if (!(is >> got) || got != key) throw FormatError("mdp file: expected '" + key + "', got '" + got + "'");
  };
  auto read_values = [&is](std::vector<double>& out, std::size_t n, const char* what) {
    out.resize(n);
    for (auto& v : out) {
      if (!(is >> v)) throw FormatError(std::string("mdp file: too few values for ") + what);
    }
  };
  expect_key("roer-mdp");
  int version = 0;
  if (!(is >> version) || version != 1) throw FormatError("mdp file: unsupported version");
  TabularMdp m;
  expect_key("states");
  if (!(is >> m.n_states)) throw FormatError("mdp file: bad state count");
  expect_key("actions");
  if (!(is >> m.n_actions)) throw FormatError("mdp file: bad action count");
  expect_key("gamma");
  if (!(is >> m.gamma)) throw FormatError("mdp file: bad gamma");
  expect_key("initial");
  read_values(m.initial, m.n_states, "initial");
  expect_key("rewards");
  read_values(m.rewards, m.n_pairs(), "rewards");
  expect_key("transitions");
  read_values(m.transitions, m.n_pairs() * m.n_states, "transitions");
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("mdp file: ") + e.what());
  }
  return m;
}

TabularMdp load_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_mdp(in);
}

}  // namespace roer::mdp
