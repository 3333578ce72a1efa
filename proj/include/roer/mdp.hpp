#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "roer/divergences.hpp"
#include "roer/rng.hpp"

namespace roer::mdp {

// Finite MDP. Tables are flat and row-major:
//   transitions[(s * A + a) * S + s'] = P(s' | s, a)
//   rewards[s * A + a]                = r(s, a)
//   initial[s]                        = rho0(s)
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transitions;
  std::vector<double> rewards;
  std::vector<double> initial;
  double gamma = 0.9;

  std::size_t sa(std::size_t s, std::size_t a) const { return s * n_actions + a; }
  std::size_t n_pairs() const { return n_states * n_actions; }
  double p(std::size_t s, std::size_t a, std::size_t next) const { return transitions[sa(s, a) * n_states + next]; }
  double r(std::size_t s, std::size_t a) const { return rewards[sa(s, a)]; }

  void validate() const;  // throws InvalidInput
};

// pi(a | s) stored at [s * A + a].
using Policy = std::vector<double>;
// Probability over state-action pairs, indexed like rewards.
using OccupancyTable = std::vector<double>;

Policy deterministic_policy(const TabularMdp& mdp, std::span<const std::size_t> actions);
Policy uniform_policy(const TabularMdp& mdp);
Policy random_policy(const TabularMdp& mdp, Rng& rng);
void validate_policy(const TabularMdp& mdp, const Policy& policy);

struct ValueIterationResult {
  std::vector<double> q;
  std::vector<double> v;
  std::vector<std::size_t> greedy;  // lowest index among ties
  std::size_t iterations = 0;
  double residual = 0.0;  // sup-norm Bellman residual of q
};

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-10);

// Exact Q^pi by a dense linear solve.
std::vector<double> policy_q_values(const TabularMdp& mdp, const Policy& policy);

// Discounted state-action occupancy d^pi via a dense LU solve of the flow equations.
OccupancyTable occupancy(const TabularMdp& mdp, const Policy& policy);

// B*Q - Q with B*Q(s, a) = r(s, a) + gamma E_{s' ~ P, a' ~ pi}[Q(s', a')].
std::vector<double> bellman_residuals(const TabularMdp& mdp, std::span<const double> q, const Policy& policy);

// beta * E_{d_data}[f*((B*Q - Q) / beta)] + (1 - gamma) E_{rho0, pi}[Q].
// Pairs outside the support of d_data do not enter the first term.
double dual_objective(const TabularMdp& mdp, std::span<const double> q, std::span<const double> d_data, double beta,
                      const divergences::DivergenceSpec& div, const Policy& policy);

struct DualOptions {
  double gradient_tol = 1e-8;
  std::size_t max_iterations = 500;
};

struct DualSolution {
  std::vector<double> q;
  std::vector<double> residuals;   // B*Q - Q at the minimizer
  OccupancyTable reweighted;       // f*'(residual / beta) * d_data, normalized
  double objective = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
};

// Minimizes dual_objective over the Q table with damped Newton steps and a
// backtracking line search. Throws ConvergenceError past max_iterations.
DualSolution dual_minimize(const TabularMdp& mdp, std::span<const double> d_data, double beta,
                           const divergences::DivergenceSpec& div, const Policy& policy, DualOptions opts = {});

// |E_{d^pi}[Q(s,a) - gamma E_{s',a'}Q(s',a')] - (1 - gamma) E_{rho0, pi}[Q]|
double telescoping_check(const TabularMdp& mdp, const Policy& policy, std::span<const double> q);

double expected_reward(const TabularMdp& mdp, const OccupancyTable& d);
double total_variation(std::span<const double> p, std::span<const double> q);
// KL(p || q); +inf when q has no mass where p does.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// n-state chain, actions {0: left, 1: right}. Moving right from the last
// state stays there and pays `goal_reward`; moving left from state 0 pays
// `distractor_reward`. `slip` is the probability the move is reversed.
// Uniform initial distribution unless `start_at_zero`.
TabularMdp chain_mdp(std::size_t n, double gamma, double goal_reward = 1.0, double distractor_reward = 0.0,
                     double slip = 0.0, bool start_at_zero = false);
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, Rng& rng);

// Text format, one field per line:
//   roer-mdp 1
//   states <S>
//   actions <A>
//   gamma <g>
//   initial <S values>
//   rewards <S*A values>
//   transitions <S*A*S values>
void write_mdp(std::ostream& os, const TabularMdp& mdp);
TabularMdp read_mdp(std::istream& is);
TabularMdp load_mdp_file(const std::string& path);

}  // namespace roer::mdp
