#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "roer/errors.hpp"
#include "roer/harness/oracle_suite.hpp"
#include "roer/mdp.hpp"

namespace md = roer::mdp;
namespace dv = roer::divergences;

namespace {

md::TabularMdp single_state(double reward, double gamma) {
  md::TabularMdp m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transitions = {1.0};
  m.rewards = {reward};
  m.initial = {1.0};
  m.gamma = gamma;
  return m;
}

// Truncated power series for d^pi: (1 - g) sum_t g^t Pr[s_t, a_t].
md::OccupancyTable series_occupancy(const md::TabularMdp& m, const md::Policy& pi) {
  const std::size_t S = m.n_states, A = m.n_actions;
  std::vector<double> state = m.initial;
  md::OccupancyTable d(S * A, 0.0);
  double disc = 1.0 - m.gamma;
  while (disc > 1e-14) {
    std::vector<double> next(S, 0.0);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) {
        const double mass = state[s] * pi[m.sa(s, a)];
        d[m.sa(s, a)] += disc * mass;
        for (std::size_t n = 0; n < S; ++n) next[n] += mass * m.p(s, a, n);
      }
    state = next;
    disc *= m.gamma;
  }
  return d;
}

// Independent evaluation of beta E_d[f*((B*Q - Q) / beta)] + (1 - gamma) E_{rho0, pi}[Q].
double reference_dual(const md::TabularMdp& m, const std::vector<double>& q, const std::vector<double>& d,
                      double beta, dv::Kind kind, const md::Policy& pi) {
  double conj = 0.0, init = 0.0;
  for (std::size_t s = 0; s < m.n_states; ++s) {
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      double next = 0.0;
      for (std::size_t n = 0; n < m.n_states; ++n)
        for (std::size_t b = 0; b < m.n_actions; ++b) next += m.p(s, a, n) * pi[m.sa(n, b)] * q[m.sa(n, b)];
      const double residual = m.r(s, a) + m.gamma * next - q[m.sa(s, a)];
      if (d[m.sa(s, a)] > 0) conj += d[m.sa(s, a)] * dv::conjugate({kind}, residual / beta);
      init += m.initial[s] * pi[m.sa(s, a)] * q[m.sa(s, a)];
    }
  }
  return beta * conj + (1.0 - m.gamma) * init;
}

}  // namespace

TEST(ValueIteration, SingleState) {
  const auto vi = md::value_iteration(single_state(1.0, 0.9));
  EXPECT_NEAR(vi.q[0], 10.0, 1e-9);
  const auto zero = md::value_iteration(single_state(0.0, 0.9));
  EXPECT_EQ(zero.q[0], 0.0);
}

TEST(ValueIteration, TwoStateChainMatchesTruncatedSum) {
  // Actions {0: stay, 1: advance}; reward 1 only for the goal self-loop.
  md::TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.transitions = {1, 0, 0, 1, 0, 1, 0, 1};
  m.rewards = {0, 0, 1, 1};
  m.initial = {1, 0};
  const auto vi = md::value_iteration(m, 1e-12);
  EXPECT_LE(vi.residual, 1e-12);
  // Optimal: advance from 0 (reward 0 then goal forever), any action at goal.
  double goal = 0.0, g = 1.0;
  for (int t = 0; t < 100000; ++t, g *= 0.9) goal += g;
  EXPECT_NEAR(vi.q[m.sa(1, 0)], goal, 1e-6);
  EXPECT_NEAR(vi.q[m.sa(0, 1)], 0.9 * goal, 1e-6);
  EXPECT_NEAR(vi.q[m.sa(0, 0)], 0.81 * goal, 1e-6);
  EXPECT_EQ(vi.greedy[0], 1u);
  EXPECT_EQ(vi.greedy[1], 0u);  // tie broken toward the lowest index
}

TEST(Occupancy, SingleState) {
  const auto m = single_state(1.0, 0.9);
  const auto d = md::occupancy(m, md::uniform_policy(m));
  EXPECT_NEAR(d[0], 1.0, 1e-15);
}

TEST(Occupancy, SymmetricMdpUniform) {
  md::TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.8;
  m.transitions = {0.7, 0.3, 0.3, 0.7, 0.3, 0.7, 0.7, 0.3};
  m.rewards = {0, 0, 0, 0};
  m.initial = {0.5, 0.5};
  const auto d = md::occupancy(m, md::uniform_policy(m));
  for (double v : d) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Occupancy, MatchesPowerSeries) {
  roer::Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    const auto m = md::random_mdp(5, 3, 0.9, rng);
    const auto pi = md::random_policy(m, rng);
    const auto d = md::occupancy(m, pi);
    const auto ref = series_occupancy(m, pi);
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_NEAR(d[i], ref[i], 1e-10);
      EXPECT_GE(d[i], 0.0);
      sum += d[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-10);
  }
}

TEST(Occupancy, OptimalPolicyMaximizesExpectedReward) {
  roer::Rng rng(13);
  EXPECT_EQ(roer::harness::occupancy_maximizer_rate(100, rng), 1.0);
}

TEST(Mdp, ValidateRejectsBadTables) {
  auto m = single_state(1.0, 0.9);
  m.transitions = {0.9};
  EXPECT_THROW(m.validate(), roer::InvalidInput);
  m = single_state(1.0, 1.0);
  EXPECT_THROW(m.validate(), roer::InvalidInput);
  m = single_state(std::nan(""), 0.9);
  EXPECT_THROW(m.validate(), roer::InvalidInput);
}

TEST(DualObjective, SaddlePoint) {
  const auto m = roer::harness::two_state_mdp();
  const auto vi = md::value_iteration(m, 1e-13);
  const auto pi = md::deterministic_policy(m, vi.greedy);
  const auto d_star = md::occupancy(m, pi);
  const auto residuals = md::bellman_residuals(m, vi.q, pi);
  for (double r : residuals) EXPECT_NEAR(r, 0.0, 1e-9);
  double init = 0.0;
  for (std::size_t s = 0; s < m.n_states; ++s) init += m.initial[s] * vi.q[m.sa(s, vi.greedy[s])];
  EXPECT_NEAR(md::dual_objective(m, vi.q, d_star, 1.0, {dv::Kind::KL}, pi), (1 - m.gamma) * init, 1e-9);
}

TEST(DualObjective, LargeBetaLimit) {
  const auto m = roer::harness::two_state_mdp();
  const auto pi = md::uniform_policy(m);
  const std::vector<double> q = {0.3, -0.2, 1.0, 0.5};
  const std::vector<double> d(4, 0.25);
  double init = 0.0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t a = 0; a < 2; ++a) init += m.initial[s] * pi[m.sa(s, a)] * q[m.sa(s, a)];
  const double mean_residual = [&] {
    const auto r = md::bellman_residuals(m, q, pi);
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += d[i] * r[i];
    return s;
  }();
  // beta f*(x / beta) -> x for KL as beta grows.
  const double obj = md::dual_objective(m, q, d, 1e6, {dv::Kind::KL}, pi);
  EXPECT_NEAR(obj, mean_residual + (1 - m.gamma) * init, 1e-5);
}

TEST(DualObjective, MatchesReferencePath) {
  roer::Rng rng(21);
  const auto m = roer::harness::two_state_mdp();
  for (dv::Kind kind : {dv::Kind::KL, dv::Kind::PearsonChi2}) {
    for (int t = 0; t < 20; ++t) {
      std::vector<double> q(4);
      for (double& v : q) v = roer::uniform01(rng);
      const auto pi = md::random_policy(m, rng);
      std::vector<double> d(4);
      double z = 0.0;
      for (double& v : d) z += (v = roer::uniform01(rng));
      for (double& v : d) v /= z;
      EXPECT_NEAR(md::dual_objective(m, q, d, 1.0, {kind}, pi), reference_dual(m, q, d, 1.0, kind, pi), 1e-12);
    }
  }
}

TEST(DualMinimize, RecoversOptimalOccupancy) {
  const auto m = roer::harness::two_state_mdp();
  const auto r = roer::harness::dual_recovery(m, dv::Kind::KL, 1.0);
  EXPECT_LE(r.tv_uniform_data, 0.05);
  EXPECT_LE(r.ratio_deviation, 0.05);
}

TEST(DualMinimize, ConvergesAndReportsGradient) {
  const auto m = roer::harness::two_state_mdp();
  const auto vi = md::value_iteration(m);
  const auto pi = md::deterministic_policy(m, vi.greedy);
  const std::vector<double> d(4, 0.25);
  const auto sol = md::dual_minimize(m, d, 1.0, {dv::Kind::KL}, pi);
  EXPECT_LE(sol.gradient_norm, 1e-8);
  double sum = 0.0;
  for (double v : sol.reweighted) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(DualMinimize, LargeBetaShrinksReweighting) {
  const auto m = roer::harness::two_state_mdp();
  const auto vi = md::value_iteration(m);
  const auto pi = md::deterministic_policy(m, vi.greedy);
  const std::vector<double> d(4, 0.25);
  double prev = INFINITY;
  for (double beta : {1.0, 10.0, 100.0, 1000.0}) {
    const auto sol = md::dual_minimize(m, d, beta, {dv::Kind::KL}, pi);
    double max_ratio_dev = 0.0;
    for (double r : sol.residuals) max_ratio_dev = std::max(max_ratio_dev, std::abs(r / beta));
    EXPECT_LE(max_ratio_dev, prev + 1e-12) << beta;
    prev = max_ratio_dev;
  }
}

TEST(Telescoping, SingleStateIsExact) {
  const auto m = single_state(0.5, 0.9);
  EXPECT_NEAR(md::telescoping_check(m, md::uniform_policy(m), std::vector<double>{3.7}), 0.0, 1e-15);
}

TEST(Telescoping, RandomTriples) {
  roer::Rng rng(5);
  EXPECT_LE(roer::harness::telescoping_max_residual(100, 5, 3, rng), 1e-8);
}

TEST(Telescoping, ConstantQ) {
  roer::Rng rng(6);
  const auto m = md::random_mdp(5, 2, 0.95, rng);
  const auto pi = md::random_policy(m, rng);
  EXPECT_LE(md::telescoping_check(m, pi, std::vector<double>(10, 4.2)), 1e-12);
}

TEST(MdpText, RoundTrip) {
  roer::Rng rng(7);
  const auto m = md::random_mdp(4, 3, 0.85, rng);
  std::stringstream ss;
  md::write_mdp(ss, m);
  const auto back = md::read_mdp(ss);
  EXPECT_EQ(back.n_states, m.n_states);
  EXPECT_EQ(back.n_actions, m.n_actions);
  EXPECT_EQ(back.gamma, m.gamma);
  EXPECT_EQ(back.transitions, m.transitions);
  EXPECT_EQ(back.rewards, m.rewards);
  EXPECT_EQ(back.initial, m.initial);
}

TEST(MdpText, Malformed) {
  std::stringstream ss("roer-mdp 1\nstates 2\nactions 1\ngamma 0.9\ninitial 1\n");
  EXPECT_THROW(md::read_mdp(ss), roer::FormatError);
  std::stringstream wrong("something else\n");
  EXPECT_THROW(md::read_mdp(wrong), roer::FormatError);
}

TEST(Divergence, KlAndTv) {
  const std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
  EXPECT_NEAR(md::kl_divergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(md::total_variation(p, q), 0.25);
  EXPECT_EQ(md::kl_divergence(p, std::vector<double>{1.0, 0.0}), INFINITY);
}

TEST(ChainMdp, Structure) {
  const auto m = md::chain_mdp(10, 0.9, 1.0, 0.1);
  m.validate();
  EXPECT_EQ(m.n_states, 10u);
  EXPECT_EQ(m.p(9, 1, 9), 1.0);
  EXPECT_EQ(m.r(9, 1), 1.0);
  EXPECT_EQ(m.r(0, 0), 0.1);
  EXPECT_EQ(m.p(3, 1, 4), 1.0);
  EXPECT_EQ(m.p(3, 0, 2), 1.0);
}
