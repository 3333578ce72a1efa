#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "roer/mdp.hpp"
#include "roer/replay.hpp"
#include "roer/rng.hpp"

namespace roer::agents {

struct TabularConfig {
  double gamma = 0.9;
  double learning_rate = 0.2;
  // Soft value V(s) = temperature * log sum_a exp(Q(s, a) / temperature).
  double temperature = 0.01;
  // Probability of a uniformly random action while acting.
  double epsilon = 0.2;
  double initial_q = 0.0;

  void validate() const;
};

// Tabular soft Q-learning on transitions whose state, action and next state
// are single indices.
class TabularAgent {
 public:
  TabularAgent(std::size_t n_states, std::size_t n_actions, TabularConfig cfg);

  std::size_t act(std::size_t state, Rng& rng) const;
  std::size_t greedy_action(std::size_t state) const;
  mdp::Policy greedy_policy() const;

  double soft_value(std::size_t state) const;
  double q(std::size_t state, std::size_t action) const { return q_[state * n_actions_ + action]; }
  const std::vector<double>& q_table() const { return q_; }
  void set_q_table(std::vector<double> q);

  // r + gamma V(s') (1 - terminal) - V(s) with the soft value.
  std::vector<double> td_errors(const replay::SampledBatch& batch) const;

  // Q(s, a) += lr * w * (target - Q(s, a)) with every target computed from
  // the table before the update. Returns the mean squared TD error of the
  // batch before the update.
  double update(const replay::SampledBatch& batch, std::span<const double> weights = {});

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  const TabularConfig& config() const { return cfg_; }

  std::vector<std::uint8_t> save() const;
  static TabularAgent load(std::span<const std::uint8_t> bytes, TabularConfig cfg);

 private:
  std::size_t index_of(const std::vector<double>& v, std::size_t bound, const char* what) const;

  std::size_t n_states_;
  std::size_t n_actions_;
  TabularConfig cfg_;
  std::vector<double> q_;
};

}  // namespace roer::agents
