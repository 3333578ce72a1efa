#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "roer/nn.hpp"
#include "roer/replay.hpp"
#include "roer/rng.hpp"

namespace roer::agents {

// Loss used to train the auxiliary value network that supplies TD errors.
enum class ValueLoss { None, Gumbel, Chi2 };

struct SacConfig {
  std::vector<std::size_t> hidden = {256, 256};
  double gamma = 0.99;
  double polyak_tau = 5e-3;
  nn::AdamConfig actor_opt{};
  nn::AdamConfig critic_opt{};
  nn::AdamConfig value_opt{};
  nn::AdamConfig temperature_opt{};
  double init_temperature = 1.0;
  // NaN means -(action dimension).
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  // Huber bound of the critic loss; +inf gives the plain mean-square loss.
  double huber_k = 1.0;
  double penalty_coef = 1.0;
  ValueLoss value_loss = ValueLoss::None;
  double value_beta = 1.0;
  double value_grad_clip = 7.0;
  // Use the bootstrapped target inside the exponential of the Gumbel loss
  // and Q - V in the linear term, instead of Q - V in both.
  bool literal_value_target = false;
  // Std of Gaussian noise added to batch actions (then clipped to [-1, 1])
  // when forming the value network's regression target.
  double value_noise = 0.1;
  double log_std_min = -10.0;
  double log_std_max = 2.0;

  void validate() const;
};

struct StepMetrics {
  double critic_loss = 0.0;
  double penalty = 0.0;
  double value_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double temperature = 0.0;
  double entropy = 0.0;
  double mean_q = 0.0;
  std::size_t value_clip_hits = 0;
  // Value-network TD errors of the batch, computed before the update.
  std::vector<double> td_errors;
  bool aborted = false;
};

// Soft actor-critic with double critics, Polyak-averaged target critics, a
// tanh-Gaussian actor, a learned entropy temperature and an optional value
// network V(s). Actions are in (-1, 1); the caller scales them to the env.
class SacAgent {
 public:
  SacAgent(std::size_t obs_dim, std::size_t act_dim, SacConfig cfg, std::uint64_t seed);

  std::vector<double> act(const std::vector<double>& observation, bool deterministic, Rng& rng) const;
  // One action per observation, drawn in order from `rng`.
  std::vector<std::vector<double>> act_batch(std::span<const std::vector<double>> observations, bool deterministic,
                                             Rng& rng) const;

  // delta_i = r_i + gamma V(s'_i) (1 - terminal_i) - V(s_i). Needs a value network.
  std::vector<double> value_td_errors(const replay::SampledBatch& batch) const;
  // Critic TD error y - Q_j of the critic with the larger |error|.
  std::vector<double> critic_td_errors(const replay::SampledBatch& batch, Rng& rng) const;
  // min(Q1, Q2) at the given pairs.
  std::vector<double> q_estimates(std::span<const std::vector<double>> observations,
                                  std::span<const std::vector<double>> actions) const;
  std::vector<double> values(std::span<const std::vector<double>> observations) const;

  // Critic, value, actor and temperature updates followed by the target
  // update. `weights` scale each sample's critic loss (empty = unit weights).
  // A non-finite loss aborts the step and restores the previous state.
  StepMetrics update(const replay::SampledBatch& batch, std::span<const double> weights, Rng& rng);

  // Gradient of the critic loss (Huber + penalty) of critic `which` at the
  // given targets, without applying it. Exposed for tests.
  nn::ParameterSet critic_gradient(int which, const replay::SampledBatch& batch, std::span<const double> targets,
                                   std::span<const double> weights) const;

  double temperature() const;
  double log_temperature() const { return log_alpha_; }
  double target_entropy() const { return target_entropy_; }
  std::uint64_t aborted_updates() const { return aborted_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  const SacConfig& config() const { return cfg_; }

  const nn::ParameterSet& actor() const { return actor_; }
  const nn::ParameterSet& critic(int which) const { return which == 0 ? q1_ : q2_; }
  const nn::ParameterSet& target_critic(int which) const { return which == 0 ? t1_ : t2_; }
  const nn::ParameterSet& value_net() const { return value_; }
  nn::ParameterSet& mutable_actor() { return actor_; }
  nn::ParameterSet& mutable_critic(int which) { return which == 0 ? q1_ : q2_; }
  nn::ParameterSet& mutable_value_net() { return value_; }

  std::vector<std::uint8_t> save() const;
  static SacAgent load(std::span<const std::uint8_t> bytes, SacConfig cfg);

 private:
  struct PolicySample {
    nn::Matrix actions;   // act x B, tanh-squashed
    nn::Vector log_prob;  // B
    nn::Matrix mean;
    nn::Matrix log_std;    // clamped
    nn::Matrix noise;      // eps
    nn::Matrix clamp_mask; // 1 where log_std was not clamped
    nn::ForwardCache cache;
  };

  PolicySample sample_policy(const nn::Matrix& obs, Rng& rng) const;
  nn::Matrix critic_input(const nn::Matrix& obs, const nn::Matrix& actions) const;
  nn::Vector bootstrap_targets(const nn::Vector& rewards, const nn::Matrix& next_obs, const nn::Vector& not_done,
                               Rng& rng) const;

  std::size_t obs_dim_;
  std::size_t act_dim_;
  SacConfig cfg_;
  double target_entropy_;

  nn::ParameterSet actor_;
  nn::ParameterSet q1_, q2_, t1_, t2_;
  nn::ParameterSet value_;
  double log_alpha_;

  nn::Adam actor_opt_;
  nn::Adam q1_opt_, q2_opt_;
  nn::Adam value_opt_;
  nn::ScalarAdam alpha_opt_;
  // Private stream for the value-target noise, so that agents with and
  // without a value network consume the caller's stream identically.
  Rng noise_rng_;
  std::uint64_t aborted_ = 0;
};

// Column-stacks a batch's observations, actions, rewards, next observations
// and continuation flags (1 - terminal).
struct BatchMatrices {
  nn::Matrix obs;
  nn::Matrix actions;
  nn::Vector rewards;
  nn::Matrix next_obs;
  nn::Vector not_done;
};
BatchMatrices to_matrices(const replay::SampledBatch& batch);

}  // namespace roer::agents
