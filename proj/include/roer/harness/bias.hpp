#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roer/envs.hpp"
#include "roer/harness/config.hpp"
#include "roer/replay.hpp"
#include "roer/sac.hpp"
#include "roer/tabular_agent.hpp"

namespace roer::harness {

struct BiasEstimate {
  // mean(true - estimate); positive means underestimation.
  double bias = 0.0;
  double mean_estimate = 0.0;
  double mean_true = 0.0;
  double std_error = 0.0;
  // Bound on discounted reward beyond the rollout horizon.
  double tail_bound = 0.0;
  std::size_t pairs = 0;
};

// Maps a batch of observations to environment-scale actions.
using BatchPolicy =
    std::function<std::vector<std::vector<double>>(const std::vector<std::vector<double>>& observations, Rng& rng)>;

struct RolloutOptions {
  double gamma = 0.99;
  std::size_t horizon = 1000;
  double reward_shift = 0.0;
};

// Discounted Monte-Carlo returns from each (observation, env action) pair,
// one rollout per pair on an unbounded clone of `proto`, run in lockstep so
// the policy is queried once per step for the whole batch.
std::vector<double> batched_returns(const envs::Environment& proto, std::span<const std::vector<double>> observations,
                                    std::span<const std::vector<double>> env_actions, const BatchPolicy& policy,
                                    const RolloutOptions& opts, Rng& rng);

BiasEstimate summarize_bias(std::span<const double> truth, std::span<const double> estimates, double tail_bound);

// Critic estimate min(Q1, Q2) against returns of the agent's stochastic policy.
BiasEstimate estimate_bias(const agents::SacAgent& agent, const envs::Environment& proto,
                           std::span<const replay::Transition> pairs, double action_scale, const RolloutOptions& opts,
                           Rng& rng);
// Tabular Q against returns of the greedy policy.
BiasEstimate estimate_bias(const agents::TabularAgent& agent, const envs::Environment& proto,
                           std::span<const replay::Transition> pairs, const RolloutOptions& opts, Rng& rng);

struct BiasPoint {
  std::uint64_t step = 0;
  BiasEstimate estimate;
};

// Offline bias series of a finished run: every checkpoint under
// <run_dir>/checkpoints (or final.ckpt alone), with pairs drawn uniformly
// from the saved buffer snapshot <run_dir>/buffer.bin.
std::vector<BiasPoint> estimate_bias_series(const ExperimentConfig& cfg, const std::string& run_dir, std::uint64_t seed);

}  // namespace roer::harness
