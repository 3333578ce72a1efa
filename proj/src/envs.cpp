#include "roer/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "roer/errors.hpp"

namespace roer::envs {

namespace {

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the accumulated mass; take the last supported entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace

double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  x = std::fmod(x + std::numbers::pi, two_pi);
  if (x < 0.0) x += two_pi;
  return x - std::numbers::pi;
}

TabularEnv::TabularEnv(mdp::TabularMdp mdp, std::uint64_t seed, std::size_t horizon, double restart_probability)
    : mdp_(std::move(mdp)), rng_(seed), horizon_(horizon), restart_probability_(restart_probability) {
  mdp_.validate();
  if (horizon_ == 0) throw InvalidInput("horizon must be positive");
  if (!(restart_probability_ >= 0.0 && restart_probability_ < 1.0)) {
    throw InvalidInput("restart probability must lie in [0, 1)");
  }
}

double TabularEnv::reward_bound() const {
  double m = 0.0;
  for (double r : mdp_.rewards) m = std::max(m, std::abs(r));
  return m;
}

std::vector<double> TabularEnv::reset() {
  state_ = sample_index(mdp_.initial, rng_);
  t_ = 0;
  needs_reset_ = false;
  return {static_cast<double>(state_)};
}

void TabularEnv::restore(const std::vector<double>& observation) {
  if (observation.size() != 1 || observation[0] < 0.0 || observation[0] >= static_cast<double>(mdp_.n_states)) {
    throw InvalidInput("tabular observation out of range");
  }
  state_ = static_cast<std::size_t>(observation[0]);
  t_ = 0;
  needs_reset_ = false;
}

StepResult TabularEnv::step(const std::vector<double>& action) {
  if (needs_reset_) throw ProtocolError("step called on a finished episode; call reset() first");
  if (action.size() != 1 || action[0] < 0.0 || action[0] >= static_cast<double>(mdp_.n_actions)) {
    throw InvalidInput("tabular action out of range");
  }
  const auto a = static_cast<std::size_t>(action[0]);
  const std::size_t row = mdp_.sa(state_, a);
  StepResult out;
  out.reward = mdp_.rewards[row];
  state_ = sample_index({mdp_.transitions.data() + row * mdp_.n_states, mdp_.n_states}, rng_);
  out.observation = {static_cast<double>(state_)};
  ++t_;
  if (!unbounded_) {
    const bool restart = restart_probability_ > 0.0 && uniform01(rng_) < restart_probability_;
    out.truncated = restart || t_ >= horizon_;
  }
  needs_reset_ = out.terminal || out.truncated;
  return out;
}

PendulumEnv::PendulumEnv(std::uint64_t seed, Params params) : params_(params), rng_(seed) {
  if (params_.horizon == 0 || !(params_.dt > 0.0)) throw InvalidInput("invalid pendulum parameters");
}

double PendulumEnv::reward_bound() const {
  const double pi = std::numbers::pi;
  return pi * pi + 0.1 * params_.max_speed * params_.max_speed + 0.001 * params_.max_torque * params_.max_torque;
}

std::vector<double> PendulumEnv::observation() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

double PendulumEnv::energy() const {
  return 0.5 * theta_dot_ * theta_dot_ + 3.0 * params_.g / (2.0 * params_.l) * std::cos(theta_);
}

std::vector<double> PendulumEnv::reset() {
  theta_ = std::numbers::pi * (2.0 * uniform01(rng_) - 1.0);
  theta_dot_ = 2.0 * uniform01(rng_) - 1.0;
  t_ = 0;
  needs_reset_ = false;
  return observation();
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  if (!std::isfinite(theta) || !std::isfinite(theta_dot)) throw InvalidInput("pendulum state must be finite");
  theta_ = wrap_angle(theta);
  theta_dot_ = std::clamp(theta_dot, -params_.max_speed, params_.max_speed);
  t_ = 0;
  needs_reset_ = false;
}

void PendulumEnv::restore(const std::vector<double>& observation) {
  if (observation.size() != 3) throw InvalidInput("pendulum observation has three components");
  set_state(std::atan2(observation[1], observation[0]), observation[2]);
}

StepResult PendulumEnv::step(const std::vector<double>& action) {
  if (needs_reset_) throw ProtocolError("step called on a finished episode; call reset() first");
  if (action.size() != 1 || !std::isfinite(action[0])) throw InvalidInput("pendulum action must be one finite torque");
  const auto& p = params_;
  const double u = std::clamp(action[0], -p.max_torque, p.max_torque);
  const double th = wrap_angle(theta_);
  StepResult out;
  out.reward = -(th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);
  const double acc = 3.0 * p.g / (2.0 * p.l) * std::sin(theta_) + 3.0 / (p.m * p.l * p.l) * u;
  theta_dot_ = std::clamp(theta_dot_ + acc * p.dt, -p.max_speed, p.max_speed);
  theta_ = wrap_angle(theta_ + theta_dot_ * p.dt);
  out.observation = observation();
  ++t_;
  out.truncated = !unbounded_ && t_ >= p.horizon;
  needs_reset_ = out.truncated;
  return out;
}

McResult mc_true_value(Environment& env, const PolicyFn& policy, std::span<const StateAction> pairs,
                       const McOptions& opts, Rng& rng) {
  if (pairs.empty()) throw InvalidInput("mc_true_value needs at least one pair");
  if (!(opts.gamma > 0.0 && opts.gamma < 1.0)) throw InvalidInput("gamma must lie in (0, 1)");
  if (opts.horizon == 0 || opts.rollouts_per_pair == 0) throw InvalidInput("horizon and rollout count must be positive");
  McResult out;
  out.returns.reserve(pairs.size());
  env.set_unbounded(true);
  for (const auto& pair : pairs) {
    double acc = 0.0;
    for (std::size_t k = 0; k < opts.rollouts_per_pair; ++k) {
      env.restore(pair.observation);
      auto step = env.step(pair.action);
      double ret = step.reward;
      double discount = opts.gamma;
      std::size_t t = 1;
      while (!step.terminal && t < opts.horizon) {
        step = env.step(policy(step.observation, rng));
        ret += discount * step.reward;
        discount *= opts.gamma;
        ++t;
      }
      if (!step.terminal) ++out.truncated_rollouts;
      acc += ret;
    }
    out.returns.push_back(acc / static_cast<double>(opts.rollouts_per_pair));
  }
  env.set_unbounded(false);
  const double n = static_cast<double>(out.returns.size());
  for (double r : out.returns) out.mean += r;
  out.mean /= n;
  if (out.returns.size() > 1) {
    double ss = 0.0;
    for (double r : out.returns) ss += (r - out.mean) * (r - out.mean);
    out.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  if (out.truncated_rollouts > 0) {
    out.tail_bound = std::pow(opts.gamma, static_cast<double>(opts.horizon)) * env.reward_bound() / (1.0 - opts.gamma);
  }
  return out;
}

}  // namespace roer::envs
