#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "roer/mdp.hpp"
#include "roer/rng.hpp"

namespace roer::envs {

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminal = false;   // true absorbing end; no bootstrap
  bool truncated = false;  // time limit or restart; bootstrap through it
};

// Episodic environment. Stepping after a terminal or truncated step without
// reset() raises ProtocolError. restore() starts a fresh episode from a
// previously observed observation.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t observation_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual bool discrete() const = 0;
  // Largest |reward| per step, for Monte-Carlo tail bounds.
  virtual double reward_bound() const = 0;

  virtual std::vector<double> reset() = 0;
  virtual StepResult step(const std::vector<double>& action) = 0;
  virtual void restore(const std::vector<double>& observation) = 0;

  // Disables the time limit and random restarts (Monte-Carlo rollouts).
  virtual void set_unbounded(bool unbounded) = 0;

  // Independent copy, including the generator state.
  virtual std::unique_ptr<Environment> clone() const = 0;
  // Reseeds the environment's own generator.
  virtual void reseed(std::uint64_t seed) = 0;
};

// Samples transitions of a TabularMdp. Observations and actions are single
// indices stored as doubles. With restart_probability > 0 each step ends the
// episode (truncated) with that probability, so long-run visitation matches
// the discounted occupancy when restart_probability = 1 - gamma.
class TabularEnv final : public Environment {
 public:
  TabularEnv(mdp::TabularMdp mdp, std::uint64_t seed, std::size_t horizon = 1000, double restart_probability = 0.0);

  std::size_t observation_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  bool discrete() const override { return true; }
  double reward_bound() const override;

  std::vector<double> reset() override;
  StepResult step(const std::vector<double>& action) override;
  void restore(const std::vector<double>& observation) override;
  void set_unbounded(bool unbounded) override { unbounded_ = unbounded; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularEnv>(*this); }
  void reseed(std::uint64_t seed) override { rng_.seed(seed); }

  std::size_t state() const { return state_; }
  const mdp::TabularMdp& model() const { return mdp_; }

 private:
  mdp::TabularMdp mdp_;
  Rng rng_;
  std::size_t horizon_;
  double restart_probability_;
  std::size_t state_ = 0;
  std::size_t t_ = 0;
  bool needs_reset_ = true;
  bool unbounded_ = false;
};

// Torque-limited pendulum swing-up. theta = 0 is upright.
//   theta_dd = 3 g / (2 l) sin(theta) + 3 / (m l^2) u
// integrated with semi-implicit Euler (velocity first, clipped to max_speed).
// Reward -(wrap(theta)^2 + 0.1 theta_d^2 + 0.001 u^2); observation
// (cos theta, sin theta, theta_d). Actions are torques in [-max_torque, max_torque].
class PendulumEnv final : public Environment {
 public:
  struct Params {
    double g = 10.0;
    double m = 1.0;
    double l = 1.0;
    double dt = 0.05;
    double max_speed = 8.0;
    double max_torque = 2.0;
    std::size_t horizon = 200;
  };

  explicit PendulumEnv(std::uint64_t seed) : PendulumEnv(seed, Params{}) {}
  PendulumEnv(std::uint64_t seed, Params params);

  std::size_t observation_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  bool discrete() const override { return false; }
  double reward_bound() const override;

  std::vector<double> reset() override;
  StepResult step(const std::vector<double>& action) override;
  void restore(const std::vector<double>& observation) override;
  void set_unbounded(bool unbounded) override { unbounded_ = unbounded; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PendulumEnv>(*this); }
  void reseed(std::uint64_t seed) override { rng_.seed(seed); }

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  // Mechanical energy per unit inertia: theta_d^2 / 2 + 3 g / (2 l) cos(theta).
  double energy() const;
  const Params& params() const { return params_; }

 private:
  std::vector<double> observation() const;

  Params params_;
  Rng rng_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t t_ = 0;
  bool needs_reset_ = true;
  bool unbounded_ = false;
};

double wrap_angle(double x);

// A stochastic or deterministic policy acting on raw observations.
using PolicyFn = std::function<std::vector<double>(const std::vector<double>& observation, Rng& rng)>;

struct McOptions {
  double gamma = 0.99;
  std::size_t horizon = 1000;
  std::size_t rollouts_per_pair = 1;
};

struct McResult {
  std::vector<double> returns;  // one averaged return per pair
  double mean = 0.0;
  double std_error = 0.0;
  // Bound on the discounted reward mass beyond the horizon.
  double tail_bound = 0.0;
  std::size_t truncated_rollouts = 0;
};

struct StateAction {
  std::vector<double> observation;
  std::vector<double> action;
};

// Discounted returns from each (observation, action): take the action, then
// follow `policy` until a terminal step or the horizon.
McResult mc_true_value(Environment& env, const PolicyFn& policy, std::span<const StateAction> pairs,
                       const McOptions& opts, Rng& rng);

}  // namespace roer::envs
