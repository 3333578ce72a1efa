#include "roer/harness/bias.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <regex>

#include "roer/binary_io.hpp"
#include "roer/errors.hpp"
#include "roer/harness/train.hpp"

namespace roer::harness {

namespace fs = std::filesystem;

std::vector<double> batched_returns(const envs::Environment& proto, std::span<const std::vector<double>> observations,
                                    std::span<const std::vector<double>> env_actions, const BatchPolicy& policy,
                                    const RolloutOptions& opts, Rng& rng) {
  if (observations.size() != env_actions.size()) throw InvalidInput("observation and action counts differ");
  if (observations.empty()) throw InvalidInput("no pairs to roll out");
  if (!(opts.gamma > 0.0 && opts.gamma < 1.0)) throw InvalidInput("gamma must lie in (0, 1)");
  if (opts.horizon == 0) throw InvalidInput("horizon must be positive");
  const std::size_t n = observations.size();
  std::vector<std::unique_ptr<envs::Environment>> envs;
  std::vector<double> returns(n, 0.0);
  std::vector<std::vector<double>> obs(n);
  std::vector<bool> live(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    auto e = proto.clone();
    e->reseed(rng());
    e->set_unbounded(true);
    e->restore(observations[i]);
    const auto step = e->step(env_actions[i]);
    returns[i] = step.reward + opts.reward_shift;
    obs[i] = step.observation;
    live[i] = !step.terminal;
    envs.push_back(std::move(e));
  }
  double discount = opts.gamma;
  for (std::size_t t = 1; t < opts.horizon; ++t) {
    std::vector<std::size_t> active;
    std::vector<std::vector<double>> batch;
    for (std::size_t i = 0; i < n; ++i) {
      if (live[i]) {
        active.push_back(i);
        batch.push_back(obs[i]);
      }
    }
    if (active.empty()) break;
    const auto actions = policy(batch, rng);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto i = active[k];
      const auto step = envs[i]->step(actions[k]);
      returns[i] += discount * (step.reward + opts.reward_shift);
      obs[i] = step.observation;
      live[i] = !step.terminal;
    }
    discount *= opts.gamma;
  }
  return returns;
}

BiasEstimate summarize_bias(std::span<const double> truth, std::span<const double> estimates, double tail_bound) {
  if (truth.size() != estimates.size() || truth.empty()) throw InvalidInput("bias inputs must be nonempty and aligned");
  BiasEstimate b;
  b.pairs = truth.size();
  const double n = static_cast<double>(truth.size());
  std::vector<double> diff(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    diff[i] = truth[i] - estimates[i];
    b.mean_true += truth[i] / n;
    b.mean_estimate += estimates[i] / n;
    b.bias += diff[i] / n;
  }
  if (truth.size() > 1) {
    double ss = 0.0;
    for (double d : diff) ss += (d - b.bias) * (d - b.bias);
    b.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  b.tail_bound = tail_bound;
  return b;
}

namespace {

double tail(const envs::Environment& proto, const RolloutOptions& opts) {
  const double bound = proto.reward_bound() + std::abs(opts.reward_shift);
  return std::pow(opts.gamma, static_cast<double>(opts.horizon)) * bound / (1.0 - opts.gamma);
}

}  // namespace

BiasEstimate estimate_bias(const agents::SacAgent& agent, const envs::Environment& proto,
                           std::span<const replay::Transition> pairs, double action_scale, const RolloutOptions& opts,
                           Rng& rng) {
  std::vector<std::vector<double>> obs, acts, env_acts;
  for (const auto& t : pairs) {
    obs.push_back(t.state);
    acts.push_back(t.action);
    auto a = t.action;
    for (auto& v : a) v *= action_scale;
    env_acts.push_back(std::move(a));
  }
  const auto estimates = agent.q_estimates(obs, acts);
  BatchPolicy policy = [&](const std::vector<std::vector<double>>& o, Rng& r) {
    auto a = agent.act_batch(o, false, r);
    for (auto& row : a) {
      for (auto& v : row) v *= action_scale;
    }
    return a;
  };
  const auto truth = batched_returns(proto, obs, env_acts, policy, opts, rng);
  return summarize_bias(truth, estimates, tail(proto, opts));
}

BiasEstimate estimate_bias(const agents::TabularAgent& agent, const envs::Environment& proto,
                           std::span<const replay::Transition> pairs, const RolloutOptions& opts, Rng& rng) {
  std::vector<std::vector<double>> obs, acts;
  std::vector<double> estimates;
  for (const auto& t : pairs) {
    obs.push_back(t.state);
    acts.push_back(t.action);
    estimates.push_back(agent.q(static_cast<std::size_t>(t.state.at(0)), static_cast<std::size_t>(t.action.at(0))));
  }
  BatchPolicy policy = [&](const std::vector<std::vector<double>>& o, Rng&) {
    std::vector<std::vector<double>> a;
    for (const auto& s : o) a.push_back({static_cast<double>(agent.greedy_action(static_cast<std::size_t>(s.at(0))))});
    return a;
  };
  const auto truth = batched_returns(proto, obs, acts, policy, opts, rng);
  return summarize_bias(truth, estimates, tail(proto, opts));
}

std::vector<BiasPoint> estimate_bias_series(const ExperimentConfig& cfg, const std::string& run_dir, std::uint64_t seed) {
  const fs::path dir(run_dir);
  const auto buffer_path = dir / "buffer.bin";
  if (!fs::exists(buffer_path)) {
    throw ConfigError("run directory '" + run_dir + "' has no buffer.bin; train with save_buffer or bias_every");
  }
  const auto buffer = replay::PriorityBuffer::load(read_file_bytes(buffer_path.string()));

  std::vector<std::pair<std::uint64_t, fs::path>> checkpoints;
  const std::regex pattern(R"(step_(\d+)\.ckpt)");
  if (fs::exists(dir / "checkpoints")) {
    for (const auto& entry : fs::directory_iterator(dir / "checkpoints")) {
      std::smatch m;
      const auto name = entry.path().filename().string();
      if (std::regex_match(name, m, pattern)) checkpoints.emplace_back(std::stoull(m[1].str()), entry.path());
    }
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  if (checkpoints.empty()) {
    if (!fs::exists(dir / "final.ckpt")) throw ConfigError("run directory '" + run_dir + "' has no checkpoints");
    checkpoints.emplace_back(cfg.total_steps, dir / "final.ckpt");
  }

  const auto proto = make_environment(cfg.env, derive_seed(seed, Stream::kEvalEnv), true);
  Rng rng = make_rng(seed, Stream::kBias);
  RolloutOptions opts;
  opts.gamma = cfg.env.tabular() ? cfg.env.gamma : cfg.agent.gamma;
  opts.horizon = cfg.bias_horizon;
  opts.reward_shift = cfg.reward_shift;
  const std::size_t batch = cfg.bias_batch > 0 ? cfg.bias_batch : 64;

  std::vector<BiasPoint> out;
  for (const auto& [step, path] : checkpoints) {
    const auto bytes = read_file_bytes(path.string());
    const auto sample = buffer.sample_uniform(batch, rng);
    BiasPoint point;
    point.step = step;
    if (cfg.env.tabular()) {
      const auto agent = agents::TabularAgent::load(bytes, cfg.tabular);
      point.estimate = estimate_bias(agent, *proto, sample.transitions, opts, rng);
    } else {
      const auto agent = agents::SacAgent::load(bytes, cfg.agent_config());
      const auto& pend = dynamic_cast<const envs::PendulumEnv&>(*proto);
      point.estimate = estimate_bias(agent, *proto, sample.transitions, pend.params().max_torque, opts, rng);
    }
    out.push_back(point);
  }
  return out;
}

}  // namespace roer::harness
