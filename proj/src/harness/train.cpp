#include "roer/harness/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <numeric>
#include <thread>

#include "roer/errors.hpp"
#include "roer/harness/bias.hpp"
#include "roer/harness/dataset.hpp"
#include "roer/replay.hpp"
#include "roer/sac.hpp"
#include "roer/schemes.hpp"
#include "roer/tabular_agent.hpp"

namespace roer::harness {

namespace fs = std::filesystem;

mdp::TabularMdp make_mdp(const EnvConfig& env) {
  if (env.id == "chain") {
    return mdp::chain_mdp(env.chain_length, env.gamma, env.goal_reward, env.distractor_reward, env.slip);
  }
  if (env.id == "random_mdp") {
    Rng rng(splitmix64(env.mdp_seed));
    return mdp::random_mdp(env.n_states, env.n_actions, env.gamma, rng);
  }
  if (env.id == "mdp_file") {
    auto m = mdp::load_mdp_file(env.mdp_path);
    m.gamma = env.gamma;
    return m;
  }
  throw ConfigError("environment '" + env.id + "' is not tabular");
}

std::unique_ptr<envs::Environment> make_environment(const EnvConfig& env, std::uint64_t seed, bool for_eval) {
  if (env.id == "pendulum") {
    envs::PendulumEnv::Params p;
    p.horizon = env.horizon;
    return std::make_unique<envs::PendulumEnv>(seed, p);
  }
  const double restart = for_eval ? 0.0 : (env.restart_probability < 0.0 ? 1.0 - env.gamma : env.restart_probability);
  return std::make_unique<envs::TabularEnv>(make_mdp(env), seed, env.horizon, restart);
}

namespace {

std::optional<double> finite_or_null(double v) { return std::isfinite(v) ? std::optional<double>(v) : std::nullopt; }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// Uniform view over the continuous and tabular agents.
class Learner {
 public:
  virtual ~Learner() = default;
  // Action in agent scale; `explore` selects the behaviour policy.
  virtual std::vector<double> act(const std::vector<double>& obs, bool explore, Rng& rng) = 0;
  virtual std::vector<double> random_action(Rng& rng) = 0;
  virtual std::vector<double> to_env(const std::vector<double>& action) const = 0;
  virtual std::vector<double> value_td(const replay::SampledBatch& batch) = 0;
  virtual std::vector<double> critic_td(const replay::SampledBatch& batch, Rng& rng) = 0;
  virtual agents::StepMetrics update(const replay::SampledBatch& batch, std::span<const double> w, Rng& rng) = 0;
  virtual std::uint64_t aborted() const = 0;
  virtual bool finite() const = 0;
  virtual std::vector<std::uint8_t> save() const = 0;
  virtual BiasEstimate bias(const envs::Environment& proto, std::span<const replay::Transition> pairs,
                            const RolloutOptions& opts, Rng& rng) const = 0;
};

class SacLearner final : public Learner {
 public:
  SacLearner(const ExperimentConfig& cfg, std::size_t obs_dim, std::size_t act_dim, double scale, std::uint64_t seed)
      : agent_(obs_dim, act_dim, cfg.agent_config(), seed), scale_(scale) {}

  std::vector<double> act(const std::vector<double>& obs, bool explore, Rng& rng) override {
    return agent_.act(obs, !explore, rng);
  }
  std::vector<double> random_action(Rng& rng) override {
    std::vector<double> a(agent_.act_dim());
    for (auto& v : a) v = 2.0 * uniform01(rng) - 1.0;
    return a;
  }
  std::vector<double> to_env(const std::vector<double>& action) const override {
    auto a = action;
    for (auto& v : a) v *= scale_;
    return a;
  }
  std::vector<double> value_td(const replay::SampledBatch& batch) override { return agent_.value_td_errors(batch); }
  std::vector<double> critic_td(const replay::SampledBatch& batch, Rng& rng) override {
    return agent_.critic_td_errors(batch, rng);
  }
  agents::StepMetrics update(const replay::SampledBatch& batch, std::span<const double> w, Rng& rng) override {
    return agent_.update(batch, w, rng);
  }
  std::uint64_t aborted() const override { return agent_.aborted_updates(); }
  bool finite() const override {
    return agent_.actor().all_finite() && agent_.critic(0).all_finite() && agent_.critic(1).all_finite() &&
           agent_.value_net().all_finite();
  }
  std::vector<std::uint8_t> save() const override { return agent_.save(); }
  BiasEstimate bias(const envs::Environment& proto, std::span<const replay::Transition> pairs,
                    const RolloutOptions& opts, Rng& rng) const override {
    return estimate_bias(agent_, proto, pairs, scale_, opts, rng);
  }

 private:
  agents::SacAgent agent_;
  double scale_;
};

class TabularLearner final : public Learner {
 public:
  TabularLearner(const ExperimentConfig& cfg, std::size_t n_states, std::size_t n_actions)
      : agent_(n_states, n_actions, cfg.tabular) {}

  std::vector<double> act(const std::vector<double>& obs, bool explore, Rng& rng) override {
    const auto s = static_cast<std::size_t>(obs.at(0));
    return {static_cast<double>(explore ? agent_.act(s, rng) : agent_.greedy_action(s))};
  }
  std::vector<double> random_action(Rng& rng) override {
    return {static_cast<double>(uniform_index(rng, agent_.n_actions()))};
  }
  std::vector<double> to_env(const std::vector<double>& action) const override { return action; }
  std::vector<double> value_td(const replay::SampledBatch& batch) override { return agent_.td_errors(batch); }
  std::vector<double> critic_td(const replay::SampledBatch& batch, Rng&) override { return agent_.td_errors(batch); }
  agents::StepMetrics update(const replay::SampledBatch& batch, std::span<const double> w, Rng&) override {
    agents::StepMetrics m;
    m.critic_loss = agent_.update(batch, w);
    return m;
  }
  std::uint64_t aborted() const override { return 0; }
  bool finite() const override {
    return std::all_of(agent_.q_table().begin(), agent_.q_table().end(), [](double v) { return std::isfinite(v); });
  }
  std::vector<std::uint8_t> save() const override { return agent_.save(); }
  BiasEstimate bias(const envs::Environment& proto, std::span<const replay::Transition> pairs,
                    const RolloutOptions& opts, Rng& rng) const override {
    return estimate_bias(agent_, proto, pairs, opts, rng);
  }

  const agents::TabularAgent& agent() const { return agent_; }

 private:
  agents::TabularAgent agent_;
};

double evaluate(Learner& learner, envs::Environment& env, std::size_t episodes, Rng& rng) {
  double total = 0.0;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    auto obs = env.reset();
    while (true) {
      const auto step = env.step(learner.to_env(learner.act(obs, false, rng)));
      total += step.reward;
      if (step.terminal || step.truncated) break;
      obs = step.observation;
    }
  }
  return total / static_cast<double>(episodes);
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

// Tabular reference quantities for the KL and Q-error metrics.
struct TabularOracle {
  std::vector<double> optimal_occupancy;
  std::vector<double> q_star;
  double q_star_norm = 0.0;
};

TabularOracle make_oracle(const mdp::TabularMdp& model) {
  TabularOracle o;
  const auto vi = mdp::value_iteration(model);
  o.q_star = vi.q;
  o.optimal_occupancy = mdp::occupancy(model, mdp::deterministic_policy(model, vi.greedy));
  for (double v : vi.q) o.q_star_norm = std::max(o.q_star_norm, std::abs(v));
  return o;
}

}  // namespace

Json SeedResult::to_json() const {
  return Json{{"seed", seed},
              {"status", failed ? "failed" : "ok"},
              {"failure", failure},
              {"final_return", optional_json(final_return)},
              {"final_bias", optional_json(final_bias)},
              {"initial_kl", optional_json(initial_kl)},
              {"final_kl", optional_json(final_kl)},
              {"final_q_error", optional_json(final_q_error)}};
}

std::size_t TrainSummary::failures() const {
  return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.failed; }));
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& run_dir) {
  cfg.validate();
  SeedResult result;
  result.seed = seed;
  result.run_dir = run_dir;
  const fs::path dir(run_dir);
  fs::create_directories(dir);
  MetricsWriter metrics((dir / "metrics.jsonl").string());
  MetricsWriter timing((dir / "timing.jsonl").string());
  const auto wall_start = std::chrono::steady_clock::now();

  auto env = make_environment(cfg.env, derive_seed(seed, Stream::kEnv));
  auto eval_env = make_environment(cfg.env, derive_seed(seed, Stream::kEvalEnv), true);
  Rng actor_rng = make_rng(seed, Stream::kActor);
  Rng buffer_rng = make_rng(seed, Stream::kBuffer);
  Rng scheme_rng = make_rng(seed, Stream::kScheme);
  Rng bias_rng = make_rng(seed, Stream::kBias);

  const bool tabular = cfg.env.tabular();
  std::optional<mdp::TabularMdp> model;
  std::optional<TabularOracle> oracle;
  std::unique_ptr<Learner> learner;
  std::optional<replay::PriorityBuffer> buffer;
  if (tabular) {
    model = make_mdp(cfg.env);
    oracle = make_oracle(*model);
    learner = std::make_unique<TabularLearner>(cfg, model->n_states, model->n_actions);
    buffer.emplace(replay::PriorityBuffer::tabular(cfg.buffer_capacity, {model->n_states, model->n_actions}));
  } else {
    const auto& pend = dynamic_cast<const envs::PendulumEnv&>(*env);
    learner = std::make_unique<SacLearner>(cfg, env->observation_dim(), env->action_dim(), pend.params().max_torque,
                                           derive_seed(seed, Stream::kInit));
    buffer.emplace(cfg.buffer_capacity, env->observation_dim(), env->action_dim());
  }
  auto* tabular_learner = dynamic_cast<TabularLearner*>(learner.get());

  if (cfg.offline_dataset) {
    for (auto& t : load_offline_dataset(*cfg.offline_dataset, env->observation_dim(), env->action_dim())) {
      t.reward += cfg.reward_shift;
      buffer->push(std::move(t));
    }
  }
  const bool prefilled = buffer->size() > 0;

  std::optional<schemes::RoerPrioritizer> prioritizer;
  if (cfg.scheme == schemes::SchemeKind::Roer) prioritizer.emplace(cfg.roer);
  schemes::RoerDiagnostics roer_totals;
  std::uint64_t value_clip_total = 0;
  agents::StepMetrics last;
  std::uint64_t consecutive_aborts = 0;
  std::uint64_t train_steps = 0;
  std::optional<double> latest_bias;
  bool prerefreshed = false;

  auto tabular_metrics = [&](MetricsRecord& rec) {
    if (!tabular || buffer->size() == 0) return;
    const auto implied = buffer->implied_distribution();
    rec.kl_to_optimal = finite_or_null(mdp::kl_divergence(oracle->optimal_occupancy, implied));
    const auto& q = tabular_learner->agent().q_table();
    double err = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) err = std::max(err, std::abs(q[i] - oracle->q_star[i]));
    rec.q_error = oracle->q_star_norm > 0.0 ? err / oracle->q_star_norm : err;
  };

  auto make_record = [&](std::uint64_t step) {
    MetricsRecord rec;
    rec.step = step;
    rec.critic_loss = last.critic_loss;
    rec.penalty = last.penalty;
    rec.value_loss = last.value_loss;
    rec.actor_loss = last.actor_loss;
    rec.temperature = last.temperature;
    rec.entropy = last.entropy;
    rec.mean_q = last.mean_q;
    rec.mean_priority = buffer->size() ? buffer->total_priority() / static_cast<double>(buffer->size()) : 1.0;
    rec.value_clip_hits = value_clip_total;
    rec.upper_clip_hits = roer_totals.upper_clip_hits;
    rec.lower_clip_hits = roer_totals.lower_clip_hits;
    rec.floor_hits = roer_totals.floor_hits;
    rec.stale_skips = buffer->stale_skips();
    rec.aborted_updates = learner->aborted();
    tabular_metrics(rec);
    return rec;
  };

  auto persist = [&](const MetricsRecord& rec) {
    metrics.append(rec.to_json());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    timing.append(Json{{"step", rec.step}, {"wall_seconds", secs}});
    result.records.push_back(rec);
  };

  auto scheme_active = [&]() {
    switch (cfg.scheme) {
      case schemes::SchemeKind::Uniform:
      case schemes::SchemeKind::Laber:
        return false;
      case schemes::SchemeKind::Per:
        return true;
      default:
        return train_steps >= cfg.roer.train_start_step;
    }
  };

  auto scheme_priorities = [&](const replay::SampledBatch& batch) {
    std::vector<double> fresh;
    switch (cfg.scheme) {
      case schemes::SchemeKind::Uniform:
      case schemes::SchemeKind::Laber:
        break;
      case schemes::SchemeKind::Per:
        fresh = schemes::per_priority(learner->critic_td(batch, scheme_rng), cfg.per);
        break;
      case schemes::SchemeKind::Roer:
        if (train_steps >= cfg.roer.train_start_step) {
          schemes::RoerDiagnostics diag;
          fresh = prioritizer->update(learner->value_td(batch), batch.priorities, &diag);
          roer_totals.upper_clip_hits += diag.upper_clip_hits;
          roer_totals.lower_clip_hits += diag.lower_clip_hits;
          roer_totals.floor_hits += diag.floor_hits;
        }
        break;
      case schemes::SchemeKind::RoerChi2:
        if (train_steps >= cfg.roer.train_start_step) {
          fresh = schemes::chi2_priority(learner->value_td(batch), cfg.roer.beta);
        }
        break;
    }
    return fresh;
  };

  auto train_once = [&]() {
    replay::SampledBatch batch;
    std::vector<double> weights;
    const auto kind = cfg.scheme;
    if (kind == schemes::SchemeKind::Laber) {
      auto large = buffer->sample_uniform(cfg.laber.large_batch, buffer_rng);
      auto td = learner->critic_td(large, scheme_rng);
      for (auto& v : td) v = std::abs(v);
      const auto sel = schemes::laber_select(td, cfg.batch_size, buffer_rng);
      for (auto pos : sel.indices) {
        batch.indices.push_back(large.indices[pos]);
        batch.transitions.push_back(large.transitions[pos]);
        batch.priorities.push_back(large.priorities[pos]);
        batch.sampling_weights.push_back(1.0);
        batch.serials.push_back(large.serials[pos]);
      }
      weights = sel.importance_weights;
    } else if (cfg.mode == TrainMode::Weighting && kind != schemes::SchemeKind::Uniform) {
      batch = buffer->sample_uniform(cfg.batch_size, buffer_rng);
      const double m = mean_of(batch.priorities);
      for (double p : batch.priorities) weights.push_back(p / m);
    } else {
      batch = buffer->sample_proportional(cfg.batch_size, buffer_rng);
    }

    if (cfg.offline_prerefresh && prefilled && !prerefreshed && scheme_active()) {
      prerefreshed = true;
      for (std::size_t lo = 0; lo < buffer->size(); lo += cfg.batch_size) {
        replay::SampledBatch chunk;
        for (std::size_t slot = lo; slot < std::min(lo + cfg.batch_size, buffer->size()); ++slot) {
          chunk.indices.push_back(slot);
          chunk.transitions.push_back(buffer->at(slot));
          chunk.priorities.push_back(buffer->priority(slot));
          chunk.sampling_weights.push_back(1.0);
          chunk.serials.push_back(buffer->serial(slot));
        }
        const auto fresh = scheme_priorities(chunk);
        if (!fresh.empty()) buffer->update_priorities(chunk.indices, fresh, chunk.serials);
      }
    }
    const auto fresh = scheme_priorities(batch);
    if (!fresh.empty()) buffer->update_priorities(batch.indices, fresh, batch.serials);

    const auto before = learner->aborted();
    last = learner->update(batch, weights, actor_rng);
    value_clip_total += last.value_clip_hits;
    consecutive_aborts = learner->aborted() > before ? consecutive_aborts + 1 : 0;
    ++train_steps;
  };

  auto run_bias = [&]() {
    if (buffer->size() == 0) return;
    const auto sample = buffer->sample_uniform(cfg.bias_batch, bias_rng);
    RolloutOptions opts;
    opts.gamma = tabular ? model->gamma : cfg.agent.gamma;
    opts.horizon = cfg.bias_horizon;
    opts.reward_shift = cfg.reward_shift;
    latest_bias = learner->bias(*eval_env, sample.transitions, opts, bias_rng).bias;
  };

  auto save_checkpoint = [&](const std::string& name) {
    write_file_bytes((dir / name).string(), learner->save());
  };

  if (cfg.train_start == 0) persist(make_record(0));

  auto obs = env->reset();
  for (std::uint64_t step = 1; step <= cfg.total_steps; ++step) {
    const bool warmup = step <= cfg.train_start && !prefilled;
    const auto action = warmup ? learner->random_action(actor_rng) : learner->act(obs, true, actor_rng);
    const auto res = env->step(learner->to_env(action));
    replay::Transition t{obs, action, res.reward + cfg.reward_shift, res.observation, res.terminal, step};
    buffer->push(std::move(t));
    obs = (res.terminal || res.truncated) ? env->reset() : res.observation;

    if (step > cfg.train_start) {
      for (std::size_t u = 0; u < cfg.updates_per_step; ++u) train_once();
      if (consecutive_aborts >= cfg.max_aborted_updates) {
        result.failed = true;
        result.failure = "training diverged: " + std::to_string(consecutive_aborts) +
                         " consecutive non-finite updates at step " + std::to_string(step);
        break;
      }
    }

    const bool eval_now = step % cfg.eval_every == 0 || step == cfg.total_steps;
    const bool bias_now = cfg.bias_every > 0 && step % cfg.bias_every == 0;
    if (step == cfg.train_start || eval_now || bias_now) {
      auto rec = make_record(step);
      if (bias_now) {
        run_bias();
        rec.bias = latest_bias;
        if (cfg.keep_checkpoints) {
          fs::create_directories(dir / "checkpoints");
          save_checkpoint("checkpoints/step_" + std::to_string(step) + ".ckpt");
        }
      }
      if (eval_now) {
        rec.eval_return = evaluate(*learner, *eval_env, cfg.eval_episodes, actor_rng);
        if (learner->finite()) save_checkpoint("last_good.ckpt");
      }
      if (step == cfg.train_start) result.initial_kl = rec.kl_to_optimal;
      persist(rec);
    }
  }

  if (!result.failed) save_checkpoint("final.ckpt");
  if (cfg.save_buffer || cfg.bias_every > 0) write_file_bytes((dir / "buffer.bin").string(), buffer->snapshot());

  for (auto it = result.records.rbegin(); it != result.records.rend(); ++it) {
    if (!result.final_return && it->eval_return) result.final_return = it->eval_return;
    if (!result.final_bias && it->bias) result.final_bias = it->bias;
  }
  if (!result.records.empty()) {
    result.final_kl = result.records.back().kl_to_optimal;
    result.final_q_error = result.records.back().q_error;
  }
  write_text(dir / "summary.json", result.to_json().dump(2) + "\n");
  return result;
}

TrainSummary run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path root(cfg.output_dir);
  fs::create_directories(root);
  write_text(root / "config.json", config_to_json(cfg).dump(2) + "\n");

  TrainSummary summary;
  summary.seeds.resize(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const auto i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      const auto seed = cfg.seeds[i];
      const auto run_dir = (root / ("seed_" + std::to_string(seed))).string();
      try {
        summary.seeds[i] = run_seed(cfg, seed, run_dir);
      } catch (const std::exception& ex) {
        SeedResult failed;
        failed.seed = seed;
        failed.run_dir = run_dir;
        failed.failed = true;
        failed.failure = ex.what();
        summary.seeds[i] = std::move(failed);
      }
    }
  };
  const auto n_threads = std::min(cfg.threads, cfg.seeds.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "seed,status,final_return,final_bias,initial_kl,final_kl,final_q_error\n";
  auto cell = [](const std::optional<double>& v) {
    std::ostringstream s;
    s.precision(17);
    if (v) s << *v;
    return s.str();
  };
  for (const auto& s : summary.seeds) {
    csv << s.seed << ',' << (s.failed ? "failed" : "ok") << ',' << cell(s.final_return) << ',' << cell(s.final_bias)
        << ',' << cell(s.initial_kl) << ',' << cell(s.final_kl) << ',' << cell(s.final_q_error) << '\n';
  }
  write_text(root / "summary.csv", csv.str());
  return summary;
}

}  // namespace roer::harness
