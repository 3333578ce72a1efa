#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "roer/sac.hpp"
#include "roer/schemes.hpp"
#include "roer/tabular_agent.hpp"

namespace roer::harness {

using Json = nlohmann::json;

struct EnvConfig {
  // pendulum | chain | random_mdp | mdp_file
  std::string id = "pendulum";
  std::size_t horizon = 200;
  // chain
  std::size_t chain_length = 10;
  double goal_reward = 1.0;
  double distractor_reward = 0.0;
  double slip = 0.0;
  // random_mdp
  std::size_t n_states = 5;
  std::size_t n_actions = 2;
  std::uint64_t mdp_seed = 0;
  // mdp_file
  std::string mdp_path;
  // Tabular discount, also the agent's gamma for tabular runs.
  double gamma = 0.9;
  // Per-step restart probability of tabular envs; negative means 1 - gamma.
  double restart_probability = -1.0;

  bool tabular() const { return id != "pendulum"; }
};

enum class TrainMode { Sampling, Weighting };
enum class CriticLoss { Auto, MeanSquare, Huber };

struct ExperimentConfig {
  std::string profile = "test";
  EnvConfig env;
  schemes::SchemeKind scheme = schemes::SchemeKind::Uniform;
  schemes::RoerConfig roer;
  schemes::PerConfig per;
  schemes::LaberConfig laber;
  agents::SacConfig agent;
  agents::TabularConfig tabular;
  CriticLoss critic_loss = CriticLoss::Auto;
  TrainMode mode = TrainMode::Sampling;

  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 1000000;
  std::uint64_t total_steps = 20000;
  std::uint64_t train_start = 1000;
  std::uint64_t eval_every = 1000;
  std::size_t eval_episodes = 5;
  std::size_t updates_per_step = 1;
  // Bias metric schedule; 0 disables it.
  std::uint64_t bias_every = 0;
  std::size_t bias_batch = 64;
  std::size_t bias_horizon = 1000;
  // Abort the run after this many consecutive non-finite updates.
  std::size_t max_aborted_updates = 100;

  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "runs/default";
  std::optional<std::string> offline_dataset;
  // Rescore every stored priority once, the first time the scheme is active.
  bool offline_prerefresh = false;
  double reward_shift = 0.0;
  bool save_buffer = false;
  // Keep an agent checkpoint at every bias-scheduled step.
  bool keep_checkpoints = false;
  std::size_t threads = 1;

  // Throws ConfigError. Knobs of inactive schemes are not inspected.
  void validate() const;
  bool uses_value_network() const;
  double effective_huber_k() const;
  // Agent settings with the critic loss resolved.
  agents::SacConfig agent_config() const;
};

// Full default document for a profile ("test" or "full").
Json default_config_json(const std::string& profile = "test");

// Merges `doc` over the defaults of its profile; unknown keys raise ConfigError.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config_file(const std::string& path);
Json config_to_json(const ExperimentConfig& cfg);

// Sets a dotted key ("roer.beta") in `doc`; `value` is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(Json& doc, const std::string& dotted_key, const std::string& value);
void set_dotted(Json& doc, const std::string& dotted_key, const Json& value);

// ROER_OUTPUT_DIR and ROER_THREADS.
void apply_environment_overrides(ExperimentConfig& cfg);

}  // namespace roer::harness
