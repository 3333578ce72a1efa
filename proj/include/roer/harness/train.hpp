#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roer/envs.hpp"
#include "roer/harness/config.hpp"
#include "roer/harness/metrics.hpp"
#include "roer/mdp.hpp"

namespace roer::harness {

// Tabular model for a tabular environment config (throws ConfigError otherwise).
mdp::TabularMdp make_mdp(const EnvConfig& env);
// Training environment for the config; eval environments disable restarts.
std::unique_ptr<envs::Environment> make_environment(const EnvConfig& env, std::uint64_t seed, bool for_eval = false);

struct SeedResult {
  std::uint64_t seed = 0;
  std::string run_dir;
  bool failed = false;
  std::string failure;
  std::optional<double> final_return;
  std::optional<double> final_bias;
  std::optional<double> initial_kl;
  std::optional<double> final_kl;
  std::optional<double> final_q_error;
  std::vector<MetricsRecord> records;

  Json to_json() const;
};

struct TrainSummary {
  std::vector<SeedResult> seeds;

  std::size_t failures() const;
};

// One seed of the training loop. Writes metrics.jsonl, timing.jsonl,
// summary.json and checkpoints under run_dir.
SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& run_dir);

// Every seed of the config (cfg.threads workers), each under
// <output_dir>/seed_<seed>; writes <output_dir>/config.json and summary.csv.
TrainSummary run_train(const ExperimentConfig& cfg);

}  // namespace roer::harness
