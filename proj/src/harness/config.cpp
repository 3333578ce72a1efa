#include "roer/harness/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "roer/errors.hpp"

namespace roer::harness {

namespace {

void merge_strict(Json& base, const Json& over, const std::string& path) {
  if (!over.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge_strict(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
T get(const Json& doc, const char* section, const char* key) {
  const Json& node = section ? doc.at(section) : doc;
  const std::string name = section ? std::string(section) + "." + key : std::string(key);
  try {
    return node.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + name + "' has the wrong type");
  }
}

schemes::MeanMode parse_mean_mode(const std::string& s) {
  if (s == "batch") return schemes::MeanMode::Batch;
  if (s == "running") return schemes::MeanMode::Running;
  throw ConfigError("roer.mean_mode must be 'batch' or 'running', got '" + s + "'");
}

TrainMode parse_mode(const std::string& s) {
  if (s == "sampling") return TrainMode::Sampling;
  if (s == "weighting") return TrainMode::Weighting;
  throw ConfigError("mode must be 'sampling' or 'weighting', got '" + s + "'");
}

CriticLoss parse_critic_loss(const std::string& s) {
  if (s == "auto") return CriticLoss::Auto;
  if (s == "mse") return CriticLoss::MeanSquare;
  if (s == "huber") return CriticLoss::Huber;
  throw ConfigError("critic_loss must be 'auto', 'mse' or 'huber', got '" + s + "'");
}

}  // namespace

Json default_config_json(const std::string& profile) {
  if (profile != "test" && profile != "full") throw ConfigError("profile must be 'test' or 'full', got '" + profile + "'");
  const bool full = profile == "full";
  const double lr = full ? 3e-3 : 3e-4;
  Json hidden = full ? Json::array({256, 256}) : Json::array({64, 64});
  return Json{
      {"profile", profile},
      {"env",
       {{"id", "pendulum"},
        {"horizon", 200},
        {"chain_length", 10},
        {"goal_reward", 1.0},
        {"distractor_reward", 0.0},
        {"slip", 0.0},
        {"n_states", 5},
        {"n_actions", 2},
        {"mdp_seed", 0},
        {"mdp_path", ""},
        {"gamma", 0.9},
        {"restart_probability", -1.0}}},
      {"scheme", "uniform"},
      {"roer",
       {{"lambda", 0.01},
        {"beta", 1.0},
        {"grad_clip", 7.0},
        {"max_exp_clip", 100.0},
        {"min_exp_clip", 1.0},
        {"min_priority_clip", 1.0},
        {"train_start_step", 0},
        {"mean_mode", "batch"}}},
      {"per", {{"alpha", 0.4}, {"min_priority", 1.0}}},
      {"laber", {{"large_batch", 1024}}},
      {"agent",
       {{"hidden", hidden},
        {"gamma", 0.99},
        {"polyak_tau", 5e-3},
        {"actor_lr", lr},
        {"critic_lr", lr},
        {"value_lr", lr},
        {"temperature_lr", lr},
        {"init_temperature", 1.0},
        {"target_entropy", nullptr},
        {"huber_k", 1.0},
        {"penalty_coef", 1.0},
        {"literal_value_target", false},
        {"value_noise", 0.1},
        {"log_std_min", -10.0},
        {"log_std_max", 2.0}}},
      {"tabular", {{"learning_rate", 0.2}, {"temperature", 0.01}, {"epsilon", 0.2}, {"initial_q", 0.0}}},
      {"critic_loss", "auto"},
      {"mode", "sampling"},
      {"batch_size", full ? 256 : 64},
      {"buffer_capacity", 1000000},
      {"total_steps", full ? 1000000 : 20000},
      {"train_start", full ? 10000 : 1000},
      {"eval_every", full ? 5000 : 1000},
      {"eval_episodes", full ? 10 : 5},
      {"updates_per_step", 1},
      {"bias_every", 0},
      {"bias_batch", full ? 256 : 64},
      {"bias_horizon", 1000},
      {"max_aborted_updates", 100},
      {"seeds", Json::array({0})},
      {"output_dir", "runs/default"},
      {"offline_dataset", nullptr},
      {"offline_prerefresh", false},
      {"reward_shift", 0.0},
      {"save_buffer", false},
      {"keep_checkpoints", false},
      {"threads", 1},
  };
}

ExperimentConfig parse_config(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  std::string profile = "test";
  if (doc.contains("profile")) {
    if (!doc["profile"].is_string()) throw ConfigError("config key 'profile' has the wrong type");
    profile = doc["profile"].get<std::string>();
  }
  Json d = default_config_json(profile);
  merge_strict(d, doc, "");

  ExperimentConfig c;
  c.profile = profile;
  auto& e = c.env;
  e.id = get<std::string>(d, "env", "id");
  e.horizon = get<std::size_t>(d, "env", "horizon");
  e.chain_length = get<std::size_t>(d, "env", "chain_length");
  e.goal_reward = get<double>(d, "env", "goal_reward");
  e.distractor_reward = get<double>(d, "env", "distractor_reward");
  e.slip = get<double>(d, "env", "slip");
  e.n_states = get<std::size_t>(d, "env", "n_states");
  e.n_actions = get<std::size_t>(d, "env", "n_actions");
  e.mdp_seed = get<std::uint64_t>(d, "env", "mdp_seed");
  e.mdp_path = get<std::string>(d, "env", "mdp_path");
  e.gamma = get<double>(d, "env", "gamma");
  e.restart_probability = get<double>(d, "env", "restart_probability");

  c.scheme = schemes::parse_scheme(get<std::string>(d, nullptr, "scheme"));

  auto& r = c.roer;
  r.lambda = get<double>(d, "roer", "lambda");
  r.beta = get<double>(d, "roer", "beta");
  r.grad_clip = get<double>(d, "roer", "grad_clip");
  r.max_exp_clip = get<double>(d, "roer", "max_exp_clip");
  r.min_exp_clip = get<double>(d, "roer", "min_exp_clip");
  r.min_priority_clip = get<double>(d, "roer", "min_priority_clip");
  r.train_start_step = get<std::uint64_t>(d, "roer", "train_start_step");
  r.mean_mode = parse_mean_mode(get<std::string>(d, "roer", "mean_mode"));

  c.per.alpha = get<double>(d, "per", "alpha");
  c.per.min_priority = get<double>(d, "per", "min_priority");
  c.laber.large_batch = get<std::size_t>(d, "laber", "large_batch");

  auto& a = c.agent;
  a.hidden = get<std::vector<std::size_t>>(d, "agent", "hidden");
  a.gamma = get<double>(d, "agent", "gamma");
  a.polyak_tau = get<double>(d, "agent", "polyak_tau");
  a.actor_opt.learning_rate = get<double>(d, "agent", "actor_lr");
  a.critic_opt.learning_rate = get<double>(d, "agent", "critic_lr");
  a.value_opt.learning_rate = get<double>(d, "agent", "value_lr");
  a.temperature_opt.learning_rate = get<double>(d, "agent", "temperature_lr");
  a.init_temperature = get<double>(d, "agent", "init_temperature");
  const auto& te = d["agent"]["target_entropy"];
  a.target_entropy = te.is_null() ? std::nan("") : get<double>(d, "agent", "target_entropy");
  a.huber_k = get<double>(d, "agent", "huber_k");
  a.penalty_coef = get<double>(d, "agent", "penalty_coef");
  a.literal_value_target = get<bool>(d, "agent", "literal_value_target");
  a.value_noise = get<double>(d, "agent", "value_noise");
  a.log_std_min = get<double>(d, "agent", "log_std_min");
  a.log_std_max = get<double>(d, "agent", "log_std_max");

  auto& t = c.tabular;
  t.learning_rate = get<double>(d, "tabular", "learning_rate");
  t.temperature = get<double>(d, "tabular", "temperature");
  t.epsilon = get<double>(d, "tabular", "epsilon");
  t.initial_q = get<double>(d, "tabular", "initial_q");
  t.gamma = e.gamma;

  c.critic_loss = parse_critic_loss(get<std::string>(d, nullptr, "critic_loss"));
  c.mode = parse_mode(get<std::string>(d, nullptr, "mode"));
  c.batch_size = get<std::size_t>(d, nullptr, "batch_size");
  c.buffer_capacity = get<std::size_t>(d, nullptr, "buffer_capacity");
  c.total_steps = get<std::uint64_t>(d, nullptr, "total_steps");
  c.train_start = get<std::uint64_t>(d, nullptr, "train_start");
  c.eval_every = get<std::uint64_t>(d, nullptr, "eval_every");
  c.eval_episodes = get<std::size_t>(d, nullptr, "eval_episodes");
  c.updates_per_step = get<std::size_t>(d, nullptr, "updates_per_step");
  c.bias_every = get<std::uint64_t>(d, nullptr, "bias_every");
  c.bias_batch = get<std::size_t>(d, nullptr, "bias_batch");
  c.bias_horizon = get<std::size_t>(d, nullptr, "bias_horizon");
  c.max_aborted_updates = get<std::size_t>(d, nullptr, "max_aborted_updates");
  c.seeds = get<std::vector<std::uint64_t>>(d, nullptr, "seeds");
  c.output_dir = get<std::string>(d, nullptr, "output_dir");
  if (!d["offline_dataset"].is_null()) c.offline_dataset = get<std::string>(d, nullptr, "offline_dataset");
  c.offline_prerefresh = get<bool>(d, nullptr, "offline_prerefresh");
  c.reward_shift = get<double>(d, nullptr, "reward_shift");
  c.save_buffer = get<bool>(d, nullptr, "save_buffer");
  c.keep_checkpoints = get<bool>(d, nullptr, "keep_checkpoints");
  c.threads = get<std::size_t>(d, nullptr, "threads");

  // The value network shares the scheme's loss temperature and clip.
  if (c.uses_value_network()) {
    a.value_loss = c.scheme == schemes::SchemeKind::Roer ? agents::ValueLoss::Gumbel : agents::ValueLoss::Chi2;
    a.value_beta = r.beta;
    a.value_grad_clip = r.grad_clip;
  } else {
    a.value_loss = agents::ValueLoss::None;
  }
  c.validate();
  return c;
}

bool ExperimentConfig::uses_value_network() const {
  return scheme == schemes::SchemeKind::Roer || scheme == schemes::SchemeKind::RoerChi2;
}

double ExperimentConfig::effective_huber_k() const {
  switch (critic_loss) {
    case CriticLoss::MeanSquare:
      return std::numeric_limits<double>::infinity();
    case CriticLoss::Huber:
      return agent.huber_k;
    case CriticLoss::Auto:
      break;
  }
  return scheme == schemes::SchemeKind::Uniform ? std::numeric_limits<double>::infinity() : agent.huber_k;
}

agents::SacConfig ExperimentConfig::agent_config() const {
  auto a = agent;
  a.huber_k = effective_huber_k();
  return a;
}

void ExperimentConfig::validate() const {
  const auto& e = env;
  if (e.id != "pendulum" && e.id != "chain" && e.id != "random_mdp" && e.id != "mdp_file") {
    throw ConfigError("unknown environment id '" + e.id + "'");
  }
  if (e.horizon == 0) throw ConfigError("env.horizon must be positive");
  if (e.tabular()) {
    if (!(e.gamma > 0.0 && e.gamma < 1.0)) throw ConfigError("env.gamma must lie in (0, 1)");
    if (e.restart_probability >= 1.0) throw ConfigError("env.restart_probability must be below 1");
    if (e.id == "chain" && e.chain_length < 2) throw ConfigError("env.chain_length must be at least 2");
    if (e.id == "chain" && !(e.slip >= 0.0 && e.slip < 1.0)) throw ConfigError("env.slip must lie in [0, 1)");
    if (e.id == "random_mdp" && (e.n_states == 0 || e.n_actions == 0)) throw ConfigError("env.n_states and env.n_actions must be positive");
    if (e.id == "mdp_file" && e.mdp_path.empty()) throw ConfigError("env.mdp_path is required for mdp_file");
    tabular.validate();
  } else {
    agent.validate();
  }
  if (total_steps <= train_start) throw ConfigError("total_steps must exceed train_start");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
  if (updates_per_step == 0) throw ConfigError("updates_per_step must be positive");
  if (bias_every > 0 && bias_batch == 0) throw ConfigError("bias_batch must be positive");
  if (bias_horizon == 0) throw ConfigError("bias_horizon must be positive");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (!std::isfinite(reward_shift)) throw ConfigError("reward_shift must be finite");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  switch (scheme) {
    case schemes::SchemeKind::Uniform:
      break;
    case schemes::SchemeKind::Per:
      per.validate();
      break;
    case schemes::SchemeKind::Laber:
      laber.validate(batch_size);
      break;
    case schemes::SchemeKind::Roer:
    case schemes::SchemeKind::RoerChi2:
      roer.validate();
      break;
  }
  if (mode == TrainMode::Weighting && scheme == schemes::SchemeKind::Laber) {
    throw ConfigError("laber already weights its losses; use mode 'sampling'");
  }
}

Json config_to_json(const ExperimentConfig& c) {
  Json d = default_config_json(c.profile);
  auto& e = d["env"];
  e["id"] = c.env.id;
  e["horizon"] = c.env.horizon;
  e["chain_length"] = c.env.chain_length;
  e["goal_reward"] = c.env.goal_reward;
  e["distractor_reward"] = c.env.distractor_reward;
  e["slip"] = c.env.slip;
  e["n_states"] = c.env.n_states;
  e["n_actions"] = c.env.n_actions;
  e["mdp_seed"] = c.env.mdp_seed;
  e["mdp_path"] = c.env.mdp_path;
  e["gamma"] = c.env.gamma;
  e["restart_probability"] = c.env.restart_probability;
  d["scheme"] = std::string(schemes::scheme_name(c.scheme));
  auto& r = d["roer"];
  r["lambda"] = c.roer.lambda;
  r["beta"] = c.roer.beta;
  r["grad_clip"] = c.roer.grad_clip;
  r["max_exp_clip"] = c.roer.max_exp_clip;
  r["min_exp_clip"] = c.roer.min_exp_clip;
  r["min_priority_clip"] = c.roer.min_priority_clip;
  r["train_start_step"] = c.roer.train_start_step;
  r["mean_mode"] = c.roer.mean_mode == schemes::MeanMode::Batch ? "batch" : "running";
  d["per"]["alpha"] = c.per.alpha;
  d["per"]["min_priority"] = c.per.min_priority;
  d["laber"]["large_batch"] = c.laber.large_batch;
  auto& a = d["agent"];
  a["hidden"] = c.agent.hidden;
  a["gamma"] = c.agent.gamma;
  a["polyak_tau"] = c.agent.polyak_tau;
  a["actor_lr"] = c.agent.actor_opt.learning_rate;
  a["critic_lr"] = c.agent.critic_opt.learning_rate;
  a["value_lr"] = c.agent.value_opt.learning_rate;
  a["temperature_lr"] = c.agent.temperature_opt.learning_rate;
  a["init_temperature"] = c.agent.init_temperature;
  a["target_entropy"] = std::isnan(c.agent.target_entropy) ? Json(nullptr) : Json(c.agent.target_entropy);
  a["huber_k"] = c.agent.huber_k;
  a["penalty_coef"] = c.agent.penalty_coef;
  a["literal_value_target"] = c.agent.literal_value_target;
  a["value_noise"] = c.agent.value_noise;
  a["log_std_min"] = c.agent.log_std_min;
  a["log_std_max"] = c.agent.log_std_max;
  d["tabular"]["learning_rate"] = c.tabular.learning_rate;
  d["tabular"]["temperature"] = c.tabular.temperature;
  d["tabular"]["epsilon"] = c.tabular.epsilon;
  d["tabular"]["initial_q"] = c.tabular.initial_q;
  d["critic_loss"] = c.critic_loss == CriticLoss::Auto ? "auto" : c.critic_loss == CriticLoss::MeanSquare ? "mse" : "huber";
  d["mode"] = c.mode == TrainMode::Sampling ? "sampling" : "weighting";
  d["batch_size"] = c.batch_size;
  d["buffer_capacity"] = c.buffer_capacity;
  d["total_steps"] = c.total_steps;
  d["train_start"] = c.train_start;
  d["eval_every"] = c.eval_every;
  d["eval_episodes"] = c.eval_episodes;
  d["updates_per_step"] = c.updates_per_step;
  d["bias_every"] = c.bias_every;
  d["bias_batch"] = c.bias_batch;
  d["bias_horizon"] = c.bias_horizon;
  d["max_aborted_updates"] = c.max_aborted_updates;
  d["seeds"] = c.seeds;
  d["output_dir"] = c.output_dir;
  d["offline_dataset"] = c.offline_dataset ? Json(*c.offline_dataset) : Json(nullptr);
  d["offline_prerefresh"] = c.offline_prerefresh;
  d["reward_shift"] = c.reward_shift;
  d["save_buffer"] = c.save_buffer;
  d["keep_checkpoints"] = c.keep_checkpoints;
  d["threads"] = c.threads;
  return d;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + ex.what());
  }
  return parse_config(doc);
}

void set_dotted(Json& doc, const std::string& dotted_key, const Json& value) {
  if (dotted_key.empty()) throw ConfigError("empty override key");
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + dotted_key + "'");
    if (!node->is_object()) throw ConfigError("override key '" + dotted_key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

void apply_override(Json& doc, const std::string& dotted_key, const std::string& value) {
  Json parsed = Json::parse(value, nullptr, false);
  set_dotted(doc, dotted_key, parsed.is_discarded() ? Json(value) : parsed);
}

void apply_environment_overrides(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("ROER_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  if (const char* th = std::getenv("ROER_THREADS"); th && *th) {
    char* end = nullptr;
    const long n = std::strtol(th, &end, 10);
    if (*end != '\0' || n <= 0) throw ConfigError(std::string("ROER_THREADS must be a positive integer, got '") + th + "'");
    cfg.threads = static_cast<std::size_t>(n);
  }
}

}  // namespace roer::harness
