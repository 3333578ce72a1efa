#include "roer/tabular_agent.hpp"

#include <algorithm>
#include <cmath>

#include "roer/binary_io.hpp"
#include "roer/errors.hpp"

namespace roer::agents {

namespace {
constexpr std::uint16_t kCheckpointVersion = 1;
}

void TabularConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tabular.gamma must lie in (0, 1)");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("tabular.learning_rate must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("tabular.temperature must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("tabular.epsilon must lie in [0, 1]");
  if (!std::isfinite(initial_q)) throw ConfigError("tabular.initial_q must be finite");
}

TabularAgent::TabularAgent(std::size_t n_states, std::size_t n_actions, TabularConfig cfg)
    : n_states_(n_states), n_actions_(n_actions), cfg_(cfg), q_(n_states * n_actions, cfg.initial_q) {
  if (n_states == 0 || n_actions == 0) throw ConfigError("tabular agent needs states and actions");
  cfg_.validate();
}

std::size_t TabularAgent::greedy_action(std::size_t state) const {
  const auto* row = q_.data() + state * n_actions_;
  return static_cast<std::size_t>(std::max_element(row, row + n_actions_) - row);
}

std::size_t TabularAgent::act(std::size_t state, Rng& rng) const {
  if (state >= n_states_) throw InvalidInput("state index out of range");
  if (cfg_.epsilon > 0.0 && uniform01(rng) < cfg_.epsilon) return uniform_index(rng, n_actions_);
  return greedy_action(state);
}

mdp::Policy TabularAgent::greedy_policy() const {
  mdp::Policy pi(q_.size(), 0.0);
  for (std::size_t s = 0; s < n_states_; ++s) pi[s * n_actions_ + greedy_action(s)] = 1.0;
  return pi;
}

double TabularAgent::soft_value(std::size_t state) const {
  const auto* row = q_.data() + state * n_actions_;
  const double m = *std::max_element(row, row + n_actions_);
  double acc = 0.0;
  for (std::size_t a = 0; a < n_actions_; ++a) acc += std::exp((row[a] - m) / cfg_.temperature);
  return m + cfg_.temperature * std::log(acc);
}

void TabularAgent::set_q_table(std::vector<double> q) {
  if (q.size() != q_.size()) throw InvalidInput("q table has the wrong size");
  for (double v : q) {
    if (!std::isfinite(v)) throw InvalidInput("q table must be finite");
  }
  q_ = std::move(q);
}

std::size_t TabularAgent::index_of(const std::vector<double>& v, std::size_t bound, const char* what) const {
  if (v.size() != 1 || !(v[0] >= 0.0) || v[0] >= static_cast<double>(bound) || v[0] != std::floor(v[0])) {
    throw InvalidInput(std::string("tabular ") + what + " index out of range");
  }
  return static_cast<std::size_t>(v[0]);
}

std::vector<double> TabularAgent::td_errors(const replay::SampledBatch& batch) const {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& t : batch.transitions) {
    const auto s = index_of(t.state, n_states_, "state");
    const auto s2 = index_of(t.next_state, n_states_, "next state");
    out.push_back(t.reward + (t.terminal ? 0.0 : cfg_.gamma * soft_value(s2)) - soft_value(s));
  }
  return out;
}

double TabularAgent::update(const replay::SampledBatch& batch, std::span<const double> weights) {
  if (batch.transitions.empty()) throw InvalidInput("empty batch");
  if (!weights.empty() && weights.size() != batch.size()) throw InvalidInput("weight count differs from batch size");
  std::vector<std::size_t> rows(batch.size());
  std::vector<double> targets(batch.size());
  double mse = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch.transitions[i];
    const auto s = index_of(t.state, n_states_, "state");
    const auto a = index_of(t.action, n_actions_, "action");
    const auto s2 = index_of(t.next_state, n_states_, "next state");
    rows[i] = s * n_actions_ + a;
    targets[i] = t.reward + (t.terminal ? 0.0 : cfg_.gamma * soft_value(s2));
    const double err = targets[i] - q_[rows[i]];
    mse += err * err;
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double step = std::min(cfg_.learning_rate * w, 1.0);
    q_[rows[i]] += step * (targets[i] - q_[rows[i]]);
  }
  return mse / static_cast<double>(batch.size());
}

std::vector<std::uint8_t> TabularAgent::save() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(n_states_));
  w.u32(static_cast<std::uint32_t>(n_actions_));
  w.f64s(q_);
  return wrap_envelope(EnvelopeKind::kTabularAgent, kCheckpointVersion, w.bytes());
}

TabularAgent TabularAgent::load(std::span<const std::uint8_t> bytes, TabularConfig cfg) {
  ByteReader r(open_envelope(bytes, EnvelopeKind::kTabularAgent, kCheckpointVersion));
  const std::size_t ns = r.u32();
  const std::size_t na = r.u32();
  TabularAgent agent(ns, na, cfg);
  r.f64s(agent.q_);
  if (r.remaining() != 0) throw FormatError("trailing bytes in tabular checkpoint");
  return agent;
}

}  // namespace roer::agents
