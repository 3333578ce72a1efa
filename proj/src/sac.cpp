#include "roer/sac.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "roer/binary_io.hpp"
#include "roer/errors.hpp"
#include "roer/losses.hpp"

namespace roer::agents {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Keeps actions strictly inside (-1, 1) where tanh rounds to +-1.
constexpr double kActionLimit = 1.0 - 1e-12;

double squash(double u) { return std::clamp(std::tanh(u), -kActionLimit, kActionLimit); }

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

nn::NetworkSpec make_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  nn::NetworkSpec s;
  s.input_dim = in;
  s.hidden_dims = hidden;
  s.output_dim = out;
  s.validate();
  return s;
}

std::vector<double> row_to_vector(const nn::Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) out[static_cast<std::size_t>(i)] = m(0, i);
  return out;
}

nn::Matrix stack_columns(std::span<const std::vector<double>> rows, std::size_t dim, const char* what) {
  nn::Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw InvalidInput(std::string(what) + " has the wrong dimension");
    for (std::size_t j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];
  }
  return m;
}

void write_adam(ByteWriter& w, const nn::Adam& opt) {
  nn::write_parameters(w, opt.first_moment());
  nn::write_parameters(w, opt.second_moment());
  w.u64(opt.steps());
  w.u64(opt.skipped());
}

void read_adam(ByteReader& r, nn::Adam& opt) {
  auto m = nn::read_parameters(r);
  auto v = nn::read_parameters(r);
  const auto steps = r.u64();
  const auto skipped = r.u64();
  opt.restore(std::move(m), std::move(v), steps, skipped);
}

}  // namespace

void SacConfig::validate() const {
  if (hidden.empty()) throw ConfigError("agent.hidden must list at least one layer");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("agent.gamma must lie in (0, 1)");
  if (!(polyak_tau > 0.0 && polyak_tau <= 1.0)) throw ConfigError("agent.polyak_tau must lie in (0, 1]");
  for (const auto* o : {&actor_opt, &critic_opt, &value_opt, &temperature_opt}) {
    if (!(o->learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  }
  if (!(init_temperature > 0.0)) throw ConfigError("agent.init_temperature must be positive");
  if (!(huber_k > 0.0)) throw ConfigError("agent.huber_k must be positive");
  if (!(penalty_coef >= 0.0)) throw ConfigError("agent.penalty_coef must be non-negative");
  if (!(value_beta > 0.0)) throw ConfigError("agent.value_beta must be positive");
  if (!(value_grad_clip > 0.0)) throw ConfigError("agent.value_grad_clip must be positive");
  if (!(value_noise >= 0.0)) throw ConfigError("agent.value_noise must be non-negative");
  if (!(log_std_min < log_std_max)) throw ConfigError("agent.log_std_min must be below log_std_max");
}

BatchMatrices to_matrices(const replay::SampledBatch& batch) {
  if (batch.transitions.empty()) throw InvalidInput("empty batch");
  const auto n = static_cast<Eigen::Index>(batch.transitions.size());
  const auto sd = static_cast<Eigen::Index>(batch.transitions[0].state.size());
  const auto ad = static_cast<Eigen::Index>(batch.transitions[0].action.size());
  BatchMatrices m;
  m.obs.resize(sd, n);
  m.next_obs.resize(sd, n);
  m.actions.resize(ad, n);
  m.rewards.resize(n);
  m.not_done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = batch.transitions[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(t.state.size()) != sd || static_cast<Eigen::Index>(t.next_state.size()) != sd ||
        static_cast<Eigen::Index>(t.action.size()) != ad) {
      throw InvalidInput("batch transitions have inconsistent dimensions");
    }
    for (Eigen::Index j = 0; j < sd; ++j) {
      m.obs(j, i) = t.state[static_cast<std::size_t>(j)];
      m.next_obs(j, i) = t.next_state[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index j = 0; j < ad; ++j) m.actions(j, i) = t.action[static_cast<std::size_t>(j)];
    m.rewards(i) = t.reward;
    m.not_done(i) = t.terminal ? 0.0 : 1.0;
  }
  return m;
}

SacAgent::SacAgent(std::size_t obs_dim, std::size_t act_dim, SacConfig cfg, std::uint64_t seed)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      cfg_(std::move(cfg)),
      target_entropy_(std::isnan(cfg_.target_entropy) ? -static_cast<double>(act_dim) : cfg_.target_entropy),
      actor_(nn::init(make_spec(obs_dim, cfg_.hidden, 2 * act_dim), splitmix64(seed + 1))),
      q1_(nn::init(make_spec(obs_dim + act_dim, cfg_.hidden, 1), splitmix64(seed + 2))),
      q2_(nn::init(make_spec(obs_dim + act_dim, cfg_.hidden, 1), splitmix64(seed + 3))),
      t1_(q1_),
      t2_(q2_),
      value_(nn::init(make_spec(obs_dim, cfg_.hidden, 1), splitmix64(seed + 4))),
      log_alpha_(std::log(cfg_.init_temperature)),
      actor_opt_(actor_, cfg_.actor_opt),
      q1_opt_(q1_, cfg_.critic_opt),
      q2_opt_(q2_, cfg_.critic_opt),
      value_opt_(value_, cfg_.value_opt),
      alpha_opt_(cfg_.temperature_opt),
      noise_rng_(splitmix64(seed + 5)) {
  if (obs_dim == 0 || act_dim == 0) throw ConfigError("observation and action dimensions must be positive");
  cfg_.validate();
}

double SacAgent::temperature() const { return std::exp(log_alpha_); }

nn::Matrix SacAgent::critic_input(const nn::Matrix& obs, const nn::Matrix& actions) const {
  nn::Matrix x(obs.rows() + actions.rows(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

SacAgent::PolicySample SacAgent::sample_policy(const nn::Matrix& obs, Rng& rng) const {
  PolicySample s;
  const auto out = nn::forward(actor_, obs, s.cache);
  const auto a = static_cast<Eigen::Index>(act_dim_);
  const auto n = obs.cols();
  s.mean = out.topRows(a);
  s.log_std.resize(a, n);
  s.clamp_mask.resize(a, n);
  s.noise.resize(a, n);
  s.actions.resize(a, n);
  s.log_prob = nn::Vector::Zero(n);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < a; ++j) {
      const double raw = out(a + j, i);
      const double ls = std::clamp(raw, cfg_.log_std_min, cfg_.log_std_max);
      s.log_std(j, i) = ls;
      s.clamp_mask(j, i) = (raw >= cfg_.log_std_min && raw <= cfg_.log_std_max) ? 1.0 : 0.0;
      const double eps = standard_normal(rng);
      s.noise(j, i) = eps;
      const double u = s.mean(j, i) + std::exp(ls) * eps;
      s.actions(j, i) = squash(u);
      s.log_prob(i) += -0.5 * eps * eps - ls - half_log_2pi - log_one_minus_tanh_sq(u);
    }
  }
  return s;
}

std::vector<double> SacAgent::act(const std::vector<double>& observation, bool deterministic, Rng& rng) const {
  const auto obs = stack_columns({&observation, 1}, obs_dim_, "observation");
  if (deterministic) {
    const auto out = nn::forward(actor_, obs);
    std::vector<double> a(act_dim_);
    for (std::size_t j = 0; j < act_dim_; ++j) a[j] = squash(out(static_cast<Eigen::Index>(j), 0));
    return a;
  }
  const auto s = sample_policy(obs, rng);
  std::vector<double> a(act_dim_);
  for (std::size_t j = 0; j < act_dim_; ++j) a[j] = s.actions(static_cast<Eigen::Index>(j), 0);
  return a;
}

std::vector<std::vector<double>> SacAgent::act_batch(std::span<const std::vector<double>> observations,
                                                    bool deterministic, Rng& rng) const {
  if (observations.empty()) return {};
  const auto obs = stack_columns(observations, obs_dim_, "observation");
  nn::Matrix actions;
  if (deterministic) {
    actions = nn::forward(actor_, obs).topRows(static_cast<Eigen::Index>(act_dim_)).unaryExpr(&squash);
  } else {
    actions = sample_policy(obs, rng).actions;
  }
  std::vector<std::vector<double>> out(observations.size(), std::vector<double>(act_dim_));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < act_dim_; ++j) {
      out[i][j] = actions(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

nn::Vector SacAgent::bootstrap_targets(const nn::Vector& rewards, const nn::Matrix& next_obs, const nn::Vector& not_done,
                                       Rng& rng) const {
  const auto next = sample_policy(next_obs, rng);
  const auto x = critic_input(next_obs, next.actions);
  const nn::Matrix v1 = nn::forward(t1_, x);
  const nn::Matrix v2 = nn::forward(t2_, x);
  const double alpha = temperature();
  nn::Vector y(next_obs.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double soft = std::min(v1(0, i), v2(0, i)) - alpha * next.log_prob(i);
    y(i) = rewards(i) + cfg_.gamma * not_done(i) * soft;
  }
  return y;
}

std::vector<double> SacAgent::value_td_errors(const replay::SampledBatch& batch) const {
  if (cfg_.value_loss == ValueLoss::None) throw UnsupportedMode("agent has no value network");
  const auto m = to_matrices(batch);
  const nn::Matrix v = nn::forward(value_, m.obs);
  const nn::Matrix vn = nn::forward(value_, m.next_obs);
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out[i] = losses::td_error(m.rewards(k), cfg_.gamma, vn(0, k), v(0, k), m.not_done(k) == 0.0);
  }
  return out;
}

std::vector<double> SacAgent::critic_td_errors(const replay::SampledBatch& batch, Rng& rng) const {
  const auto m = to_matrices(batch);
  const auto y = bootstrap_targets(m.rewards, m.next_obs, m.not_done, rng);
  const auto x = critic_input(m.obs, m.actions);
  const nn::Matrix q1 = nn::forward(q1_, x);
  const nn::Matrix q2 = nn::forward(q2_, x);
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double d1 = y(k) - q1(0, k);
    const double d2 = y(k) - q2(0, k);
    out[i] = std::abs(d1) >= std::abs(d2) ? d1 : d2;
  }
  return out;
}

std::vector<double> SacAgent::q_estimates(std::span<const std::vector<double>> observations,
                                          std::span<const std::vector<double>> actions) const {
  if (observations.size() != actions.size()) throw InvalidInput("observation and action counts differ");
  if (observations.empty()) return {};
  const auto x = critic_input(stack_columns(observations, obs_dim_, "observation"),
                              stack_columns(actions, act_dim_, "action"));
  const nn::Matrix q = nn::forward(q1_, x).cwiseMin(nn::forward(q2_, x));
  return row_to_vector(q);
}

std::vector<double> SacAgent::values(std::span<const std::vector<double>> observations) const {
  if (observations.empty()) return {};
  return row_to_vector(nn::forward(value_, stack_columns(observations, obs_dim_, "observation")));
}

nn::ParameterSet SacAgent::critic_gradient(int which, const replay::SampledBatch& batch,
                                           std::span<const double> targets, std::span<const double> weights) const {
  const auto& critic = which == 0 ? q1_ : q2_;
  const auto m = to_matrices(batch);
  if (targets.size() != batch.size()) throw InvalidInput("target count differs from batch size");
  std::vector<double> unit;
  if (weights.empty()) {
    unit.assign(batch.size(), 1.0);
    weights = unit;
  }
  nn::ForwardCache cache;
  const auto q = row_to_vector(nn::forward(critic, critic_input(m.obs, m.actions), cache));
  const auto loss = losses::weighted_huber_critic_loss(q, targets, weights, cfg_.huber_k);
  const nn::Matrix dq = Eigen::Map<const nn::Matrix>(loss.gradient.data(), 1, static_cast<Eigen::Index>(q.size()));
  auto grads = nn::backward(critic, cache, dq).params;
  if (cfg_.penalty_coef > 0.0) {
    const auto pen = losses::gradient_penalty(critic, cache, weights);
    grads.axpy(cfg_.penalty_coef, pen.param_gradient);
  }
  return grads;
}

StepMetrics SacAgent::update(const replay::SampledBatch& batch, std::span<const double> weights, Rng& rng) {
  const auto m = to_matrices(batch);
  const auto n = static_cast<std::size_t>(m.obs.cols());
  if (m.obs.rows() != static_cast<Eigen::Index>(obs_dim_) || m.actions.rows() != static_cast<Eigen::Index>(act_dim_)) {
    throw InvalidInput("batch dimensions do not match the agent");
  }
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(n, 1.0);
  if (w.size() != n) throw InvalidInput("weight count differs from batch size");

  StepMetrics metrics;
  if (cfg_.value_loss != ValueLoss::None) metrics.td_errors = value_td_errors(batch);

  // Snapshot for rollback on a non-finite step.
  const auto saved_actor = actor_;
  const auto saved_q1 = q1_, saved_q2 = q2_, saved_t1 = t1_, saved_t2 = t2_, saved_value = value_;
  const auto saved_alpha = log_alpha_;
  const auto saved_actor_opt = actor_opt_, saved_q1_opt = q1_opt_, saved_q2_opt = q2_opt_,
             saved_value_opt = value_opt_;
  const auto saved_alpha_opt = alpha_opt_;
  const auto saved_noise_rng = noise_rng_;
  auto rollback = [&] {
    actor_ = saved_actor;
    q1_ = saved_q1;
    q2_ = saved_q2;
    t1_ = saved_t1;
    t2_ = saved_t2;
    value_ = saved_value;
    log_alpha_ = saved_alpha;
    actor_opt_ = saved_actor_opt;
    q1_opt_ = saved_q1_opt;
    q2_opt_ = saved_q2_opt;
    value_opt_ = saved_value_opt;
    alpha_opt_ = saved_alpha_opt;
    noise_rng_ = saved_noise_rng;
    ++aborted_;
    metrics.aborted = true;
    return metrics;
  };

  // Critics.
  const auto y = bootstrap_targets(m.rewards, m.next_obs, m.not_done, rng);
  const std::vector<double> targets(y.data(), y.data() + y.size());
  const auto x = critic_input(m.obs, m.actions);
  double q_sum = 0.0;
  for (int which = 0; which < 2; ++which) {
    auto& critic = which == 0 ? q1_ : q2_;
    auto& opt = which == 0 ? q1_opt_ : q2_opt_;
    nn::ForwardCache cache;
    const auto q = row_to_vector(nn::forward(critic, x, cache));
    const auto loss = losses::weighted_huber_critic_loss(q, targets, w, cfg_.huber_k);
    const nn::Matrix dq = Eigen::Map<const nn::Matrix>(loss.gradient.data(), 1, static_cast<Eigen::Index>(n));
    auto grads = nn::backward(critic, cache, dq).params;
    double pen_value = 0.0;
    if (cfg_.penalty_coef > 0.0) {
      const auto pen = losses::gradient_penalty(critic, cache, w);
      grads.axpy(cfg_.penalty_coef, pen.param_gradient);
      pen_value = pen.value;
    }
    metrics.critic_loss += 0.5 * loss.value;
    metrics.penalty += 0.5 * pen_value;
    for (double v : q) q_sum += v;
    if (!std::isfinite(loss.value) || !std::isfinite(pen_value) || !grads.all_finite()) return rollback();
    opt.step(critic, grads);
  }
  metrics.mean_q = q_sum / (2.0 * static_cast<double>(n));

  // Value network, regressed towards the target critics at the batch actions.
  if (cfg_.value_loss != ValueLoss::None) {
    nn::Matrix xv = x;
    if (cfg_.value_noise > 0.0) {
      for (Eigen::Index i = 0; i < xv.cols(); ++i) {
        for (Eigen::Index j = static_cast<Eigen::Index>(obs_dim_); j < xv.rows(); ++j) {
          xv(j, i) = std::clamp(xv(j, i) + cfg_.value_noise * standard_normal(noise_rng_), -1.0, 1.0);
        }
      }
    }
    const nn::Matrix qt = nn::forward(t1_, xv).cwiseMin(nn::forward(t2_, xv));
    nn::ForwardCache cache;
    const nn::Matrix v = nn::forward(value_, m.obs, cache);
    std::vector<double> lin(n), ex(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      lin[i] = qt(0, k) - v(0, k);
      ex[i] = cfg_.literal_value_target ? y(k) - v(0, k) : lin[i];
    }
    const auto loss = cfg_.value_loss == ValueLoss::Gumbel
                          ? losses::extreme_v_loss_split(ex, lin, cfg_.value_beta, cfg_.value_grad_clip)
                          : losses::chi2_v_loss(lin, cfg_.value_beta);
    metrics.value_loss = loss.value;
    metrics.value_clip_hits = loss.clipped;
    const nn::Matrix dv = Eigen::Map<const nn::Matrix>(loss.gradient.data(), 1, static_cast<Eigen::Index>(n));
    const auto grads = nn::backward(value_, cache, dv).params;
    if (!std::isfinite(loss.value) || !grads.all_finite()) return rollback();
    value_opt_.step(value_, grads);
  }

  // Actor.
  const double alpha = temperature();
  const auto pi = sample_policy(m.obs, rng);
  const auto xa = critic_input(m.obs, pi.actions);
  nn::ForwardCache c1, c2;
  const nn::Matrix qa1 = nn::forward(q1_, xa, c1);
  const nn::Matrix qa2 = nn::forward(q2_, xa, c2);
  const nn::Matrix g1 = nn::input_gradients(q1_, c1);
  const nn::Matrix g2 = nn::input_gradients(q2_, c2);
  const auto a = static_cast<Eigen::Index>(act_dim_);
  const auto od = static_cast<Eigen::Index>(obs_dim_);
  nn::Matrix dout(2 * a, static_cast<Eigen::Index>(n));
  double actor_loss = 0.0, log_prob_sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const bool first = qa1(0, i) <= qa2(0, i);
    const double qmin = first ? qa1(0, i) : qa2(0, i);
    actor_loss += alpha * pi.log_prob(i) - qmin;
    log_prob_sum += pi.log_prob(i);
    for (Eigen::Index j = 0; j < a; ++j) {
      const double act = pi.actions(j, i);
      const double dq_da = first ? g1(od + j, i) : g2(od + j, i);
      const double sech2 = 1.0 - act * act;
      const double sigma_eps = std::exp(pi.log_std(j, i)) * pi.noise(j, i);
      dout(j, i) = inv_n * (alpha * 2.0 * act - dq_da * sech2);
      dout(a + j, i) = inv_n * pi.clamp_mask(j, i) * (alpha * (-1.0 + 2.0 * act * sigma_eps) - dq_da * sech2 * sigma_eps);
    }
  }
  metrics.actor_loss = actor_loss * inv_n;
  const auto actor_grads = nn::backward(actor_, pi.cache, dout).params;
  if (!std::isfinite(metrics.actor_loss) || !actor_grads.all_finite()) return rollback();
  actor_opt_.step(actor_, actor_grads);

  // Temperature: loss = alpha * (entropy - target), differentiated in log alpha.
  metrics.entropy = -log_prob_sum * inv_n;
  metrics.temperature_loss = alpha * (metrics.entropy - target_entropy_);
  if (!std::isfinite(metrics.temperature_loss)) return rollback();
  alpha_opt_.step(log_alpha_, alpha * (metrics.entropy - target_entropy_));
  metrics.temperature = temperature();

  nn::polyak(t1_, q1_, cfg_.polyak_tau);
  nn::polyak(t2_, q2_, cfg_.polyak_tau);
  return metrics;
}

std::vector<std::uint8_t> SacAgent::save() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(obs_dim_));
  w.u32(static_cast<std::uint32_t>(act_dim_));
  w.u8(cfg_.value_loss == ValueLoss::None ? 0 : 1);
  for (const auto* p : {&actor_, &q1_, &q2_, &t1_, &t2_, &value_}) nn::write_parameters(w, *p);
  w.f64(log_alpha_);
  for (const auto* o : {&actor_opt_, &q1_opt_, &q2_opt_, &value_opt_}) write_adam(w, *o);
  w.f64(alpha_opt_.m);
  w.f64(alpha_opt_.v);
  w.u64(alpha_opt_.t);
  w.u64(aborted_);
  std::ostringstream rng_state;
  rng_state << noise_rng_;
  const auto text = rng_state.str();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  return wrap_envelope(EnvelopeKind::kSacAgent, kCheckpointVersion, w.bytes());
}

SacAgent SacAgent::load(std::span<const std::uint8_t> bytes, SacConfig cfg) {
  ByteReader r(open_envelope(bytes, EnvelopeKind::kSacAgent, kCheckpointVersion));
  const std::size_t obs_dim = r.u32();
  const std::size_t act_dim = r.u32();
  const bool has_value = r.u8() != 0;
  if (has_value != (cfg.value_loss != ValueLoss::None)) {
    throw FormatError("checkpoint value-network flag does not match the configuration");
  }
  SacAgent agent(obs_dim, act_dim, std::move(cfg), 0);
  for (auto* p : {&agent.actor_, &agent.q1_, &agent.q2_, &agent.t1_, &agent.t2_, &agent.value_}) {
    auto loaded = nn::read_parameters(r);
    if (!(loaded.spec == p->spec)) throw FormatError("checkpoint network shape does not match the configuration");
    *p = std::move(loaded);
  }
  agent.log_alpha_ = r.f64();
  for (auto* o : {&agent.actor_opt_, &agent.q1_opt_, &agent.q2_opt_, &agent.value_opt_}) read_adam(r, *o);
  agent.alpha_opt_.m = r.f64();
  agent.alpha_opt_.v = r.f64();
  agent.alpha_opt_.t = r.u64();
  agent.aborted_ = r.u64();
  const auto len = r.u32();
  const auto raw = r.raw(len);
  std::istringstream rng_state(std::string(raw.begin(), raw.end()));
  rng_state >> agent.noise_rng_;
  if (!rng_state) throw FormatError("corrupt generator state in agent checkpoint");
  if (r.remaining() != 0) throw FormatError("trailing bytes in agent checkpoint");
  return agent;
}

}  // namespace roer::agents
