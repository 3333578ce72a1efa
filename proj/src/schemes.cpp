#include "roer/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "roer/errors.hpp"

namespace roer::schemes {

namespace {

void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " contains non-finite values");
  }
}

}  // namespace

std::string_view scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Uniform: return "uniform";
    case SchemeKind::Per: return "per";
    case SchemeKind::Laber: return "laber";
    case SchemeKind::Roer: return "roer";
    case SchemeKind::RoerChi2: return "roer_chi2";
  }
  return "unknown";
}

SchemeKind parse_scheme(std::string_view name) {
  for (auto k : {SchemeKind::Uniform, SchemeKind::Per, SchemeKind::Laber, SchemeKind::Roer, SchemeKind::RoerChi2}) {
    if (scheme_name(k) == name) return k;
  }
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

void RoerConfig::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("roer.lambda must lie in (0, 1]");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("roer.beta must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("roer.grad_clip must be positive");
  if (!(max_exp_clip >= 1.0)) throw ConfigError("roer.max_exp_clip must be >= 1");
  if (!(min_exp_clip >= 0.0) || min_exp_clip > max_exp_clip) throw ConfigError("roer.min_exp_clip must lie in [0, max_exp_clip]");
  if (!(min_priority_clip >= 0.0) || !std::isfinite(min_priority_clip)) {
    throw ConfigError("roer.min_priority_clip must be nonnegative");
  }
}

void PerConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("per.alpha must lie in [0, 1]");
  if (!(min_priority > 0.0)) throw ConfigError("per.min_priority must be positive");
}

void LaberConfig::validate(std::size_t minibatch) const {
  if (large_batch < minibatch) throw ConfigError("laber.large_batch must be >= the minibatch size");
}

std::vector<double> roer_clipped_weights(std::span<const double> td_errors, const RoerConfig& cfg,
                                         RoerDiagnostics* diag) {
  if (!(cfg.beta > 0.0)) throw ConfigError("roer.beta must be positive");
  require_finite(td_errors, "td errors");
  std::vector<double> w(td_errors.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    double v = std::exp(td_errors[i] / cfg.beta);
    if (v > cfg.max_exp_clip) {
      v = cfg.max_exp_clip;
      if (diag) ++diag->upper_clip_hits;
    } else if (v < cfg.min_exp_clip) {
      v = cfg.min_exp_clip;
      if (diag) ++diag->lower_clip_hits;
    }
    w[i] = v;
  }
  return w;
}

std::vector<double> roer_update(std::span<const double> td_errors, std::span<const double> current_priorities,
                                const RoerConfig& cfg, RoerDiagnostics* diag, double external_mean) {
  if (td_errors.empty()) throw InvalidInput("roer_update needs a nonempty batch");
  if (td_errors.size() != current_priorities.size()) throw InvalidInput("td errors and priorities differ in length");
  for (double d : current_priorities) {
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidInput("current priorities must be positive and finite");
  }
  auto w = roer_clipped_weights(td_errors, cfg, diag);

  double mean = external_mean;
  if (std::isnan(mean)) {
    double sum = 0.0;
    for (double v : w) sum += v;
    mean = sum / static_cast<double>(w.size());
  }
  // exp underflow with the lower clip disabled can leave a zero mean.
  if (!(mean > 0.0)) mean = 1.0;
  if (diag) diag->mean_weight = mean;

  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double normalized = w[i] / mean;
    // 1 + lambda (w - 1) equals lambda w + (1 - lambda) and is exactly 1 at w = 1.
    double d = (1.0 + cfg.lambda * (normalized - 1.0)) * current_priorities[i];
    if (cfg.min_priority_clip > 0.0 && d < cfg.min_priority_clip) {
      d = cfg.min_priority_clip;
      if (diag) ++diag->floor_hits;
    }
    if (!(d > 0.0)) d = std::numeric_limits<double>::min();
    out[i] = d;
  }
  return out;
}

RoerPrioritizer::RoerPrioritizer(RoerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<double> RoerPrioritizer::update(std::span<const double> td_errors,
                                            std::span<const double> current_priorities, RoerDiagnostics* diag) {
  if (cfg_.mean_mode == MeanMode::Batch) return roer_update(td_errors, current_priorities, cfg_, diag);
  const auto w = roer_clipped_weights(td_errors, cfg_);
  for (double v : w) sum_ += v;
  count_ += w.size();
  return roer_update(td_errors, current_priorities, cfg_, diag, running_mean());
}

std::vector<double> per_priority(std::span<const double> td_errors, const PerConfig& cfg) {
  require_finite(td_errors, "td errors");
  std::vector<double> out(td_errors.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // pow(0, 0) is 1, so alpha = 0 yields uniform priorities.
    out[i] = std::max(std::pow(std::abs(td_errors[i]), cfg.alpha), cfg.min_priority);
  }
  return out;
}

LaberSelection laber_select(std::span<const double> surrogates, std::size_t n, Rng& rng) {
  if (surrogates.empty()) throw InvalidInput("laber_select needs a nonempty large batch");
  if (n == 0) throw InvalidInput("minibatch size must be positive");
  require_finite(surrogates, "surrogate priorities");
  double total = 0.0;
  for (double s : surrogates) {
    if (s < 0.0) throw InvalidInput("surrogate priorities must be nonnegative");
    total += s;
  }
  LaberSelection sel;
  sel.indices.reserve(n);
  sel.importance_weights.reserve(n);
  if (!(total > 0.0)) {
    for (std::size_t k = 0; k < n; ++k) {
      sel.indices.push_back(static_cast<std::size_t>(uniform_index(rng, surrogates.size())));
      sel.importance_weights.push_back(1.0);
    }
    return sel;
  }
  std::vector<double> cdf(surrogates.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) cdf[i] = (acc += surrogates[i]);
  const double mean = total / static_cast<double>(surrogates.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t j = it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
    while (surrogates[j] <= 0.0 && j > 0) --j;
    sel.indices.push_back(j);
    sel.importance_weights.push_back(mean / surrogates[j]);
  }
  return sel;
}

std::vector<double> chi2_priority(std::span<const double> td_errors, double beta, double floor) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(floor > 0.0)) throw ConfigError("chi2 priority floor must be positive");
  require_finite(td_errors, "td errors");
  std::vector<double> out(td_errors.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(td_errors[i] / beta + 1.0, floor);
  return out;
}

}  // namespace roer::schemes
