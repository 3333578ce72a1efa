#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "roer/rng.hpp"

namespace roer::schemes {

enum class SchemeKind { Uniform, Per, Laber, Roer, RoerChi2 };

std::string_view scheme_name(SchemeKind kind);
SchemeKind parse_scheme(std::string_view name);  // throws ConfigError

// How the exponential weights are mean-normalized.
enum class MeanMode { Batch, Running };

struct RoerConfig {
  double lambda = 0.01;
  double beta = 1.0;  // loss temperature
  double grad_clip = 7.0;
  double max_exp_clip = 100.0;
  // Lower clip on the exponential weight; 0 disables it.
  double min_exp_clip = 1.0;
  double min_priority_clip = 1.0;
  std::uint64_t train_start_step = 0;
  MeanMode mean_mode = MeanMode::Batch;

  void validate() const;  // throws ConfigError
};

struct PerConfig {
  double alpha = 0.4;
  double min_priority = 1.0;

  void validate() const;
};

struct LaberConfig {
  std::size_t large_batch = 1024;

  void validate(std::size_t minibatch) const;
};

struct RoerDiagnostics {
  std::size_t upper_clip_hits = 0;
  std::size_t lower_clip_hits = 0;
  std::size_t floor_hits = 0;
  double mean_weight = 1.0;
};

// Multiplicative priority update d' = [lambda * w + (1 - lambda)] * d with
//   1. w_raw = exp(delta / beta)
//   2. w = clip(w_raw, min_exp_clip, max_exp_clip)
//   3. w <- w / mean(w)   (mean over the batch, or `external_mean` if given)
//   4. d' = (1 + lambda * (w - 1)) * d
//   5. d' <- max(d', min_priority_clip) when min_priority_clip > 0
std::vector<double> roer_update(std::span<const double> td_errors, std::span<const double> current_priorities,
                                const RoerConfig& cfg, RoerDiagnostics* diag = nullptr,
                                double external_mean = std::numeric_limits<double>::quiet_NaN());

// Clipped exponential weights (steps 1-2 above), exposed for running-mean bookkeeping.
std::vector<double> roer_clipped_weights(std::span<const double> td_errors, const RoerConfig& cfg,
                                         RoerDiagnostics* diag = nullptr);

// Keeps a buffer-wide running mean of clipped weights for MeanMode::Running.
class RoerPrioritizer {
 public:
  explicit RoerPrioritizer(RoerConfig cfg);

  std::vector<double> update(std::span<const double> td_errors, std::span<const double> current_priorities,
                             RoerDiagnostics* diag = nullptr);
  const RoerConfig& config() const { return cfg_; }
  double running_mean() const { return count_ ? sum_ / static_cast<double>(count_) : 1.0; }

 private:
  RoerConfig cfg_;
  double sum_ = 0.0;
  std::uint64_t count_ = 0;
};

// Loss-adjusted PER: p = max(|delta|^alpha, min_priority).
std::vector<double> per_priority(std::span<const double> td_errors, const PerConfig& cfg);

struct LaberSelection {
  std::vector<std::size_t> indices;  // positions within the large batch
  std::vector<double> importance_weights;
};

// Draws n positions proportional to the surrogates with weight mean(s) / s_j.
// All-zero surrogates fall back to uniform draws with unit weights.
LaberSelection laber_select(std::span<const double> surrogates, std::size_t n, Rng& rng);

inline constexpr double kChi2Floor = 1e-3;

// Pearson chi^2 priority p = max(delta / beta + 1, floor).
std::vector<double> chi2_priority(std::span<const double> td_errors, double beta, double floor = kChi2Floor);

}  // namespace roer::schemes
