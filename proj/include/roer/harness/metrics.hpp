#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "roer/harness/config.hpp"

namespace roer::harness {

struct MetricsRecord {
  std::uint64_t step = 0;
  std::optional<double> eval_return;
  double critic_loss = 0.0;
  double penalty = 0.0;
  double value_loss = 0.0;
  double actor_loss = 0.0;
  double temperature = 0.0;
  double entropy = 0.0;
  double mean_q = 0.0;
  std::optional<double> bias;
  // Tabular runs: KL(d* || implied buffer distribution) and sup-norm Q error.
  std::optional<double> kl_to_optimal;
  std::optional<double> q_error;
  double mean_priority = 1.0;
  std::uint64_t value_clip_hits = 0;
  std::uint64_t upper_clip_hits = 0;
  std::uint64_t lower_clip_hits = 0;
  std::uint64_t floor_hits = 0;
  std::uint64_t stale_skips = 0;
  std::uint64_t aborted_updates = 0;

  Json to_json() const;
  static MetricsRecord from_json(const Json& j);
};

// Append-only line-delimited JSON stream. Opening an existing file drops a
// trailing partial line (an interrupted write) and keeps the complete ones;
// append() ignores records at or before the last persisted step, so a
// deterministic rerun catches up without duplicating records.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);

  // Returns false when the record was already persisted.
  bool append(const Json& record);
  std::optional<std::uint64_t> last_step() const { return last_step_; }
  std::size_t dropped_partial_bytes() const { return dropped_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::optional<std::uint64_t> last_step_;
  std::size_t dropped_ = 0;
};

// Complete records of a metrics file (a trailing partial line is ignored).
std::vector<Json> read_jsonl(const std::string& path);

}  // namespace roer::harness
