#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "roer/rng.hpp"
#include "roer/sum_tree.hpp"

namespace roer::replay {

// One environment step. In tabular mode state, action and next_state each
// hold a single element: the discrete index.
struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
  std::uint64_t insert_step = 0;
};

struct TabularShape {
  std::size_t n_states;
  std::size_t n_actions;
};

struct SampledBatch {
  std::vector<std::size_t> indices;
  std::vector<Transition> transitions;
  std::vector<double> priorities;
  std::vector<double> sampling_weights;
  // Write serial of each slot at sampling time; detects overwrites before
  // the matching priority update.
  std::vector<std::uint64_t> serials;

  std::size_t size() const { return indices.size(); }
};

struct UpdateReport {
  std::size_t applied = 0;
  std::size_t stale_skipped = 0;
};

// Maps a transition to a bucket key for implied_distribution.
using Bucketing = std::function<std::size_t(const Transition&)>;

// Fixed-capacity ring of transitions with a sum-tree over their priorities.
// New entries enter with priority 1 and the oldest entry is evicted when full.
//
// Writes (push, update_priorities, load) need exclusive access; the const
// members may run concurrently with each other.
class PriorityBuffer {
 public:
  PriorityBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim,
                 std::optional<TabularShape> tabular = std::nullopt);

  static PriorityBuffer tabular(std::size_t capacity, TabularShape shape) { return {capacity, 1, 1, shape}; }

  std::size_t push(Transition t);

  // Independent draws with P(slot i) = priority(i) / total_priority().
  // sampling_weights are all 1.
  SampledBatch sample_proportional(std::size_t n, Rng& rng) const;
  // Independent uniform draws over live slots; sampling_weights are all 1 and
  // the caller decides whether to use `priorities` as loss weights.
  SampledBatch sample_uniform(std::size_t n, Rng& rng) const;

  // Replaces leaf values. When `serials` is non-empty, entries whose slot has
  // been overwritten since sampling are skipped and counted.
  UpdateReport update_priorities(std::span<const std::size_t> indices, std::span<const double> priorities,
                                 std::span<const std::uint64_t> serials = {});

  // Recomputes every live priority from (transition, old priority).
  void refresh_all(const std::function<double(const Transition&, double)>& fn);

  // Tabular mode: probability table indexed by s * n_actions + a.
  std::vector<double> implied_distribution() const;
  std::map<std::size_t, double> implied_distribution(const Bucketing& key) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t cursor() const { return cursor_; }
  const std::optional<TabularShape>& tabular_shape() const { return tabular_; }
  std::uint64_t stale_skips() const { return stale_skips_; }

  const Transition& at(std::size_t slot) const { return entries_.at(slot); }
  double priority(std::size_t slot) const { return tree_.leaf(slot); }
  std::uint64_t serial(std::size_t slot) const { return serials_.at(slot); }
  double total_priority() const { return tree_.total(); }
  // Sequential sum of live leaves, independent of the tree's internal nodes.
  double leaf_sum() const;
  void reaggregate() { tree_.rebuild(); }

  std::vector<std::uint8_t> snapshot() const;
  static PriorityBuffer load(std::span<const std::uint8_t> bytes);

 private:
  void validate(const Transition& t) const;
  SampledBatch gather(std::vector<std::size_t> slots) const;

  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::optional<TabularShape> tabular_;
  std::vector<Transition> entries_;
  std::vector<std::uint64_t> serials_;
  SumTree tree_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::uint64_t next_serial_ = 0;
  std::uint64_t stale_skips_ = 0;
};

}  // namespace roer::replay
