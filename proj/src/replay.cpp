#include "roer/replay.hpp"

#include <cmath>
#include <string>

#include "roer/binary_io.hpp"
#include "roer/errors.hpp"

namespace roer::replay {

namespace {

constexpr std::uint16_t kSnapshotVersion = 1;

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

PriorityBuffer::PriorityBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim,
                               std::optional<TabularShape> tabular)
    : capacity_(capacity),
      state_dim_(state_dim),
      action_dim_(action_dim),
      tabular_(tabular),
      entries_(capacity),
      serials_(capacity, 0),
      tree_(capacity) {
  if (state_dim == 0 || action_dim == 0) throw InvalidInput("buffer dimensions must be positive");
  if (tabular && (tabular->n_states == 0 || tabular->n_actions == 0)) {
    throw InvalidInput("tabular shape must be nonempty");
  }
  if (tabular && (state_dim != 1 || action_dim != 1)) {
    throw InvalidInput("tabular buffers store one index per state and action");
  }
}

void PriorityBuffer::validate(const Transition& t) const {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_) {
    throw InvalidInput("transition state dimension " + std::to_string(t.state.size()) + " != buffer dimension " +
                       std::to_string(state_dim_));
  }
  if (t.action.size() != action_dim_) throw InvalidInput("transition action dimension mismatch");
  if (!std::isfinite(t.reward) || !all_finite(t.state) || !all_finite(t.next_state) || !all_finite(t.action)) {
    throw InvalidInput("transition contains non-finite values");
  }
  if (tabular_) {
    auto is_index = [](double v, std::size_t n) { return v >= 0.0 && v < static_cast<double>(n) && v == std::floor(v); };
    if (!is_index(t.state[0], tabular_->n_states) || !is_index(t.next_state[0], tabular_->n_states) ||
        !is_index(t.action[0], tabular_->n_actions)) {
      throw InvalidInput("tabular transition index out of range");
    }
  }
}

std::size_t PriorityBuffer::push(Transition t) {
  validate(t);
  const std::size_t slot = cursor_;
  entries_[slot] = std::move(t);
  serials_[slot] = ++next_serial_;
  tree_.set(slot, 1.0);
  cursor_ = (cursor_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
  return slot;
}

SampledBatch PriorityBuffer::gather(std::vector<std::size_t> slots) const {
  SampledBatch batch;
  batch.transitions.reserve(slots.size());
  batch.priorities.reserve(slots.size());
  batch.serials.reserve(slots.size());
  for (std::size_t s : slots) {
    batch.transitions.push_back(entries_[s]);
    batch.priorities.push_back(tree_.leaf(s));
    batch.serials.push_back(serials_[s]);
  }
  batch.sampling_weights.assign(slots.size(), 1.0);
  batch.indices = std::move(slots);
  return batch;
}

SampledBatch PriorityBuffer::sample_proportional(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw EmptyBufferError();
  if (n == 0) throw InvalidInput("batch size must be positive");
  std::vector<std::size_t> slots(n);
  const double total = tree_.total();
  for (auto& s : slots) s = tree_.find_prefix(uniform01(rng) * total);
  return gather(std::move(slots));
}

SampledBatch PriorityBuffer::sample_uniform(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw EmptyBufferError();
  if (n == 0) throw InvalidInput("batch size must be positive");
  std::vector<std::size_t> slots(n);
  for (auto& s : slots) s = static_cast<std::size_t>(uniform_index(rng, size_));
  return gather(std::move(slots));
}

UpdateReport PriorityBuffer::update_priorities(std::span<const std::size_t> indices, std::span<const double> priorities,
                                               std::span<const std::uint64_t> serials) {
  if (indices.size() != priorities.size()) throw InvalidInput("indices and priorities differ in length");
  if (!serials.empty() && serials.size() != indices.size()) throw InvalidInput("serials differ in length");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size_) throw InvalidInput("slot " + std::to_string(indices[i]) + " is not live");
    if (!(priorities[i] > 0.0) || !std::isfinite(priorities[i])) {
      throw InvalidInput("priority must be positive and finite, got " + std::to_string(priorities[i]));
    }
  }
  UpdateReport report;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (!serials.empty() && serials_[indices[i]] != serials[i]) {
      ++report.stale_skipped;
      continue;
    }
    if (tree_.leaf(indices[i]) != priorities[i]) tree_.set(indices[i], priorities[i]);
    ++report.applied;
  }
  stale_skips_ += report.stale_skipped;
  return report;
}

void PriorityBuffer::refresh_all(const std::function<double(const Transition&, double)>& fn) {
  for (std::size_t s = 0; s < size_; ++s) {
    const double p = fn(entries_[s], tree_.leaf(s));
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidInput("refreshed priority must be positive and finite");
    tree_.set(s, p);
  }
}

double PriorityBuffer::leaf_sum() const {
  double sum = 0.0;
  for (std::size_t s = 0; s < size_; ++s) sum += tree_.leaf(s);
  return sum;
}

std::vector<double> PriorityBuffer::implied_distribution() const {
  if (!tabular_) throw UnsupportedMode("implied_distribution needs tabular mode or a bucketing function");
  std::vector<double> table(tabular_->n_states * tabular_->n_actions, 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < size_; ++s) {
    const auto& t = entries_[s];
    const auto key = static_cast<std::size_t>(t.state[0]) * tabular_->n_actions + static_cast<std::size_t>(t.action[0]);
    table[key] += tree_.leaf(s);
    total += tree_.leaf(s);
  }
  if (total > 0.0) {
    for (double& p : table) p /= total;
  }
  return table;
}

std::map<std::size_t, double> PriorityBuffer::implied_distribution(const Bucketing& key) const {
  if (!key) throw UnsupportedMode("empty bucketing function");
  std::map<std::size_t, double> table;
  double total = 0.0;
  for (std::size_t s = 0; s < size_; ++s) {
    table[key(entries_[s])] += tree_.leaf(s);
    total += tree_.leaf(s);
  }
  if (total > 0.0) {
    for (auto& [k, p] : table) p /= total;
  }
  return table;
}

// Payload layout (little-endian), wrapped in the kReplayBuffer envelope:
//   u64 capacity, u32 state_dim, u32 action_dim,
//   u8 tabular flag, u64 n_states, u64 n_actions,
//   u64 size, u64 cursor, u64 next_serial, u64 stale_skips,
//   then `size` records in slot order:
//     f64[state_dim] state, f64[action_dim] action, f64 reward,
//     f64[state_dim] next_state, u8 terminal, u64 insert_step,
//     u64 serial, f64 priority
std::vector<std::uint8_t> PriorityBuffer::snapshot() const {
  ByteWriter w;
  w.u64(capacity_);
  w.u32(static_cast<std::uint32_t>(state_dim_));
  w.u32(static_cast<std::uint32_t>(action_dim_));
  w.u8(tabular_ ? 1 : 0);
  w.u64(tabular_ ? tabular_->n_states : 0);
  w.u64(tabular_ ? tabular_->n_actions : 0);
  w.u64(size_);
  w.u64(cursor_);
  w.u64(next_serial_);
  w.u64(stale_skips_);
  for (std::size_t s = 0; s < size_; ++s) {
    const auto& t = entries_[s];
    w.f64s(t.state);
    w.f64s(t.action);
    w.f64(t.reward);
    w.f64s(t.next_state);
    w.u8(t.terminal ? 1 : 0);
    w.u64(t.insert_step);
    w.u64(serials_[s]);
    w.f64(tree_.leaf(s));
  }
  return wrap_envelope(EnvelopeKind::kReplayBuffer, kSnapshotVersion, w.bytes());
}

PriorityBuffer PriorityBuffer::load(std::span<const std::uint8_t> bytes) {
  ByteReader r(open_envelope(bytes, EnvelopeKind::kReplayBuffer, kSnapshotVersion));
  const auto capacity = r.u64();
  const auto state_dim = r.u32();
  const auto action_dim = r.u32();
  const bool is_tabular = r.u8() != 0;
  const auto n_states = r.u64();
  const auto n_actions = r.u64();
  std::optional<TabularShape> shape;
  if (is_tabular) shape = TabularShape{n_states, n_actions};
  const auto size = r.u64();
  const auto cursor = r.u64();
  if (capacity == 0 || size > capacity || cursor >= capacity) throw FormatError("inconsistent buffer header");
  // Each record needs at least this many bytes; rejects absurd sizes before allocating.
  const std::size_t record_bytes = 8 * (2 * state_dim + action_dim + 1) + 1 + 8 + 8 + 8;
  PriorityBuffer buf(capacity, state_dim, action_dim, shape);
  buf.next_serial_ = r.u64();
  buf.stale_skips_ = r.u64();
  if (r.remaining() != size * record_bytes) throw FormatError("truncated stream: record section size mismatch");
  for (std::size_t s = 0; s < size; ++s) {
    Transition t;
    t.state.resize(state_dim);
    t.action.resize(action_dim);
    t.next_state.resize(state_dim);
    r.f64s(t.state);
    r.f64s(t.action);
    t.reward = r.f64();
    r.f64s(t.next_state);
    t.terminal = r.u8() != 0;
    t.insert_step = r.u64();
    const auto serial = r.u64();
    const double priority = r.f64();
    if (!(priority > 0.0) || !std::isfinite(priority)) throw FormatError("stored priority is not positive");
    buf.validate(t);
    buf.entries_[s] = std::move(t);
    buf.serials_[s] = serial;
    buf.tree_.set(s, priority);
  }
  buf.size_ = size;
  buf.cursor_ = cursor;
  return buf;
}

}  // namespace roer::replay
