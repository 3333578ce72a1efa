#pragma once

#include <cstddef>
#include <vector>

namespace roer::replay {

// Complete binary tree of partial sums over a fixed number of leaves.
// Internal nodes are recomputed as left + right along the updated path,
// never by adding deltas, so the tree never drifts from its leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  double total() const { return nodes_[1]; }
  double leaf(std::size_t i) const { return nodes_[base_ + i]; }

  void set(std::size_t i, double value);

  // Leaf index whose prefix interval contains `mass`, for mass in [0, total).
  // Zero-valued leaves are never returned while total() > 0.
  std::size_t find_prefix(double mass) const;

  // Recomputes every internal node from the leaves.
  void rebuild();

 private:
  std::size_t capacity_;
  std::size_t base_;  // index of leaf 0; power of two
  std::vector<double> nodes_;
};

}  // namespace roer::replay
