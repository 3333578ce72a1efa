#include "roer/sum_tree.hpp"

#include "roer/errors.hpp"

namespace roer::replay {

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), base_(1) {
  if (capacity == 0) throw InvalidInput("sum tree capacity must be positive");
  while (base_ < capacity) base_ <<= 1;
  nodes_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t i, double value) {
  std::size_t node = base_ + i;
  nodes_[node] = value;
  for (node >>= 1; node >= 1; node >>= 1) {
    nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }
}

std::size_t SumTree::find_prefix(double mass) const {
  std::size_t node = 1;
  while (node < base_) {
    const double left = nodes_[2 * node];
    const double right = nodes_[2 * node + 1];
    if (mass < left || right <= 0.0) {
      node = 2 * node;
    } else {
      mass -= left;
      node = 2 * node + 1;
    }
  }
  // Rounding can walk past the last nonzero leaf; step back to it.
  std::size_t leaf = node - base_;
  while (leaf > 0 && nodes_[base_ + leaf] <= 0.0) --leaf;
  return leaf;
}

void SumTree::rebuild() {
  for (std::size_t node = base_ - 1; node >= 1; --node) {
    nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }
}

}  // namespace roer::replay
