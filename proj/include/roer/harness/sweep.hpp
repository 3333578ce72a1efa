#pragma once

#include <string>
#include <vector>

#include "roer/harness/config.hpp"
#include "roer/harness/train.hpp"

namespace roer::harness {

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  // Half-width of the 95% Student-t interval; 0 for fewer than two values.
  double ci95 = 0.0;
};

Aggregate aggregate(const std::vector<double>& values);

struct SweepCell {
  Json assignment;  // dotted key -> value
  std::string output_dir;
  bool failed = false;
  std::string failure;
  std::size_t ok_seeds = 0;
  Aggregate final_return;
  Aggregate final_bias;
  Aggregate final_kl;
};

struct SweepResult {
  std::vector<std::string> keys;
  std::vector<SweepCell> cells;
  std::string summary_csv;
};

// Cartesian product of `grid` ({"roer.beta": [0.4, 1, 4], ...}, keys in
// sorted order, last key fastest) applied over `base`. Each cell runs every
// seed of the base config under <output_dir>/cell_<i>; a failing cell is
// recorded and the sweep continues. Writes <output_dir>/sweep_summary.csv.
SweepResult run_sweep(const Json& base, const Json& grid);

// Splits a sweep document into its base config and its "grid" section.
std::pair<Json, Json> split_sweep_document(const Json& doc);

}  // namespace roer::harness
