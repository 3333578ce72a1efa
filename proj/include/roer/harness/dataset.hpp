#pragma once

#include <string>
#include <vector>

#include "roer/replay.hpp"

namespace roer::harness {

// Offline transitions as CSV with a header row:
//   state_0..state_{S-1}, action_0..action_{A-1}, reward,
//   next_state_0..next_state_{S-1}, terminal
// `terminal` is 0 or 1. Column order in the file is free; names are fixed.
std::vector<replay::Transition> load_offline_dataset(const std::string& path, std::size_t state_dim,
                                                     std::size_t action_dim);
void write_offline_dataset(const std::string& path, const std::vector<replay::Transition>& data);

}  // namespace roer::harness
