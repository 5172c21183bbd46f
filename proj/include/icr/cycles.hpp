#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "icr/model.hpp"

namespace icr {

/// Result of testing whether replacement may step from one block's space to
/// another's: rule_a is b_to ⊆ a_from ∪ b_from, rule_b is a_from ∩ b_to ≠ ∅.
struct EdgeCheck {
  std::string from_block;
  std::string to_block;
  bool rule_a = false;
  bool rule_b = false;
  bool permissible = false;  // rule_a && rule_b
};

/// A cyclic update order over all blocks of a model, with per-edge rule
/// diagnostics (edges[i] steps order[i] -> order[i+1], wrapping).
struct UpdateCycle {
  std::vector<std::string> order;
  std::vector<EdgeCheck> edges;
  Scope delta;
};

EdgeCheck check_edge(const CsmModel& m, const std::string& from, const std::string& to);

/// Validate a caller-supplied order; throws NoCycle when any edge fails.
UpdateCycle make_cycle(const CsmModel& m, const std::vector<std::string>& order);

/// All permissible cycles through every block, reported up to rotation
/// (canonical rotation starts at the lexicographically smallest id), at most
/// `limit`. Exhaustive; refuses models with more than 8 blocks.
std::vector<UpdateCycle> enumerate_cycles(const CsmModel& m, std::size_t limit = SIZE_MAX);

bool has_cycle_through_all(const CsmModel& m);

/// Rotate so the lexicographically smallest id comes first.
std::vector<std::string> canonical_rotation(const std::vector<std::string>& order);

}  // namespace icr
