#include "icr/cycles.hpp"

#include <algorithm>
#include <numeric>

namespace icr {

namespace {

EdgeCheck check_edge_blocks(const ConditionalBlock& from, const ConditionalBlock& to) {
  EdgeCheck e;
  e.from_block = from.id;
  e.to_block = to.id;
  e.rule_a = to.predictors.subset_of(from.coverage());
  e.rule_b = !from.target.set_intersect(to.predictors).empty();
  e.permissible = e.rule_a && e.rule_b;
  return e;
}

constexpr std::size_t kMaxBlocksForEnumeration = 8;

}  // namespace

EdgeCheck check_edge(const CsmModel& m, const std::string& from, const std::string& to) {
  return check_edge_blocks(m.block(from), m.block(to));
}

std::vector<std::string> canonical_rotation(const std::vector<std::string>& order) {
  if (order.empty()) return order;
  const std::size_t pivot = static_cast<std::size_t>(
      std::min_element(order.begin(), order.end()) - order.begin());
  std::vector<std::string> out;
  out.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    out.push_back(order[(pivot + i) % order.size()]);
  return out;
}

UpdateCycle make_cycle(const CsmModel& m, const std::vector<std::string>& order) {
  if (order.size() != m.block_count())
    throw NoCycleError("cycle must list every block exactly once (" +
                       std::to_string(order.size()) + " of " +
                       std::to_string(m.block_count()) + " given)");
  std::vector<std::string> seen = order;
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw NoCycleError("cycle repeats a block id");

  UpdateCycle c;
  c.order = order;
  for (std::size_t i = 0; i < order.size(); ++i) {
    EdgeCheck e = check_edge(m, order[i], order[(i + 1) % order.size()]);
    if (!e.permissible)
      throw NoCycleError("edge " + e.from_block + " -> " + e.to_block +
                         " violates rule " + (e.rule_a ? "B" : "A"));
    c.edges.push_back(std::move(e));
  }
  c.delta = m.delta();
  return c;
}

std::vector<UpdateCycle> enumerate_cycles(const CsmModel& m, std::size_t limit) {
  const std::size_t n = m.block_count();
  if (n > kMaxBlocksForEnumeration)
    throw InstanceTooLargeError("cycle enumeration is exhaustive and limited to 8 blocks; got " +
                                std::to_string(n));
  // Precompute the edge table once.
  std::vector<std::vector<EdgeCheck>> edge(n, std::vector<EdgeCheck>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      edge[i][j] = check_edge_blocks(m.blocks()[i], m.blocks()[j]);

  // Canonical rotation: fix the lexicographically smallest id in front and
  // permute the rest, so each cycle appears exactly once.
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (m.blocks()[i].id < m.blocks()[first].id) first = i;

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i)
    if (i != first) rest.push_back(i);
  std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
    return m.blocks()[a].id < m.blocks()[b].id;
  });

  std::vector<UpdateCycle> out;
  const Scope delta = m.delta();
  do {
    if (out.size() >= limit) break;
    bool ok = edge[rest.empty() ? first : rest.back()][first].permissible;
    std::size_t prev = first;
    for (std::size_t k = 0; ok && k < rest.size(); ++k) {
      ok = edge[prev][rest[k]].permissible;
      prev = rest[k];
    }
    if (n == 1) ok = edge[first][first].permissible;
    if (!ok) continue;

    UpdateCycle c;
    c.order.push_back(m.blocks()[first].id);
    for (std::size_t k : rest) c.order.push_back(m.blocks()[k].id);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = i == 0 ? first : rest[i - 1];
      const std::size_t b = i == n - 1 ? first : rest[i];
      c.edges.push_back(edge[a][b]);
    }
    c.delta = delta;
    out.push_back(std::move(c));
  } while (std::next_permutation(rest.begin(), rest.end(),
                                 [&](std::size_t a, std::size_t b) {
                                   return m.blocks()[a].id < m.blocks()[b].id;
                                 }));
  return out;
}

bool has_cycle_through_all(const CsmModel& m) { return !enumerate_cycles(m, 1).empty(); }

}  // namespace icr
