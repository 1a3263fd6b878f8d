#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dili/cluster.hpp"

namespace dili::verify {

struct WalkedNode {
  NodeRef ref;
  Key key;
  Key key_max;
  ItemId id;
  bool marked;
  bool frozen;
};

// Readers below dereference other servers' stores directly, so they need
// an in-process cluster and, unless noted, quiescence.

Node& node_at(Cluster& c, NodeRef r);

// The whole list from the first subhead to the final subtail.
struct GlobalWalk {
  std::vector<WalkedNode> nodes;
  bool complete = false;
  std::string error;
};
GlobalWalk walk_list(Cluster& c, std::size_t max_steps = 50'000'000);

// Nodes from `head` up to and including the first subtail.
std::vector<WalkedNode> walk_sublist(Cluster& c, NodeRef head);

std::set<Key> key_set(Cluster& c);

struct StructureReport {
  bool ok = true;
  std::size_t nodes = 0;
  std::size_t keys = 0;
  std::size_t sublists = 0;
  std::string detail;
};
// Sorted unmarked keys, subtail bounds respected, no frozen node reachable,
// every registry tiling (-inf, +inf], every owned entry reachable exactly
// once from the walk.
StructureReport check_structure(Cluster& c);

// Registry-referenced subheads grouped by identity; more than one unfrozen
// copy of one identity is a violation. Safe to call without quiescence:
// references are gathered before any freeze state is read, so a copy
// frozen in between is never mistaken for a live one.
struct SubheadSample {
  std::size_t identities = 0;
  std::size_t violations = 0;
  std::string detail;
};
SubheadSample sample_active_subheads(Cluster& c);

// Exact unmarked item count of every owned sublist.
std::vector<std::int64_t> sublist_sizes(Cluster& c);

// At quiescence every owned entry's counter difference equals its offset.
struct OffsetReport {
  std::size_t entries = 0;
  std::size_t mismatches = 0;
  std::string detail;
};
OffsetReport check_offsets(Cluster& c);

}  // namespace dili::verify
