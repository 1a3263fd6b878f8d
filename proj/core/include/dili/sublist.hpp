#pragma once

#include <atomic>
#include <cstdint>
#include <utility>
#include <variant>

#include "dili/chaos.hpp"
#include "dili/clock.hpp"
#include "dili/node.hpp"
#include "dili/registry.hpp"

namespace dili {

struct Found {
  NodeRef node;
  NodeRef left;
};
struct NotFound {
  NodeRef left;
};
// target is remote, or a live subhead on this server to re-enter at.
struct Forward {
  NodeRef target;
};
using SearchOutcome = std::variant<Found, NotFound, Forward>;

struct Done {
  bool success;
};
// at_node: ref names a node to delete rather than a subhead to search from.
struct Delegate {
  ServerId target_server;
  NodeRef ref;
  bool at_node = false;
};
struct ResourceExhausted {};
using OpResult = std::variant<Done, Delegate, ResourceExhausted>;

// Outgoing replicates for a sublist being moved. `cells` is the pair whose
// end counter the completion callback must increment.
struct InsertReplicate {
  NodeRef start;
  ItemId prev;
  Key key;
  ItemId item;
  NodeRef old_location;
  Counters* cells;
};
struct DeleteReplicate {
  NodeRef start;
  ItemId item;
  NodeRef old_location;
  Counters* cells;
};

class ReplicationSink {
 public:
  virtual ~ReplicationSink() = default;
  virtual void replicate_insert(const InsertReplicate& r) = 0;
  virtual void replicate_delete(const DeleteReplicate& r) = 0;
};

struct SublistStats {
  std::atomic<std::uint64_t> restarts{0};
  std::atomic<std::uint64_t> delinked{0};
  std::atomic<std::uint64_t> replicates{0};
  // Inserts whose CAS landed while their counted cell was frozen.
  std::atomic<std::uint64_t> sign_violations{0};
};

// Increments the node's start cell and confirms the node still uses that
// pair. Returns the pair and the post-increment value.
std::pair<Counters*, std::int64_t> acquire_start(Node& n);

// Client operations on one server's portion of the list.
class Sublist {
 public:
  Sublist(NodeStore& store, Registry& registry, Clock& clock,
          const FaultInjection& faults, ReplicationSink* sink = nullptr)
      : store_(store), registry_(registry), clock_(clock), faults_(faults), sink_(sink) {}

  void set_sink(ReplicationSink* sink) { sink_ = sink; }

  SearchOutcome search(Key key, NodeRef head) { return search(key, head, true); }
  bool delink(NodeRef prev, NodeRef& curr);

  OpResult find(Key key, NodeRef subhead = kNullRef);
  OpResult insert(Key key, NodeRef subhead = kNullRef);
  OpResult remove(Key key, NodeRef subhead = kNullRef);
  OpResult erase(NodeRef node, Key key);

  NodeRef resolve(Key key) const;

  SublistStats& stats() { return stats_; }
  NodeStore& store() { return store_; }

 private:
  SearchOutcome search(Key key, NodeRef head, bool honor_freeze);
  NodeRef pick_head(Key key, NodeRef hint, bool honor_freeze) const;
  NodeRef reroute(Key key) const;
  void cleanup(Key key);

  Node& node(NodeRef r) const { return store_.get(r); }
  bool local(NodeRef r) const { return store_.is_local(r); }

  NodeStore& store_;
  Registry& registry_;
  Clock& clock_;
  const FaultInjection& faults_;
  ReplicationSink* sink_;
  SublistStats stats_;
};

}  // namespace dili
