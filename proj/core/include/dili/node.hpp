#pragma once

#include <atomic>
#include <cassert>
#include <cstdint>
#include <optional>

#include "dili/arena.hpp"
#include "dili/counter.hpp"
#include "dili/epoch.hpp"
#include "dili/node_ref.hpp"
#include "dili/rdcss.hpp"

namespace dili {

// A next-link word. Loads and CASes help-complete RDCSS descriptors, so
// callers never observe one.
class Link {
 public:
  NodeRef load() const {
    AtomicMem m;
    return NodeRef::from_raw(LinkOps::read(m, word_));
  }

  bool cas(NodeRef& expected, NodeRef desired) {
    assert(!expected.marked() || desired.marked());  // marks are permanent
    AtomicMem m;
    std::uint64_t e = expected.raw();
    bool ok = LinkOps::cas(m, word_, e, desired.raw());
    expected = NodeRef::from_raw(e);
    return ok;
  }

  // Only for unpublished nodes and subtail re-aiming.
  void store(NodeRef v) { word_.store(v.raw()); }

  std::atomic<std::uint64_t>& word() { return word_; }
  const std::atomic<std::uint64_t>& word() const { return word_; }

 private:
  std::atomic<std::uint64_t> word_{0};
};

struct Node {
  std::atomic<Key> key{0};
  std::atomic<Key> key_max{kUnsetKeyMax};
  std::atomic<Timestamp> ts{0};
  std::atomic<ServerId> sid{0};
  Link next;
  std::atomic<Counters*> counters{nullptr};
  std::atomic<std::uint64_t> new_loc{0};

  ItemId id() const { return {sid.load(), ts.load()}; }

  bool frozen() const {
    Counters* c = counters.load();
    return c != nullptr && c->start.load() < 0;
  }

  NodeRef forward() const { return NodeRef::from_raw(new_loc.load()); }

  bool claim_forward(NodeRef expected, NodeRef desired) {
    std::uint64_t e = expected.raw();
    return new_loc.compare_exchange_strong(e, desired.raw());
  }
};

struct NodeInit {
  Key key = 0;
  Key key_max = kUnsetKeyMax;
  Timestamp ts = 0;
  ServerId sid = 0;
  NodeRef next;
  Counters* counters = nullptr;
  NodeRef new_loc;
};

// One server's node arena. Refs handed out carry this server's id.
class NodeStore {
 public:
  NodeStore(ServerId me, std::uint64_t capacity);
  ~NodeStore();

  NodeStore(const NodeStore&) = delete;
  NodeStore& operator=(const NodeStore&) = delete;

  std::optional<NodeRef> alloc(const NodeInit& init);

  Node& get(NodeRef r) const {
    assert(r.server() == me_ && !r.is_null());
    return arena_.at(r.slot());
  }

  bool is_local(NodeRef r) const { return !r.is_null() && r.server() == me_; }

  // Deferred free for a node that has been unlinked.
  void retire(NodeRef r);
  // Immediate free for a node that was never published.
  void discard(NodeRef r);

  std::size_t reclaim();
  std::uint64_t live() const { return arena_.live(); }
  std::size_t pending() const { return limbo_.size(); }
  ServerId id() const { return me_; }

 private:
  const ServerId me_;
  mutable SlabArena<Node> arena_;
  Limbo<std::uint64_t> limbo_;
  std::atomic<std::uint64_t> retire_count_{0};
};

}  // namespace dili
