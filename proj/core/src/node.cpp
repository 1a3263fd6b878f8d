#include "dili/node.hpp"

namespace dili {

NodeStore::NodeStore(ServerId me, std::uint64_t capacity)
    : me_(me), arena_(capacity) {
  assert(me <= kMaxServerId);
}

NodeStore::~NodeStore() = default;

std::optional<NodeRef> NodeStore::alloc(const NodeInit& init) {
  auto slot = arena_.allocate();
  if (!slot) {
    reclaim();
    slot = arena_.allocate();
    if (!slot) return std::nullopt;
  }
  Node& n = arena_.at(*slot);
  n.key.store(init.key);
  n.key_max.store(init.key_max);
  n.ts.store(init.ts);
  n.sid.store(init.sid);
  n.next.store(init.next);
  n.counters.store(init.counters);
  n.new_loc.store(init.new_loc.raw());
  return NodeRef::pack(me_, *slot);
}

void NodeStore::retire(NodeRef r) {
  assert(is_local(r));
  limbo_.retire(r.slot());
  if (retire_count_.fetch_add(1) % 128 == 127) reclaim();
}

void NodeStore::discard(NodeRef r) {
  assert(is_local(r));
  arena_.release(r.slot());
}

std::size_t NodeStore::reclaim() {
  return limbo_.collect([this](std::uint64_t s) { arena_.release(s); });
}

}  // namespace dili
