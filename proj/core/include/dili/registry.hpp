#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "dili/counter.hpp"
#include "dili/epoch.hpp"
#include "dili/node_ref.hpp"

namespace dili {

// Registry record for one sublist, responsible for (key_min, key_max].
// Entries created from peer announcements are routing-only: null subtail
// and null counters.
struct Entry {
  Entry(Key lo, Key hi, NodeRef head, NodeRef tail = kNullRef,
        Counters* cells = nullptr, std::int64_t off = 0)
      : key_min(lo), key_max(hi), subhead(head.raw()), subtail(tail.raw()),
        counters(cells), offset(off) {}

  const Key key_min;
  std::atomic<Key> key_max;
  std::atomic<std::uint64_t> subhead;
  std::atomic<std::uint64_t> subtail;
  std::atomic<Counters*> counters;
  std::atomic<std::int64_t> offset;
  std::atomic<std::int64_t> size_estimate{0};
  // Steady-clock nanoseconds of the last ownership or boundary change; moves
  // wait out a cooldown from here.
  std::atomic<std::int64_t> acquired_at_ns{0};

  NodeRef head() const { return NodeRef::from_raw(subhead.load()); }
  NodeRef tail() const { return NodeRef::from_raw(subtail.load()); }
  bool routing_only() const { return NodeRef::from_raw(subtail.load()).is_null(); }
};

struct RegistrySlot {
  Key key_min;
  Key key_max;
  std::shared_ptr<Entry> entry;
};

// Immutable after publication.
struct RegistrySnapshot {
  std::vector<RegistrySlot> slots;

  // Index of the slot with key_min < key <= key_max, if any.
  std::optional<std::size_t> locate(Key key) const;
  bool tiles() const;
};

enum class RegistryStatus { ok, capacity_exceeded, not_found };

struct EntryUpdate {
  std::optional<Key> key_max;
  std::optional<NodeRef> subhead;
  std::optional<NodeRef> subtail;
  std::optional<std::int64_t> offset;
  std::optional<Counters*> counters;
};

// Copy-on-write sorted array. Lookups are wait-free under an epoch guard;
// mutations are serialized by an internal writer lock and publish a fresh
// snapshot, retiring the old one.
class Registry {
 public:
  static constexpr std::size_t kDefaultMaxSublists = 4096;

  explicit Registry(std::size_t max_sublists = kDefaultMaxSublists);
  ~Registry();

  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  // Caller holds a Guard; the pointer is valid until it is released.
  const RegistrySnapshot& snapshot() const { return *current_.load(); }
  Entry* get_by_key(Key key) const;
  std::shared_ptr<Entry> find_exact(Key key_min, Key key_max) const;

  // Inserts in sorted position. A slot that strictly contains key_min is
  // truncated to it in the same publication. `reserved` consumes a prior
  // reserve().
  RegistryStatus add_entry(std::shared_ptr<Entry> entry, bool reserved = false);
  // With widen_left the left neighbor absorbs the removed range in the
  // same publication.
  RegistryStatus remove_entry(const Entry* entry, bool widen_left = false);
  RegistryStatus update_entry_fields(Entry* entry, const EntryUpdate& update);

  // Reserves capacity ahead of an add_entry that must not fail.
  bool reserve();
  void unreserve();

  std::size_t size() const;
  std::size_t max_sublists() const { return max_; }
  std::uint64_t publications() const { return publications_.load(); }
  std::uint64_t tiling_violations() const { return tiling_violations_.load(); }
  std::uint64_t missing_removals() const { return missing_removals_.load(); }

  std::vector<RegistrySlot> copy_slots() const;

 private:
  void publish(std::vector<RegistrySlot> slots);

  const std::size_t max_;
  std::atomic<const RegistrySnapshot*> current_;
  std::mutex writer_;
  std::size_t reserved_ = 0;
  Limbo<const RegistrySnapshot*> limbo_;
  std::atomic<std::uint64_t> publications_{0};
  std::atomic<std::uint64_t> tiling_violations_{0};
  std::atomic<std::uint64_t> missing_removals_{0};
};

}  // namespace dili
