#include "dili/registry.hpp"

#include <algorithm>

namespace dili {

std::optional<std::size_t> RegistrySnapshot::locate(Key key) const {
  // First slot whose key_max >= key.
  auto it = std::partition_point(slots.begin(), slots.end(),
                                 [key](const RegistrySlot& s) { return s.key_max < key; });
  if (it == slots.end() || !(it->key_min < key)) return std::nullopt;
  return static_cast<std::size_t>(it - slots.begin());
}

bool RegistrySnapshot::tiles() const {
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!(slots[i].key_min < slots[i].key_max)) return false;
    if (i + 1 < slots.size() && slots[i].key_max != slots[i + 1].key_min) return false;
  }
  return true;
}

Registry::Registry(std::size_t max_sublists)
    : max_(max_sublists), current_(new RegistrySnapshot) {}

Registry::~Registry() {
  delete current_.load();
  limbo_.drain([](const RegistrySnapshot* s) { delete s; });
}

Entry* Registry::get_by_key(Key key) const {
  const RegistrySnapshot& snap = snapshot();
  auto idx = snap.locate(key);
  return idx ? snap.slots[*idx].entry.get() : nullptr;
}

std::shared_ptr<Entry> Registry::find_exact(Key key_min, Key key_max) const {
  Guard g;
  for (const auto& s : snapshot().slots)
    if (s.key_min == key_min && s.key_max == key_max) return s.entry;
  return nullptr;
}

std::size_t Registry::size() const {
  Guard g;
  return snapshot().slots.size();
}

std::vector<RegistrySlot> Registry::copy_slots() const {
  Guard g;
  return snapshot().slots;
}

void Registry::publish(std::vector<RegistrySlot> slots) {
  auto* next = new RegistrySnapshot{std::move(slots)};
  if (!next->tiles()) tiling_violations_.fetch_add(1);
  const RegistrySnapshot* old = current_.exchange(next);
  publications_.fetch_add(1);
  limbo_.retire(old);
  limbo_.collect([](const RegistrySnapshot* s) { delete s; });
}

bool Registry::reserve() {
  std::lock_guard lock(writer_);
  if (current_.load()->slots.size() + reserved_ >= max_) return false;
  ++reserved_;
  return true;
}

void Registry::unreserve() {
  std::lock_guard lock(writer_);
  if (reserved_ > 0) --reserved_;
}

RegistryStatus Registry::add_entry(std::shared_ptr<Entry> entry, bool reserved) {
  std::lock_guard lock(writer_);
  const RegistrySnapshot* cur = current_.load();
  if (reserved && reserved_ > 0) --reserved_;
  if (cur->slots.size() + reserved_ >= max_) return RegistryStatus::capacity_exceeded;

  std::vector<RegistrySlot> slots = cur->slots;
  const Key lo = entry->key_min;
  for (auto& s : slots) {
    if (s.key_min < lo && lo < s.key_max) {
      s.key_max = lo;
      s.entry->key_max.store(lo);
    }
  }
  RegistrySlot slot{lo, entry->key_max.load(), std::move(entry)};
  auto pos = std::lower_bound(slots.begin(), slots.end(), lo,
                              [](const RegistrySlot& s, Key k) { return s.key_min < k; });
  slots.insert(pos, std::move(slot));
  publish(std::move(slots));
  return RegistryStatus::ok;
}

RegistryStatus Registry::remove_entry(const Entry* entry, bool widen_left) {
  std::lock_guard lock(writer_);
  std::vector<RegistrySlot> slots = current_.load()->slots;
  auto it = std::find_if(slots.begin(), slots.end(),
                         [entry](const RegistrySlot& s) { return s.entry.get() == entry; });
  if (it == slots.end()) {
    missing_removals_.fetch_add(1);
    return RegistryStatus::not_found;
  }
  if (widen_left && it != slots.begin()) {
    auto left = std::prev(it);
    if (left->key_max == it->key_min) {
      left->key_max = it->key_max;
      left->entry->key_max.store(it->key_max);
    }
  }
  slots.erase(it);
  publish(std::move(slots));
  return RegistryStatus::ok;
}

RegistryStatus Registry::update_entry_fields(Entry* entry, const EntryUpdate& u) {
  std::lock_guard lock(writer_);
  if (u.subhead) entry->subhead.store(u.subhead->raw());
  if (u.subtail) entry->subtail.store(u.subtail->raw());
  if (u.counters) entry->counters.store(*u.counters);
  if (u.offset) entry->offset.store(*u.offset);
  if (u.key_max) {
    std::vector<RegistrySlot> slots = current_.load()->slots;
    auto it = std::find_if(slots.begin(), slots.end(),
                           [entry](const RegistrySlot& s) { return s.entry.get() == entry; });
    if (it == slots.end()) return RegistryStatus::not_found;
    it->key_max = *u.key_max;
    entry->key_max.store(*u.key_max);
    publish(std::move(slots));
  }
  return RegistryStatus::ok;
}

}  // namespace dili
