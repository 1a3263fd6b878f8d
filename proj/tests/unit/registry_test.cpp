#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "dili/epoch.hpp"
#include "dili/registry.hpp"

namespace dili {
namespace {

std::shared_ptr<Entry> entry(Key lo, Key hi, std::uint64_t slot = 1) {
  return std::make_shared<Entry>(lo, hi, NodeRef::pack(0, slot));
}

std::vector<std::pair<Key, Key>> ranges(const Registry& r) {
  std::vector<std::pair<Key, Key>> out;
  for (const auto& s : r.copy_slots()) out.emplace_back(s.key_min, s.key_max);
  return out;
}

TEST(Registry, BoundaryIsInclusiveOnKeyMax) {
  Registry r;
  auto a = entry(kSubheadKey, 50, 1);
  auto b = entry(50, kSubtailKey, 3);
  ASSERT_EQ(r.add_entry(a), RegistryStatus::ok);
  ASSERT_EQ(r.add_entry(b), RegistryStatus::ok);
  Guard g;
  EXPECT_EQ(r.get_by_key(50), a.get());
  EXPECT_EQ(r.get_by_key(51), b.get());
  EXPECT_EQ(r.get_by_key(kSubheadKey + 1), a.get());
  EXPECT_EQ(r.get_by_key(kSubtailKey - 1), b.get());
}

TEST(Registry, AddIntoEmptyAndSortedInsert) {
  Registry r;
  ASSERT_EQ(r.add_entry(entry(kSubheadKey, 100)), RegistryStatus::ok);
  EXPECT_EQ(r.size(), 1u);
  ASSERT_EQ(r.add_entry(entry(100, kSubtailKey)), RegistryStatus::ok);
  // The containing slot is truncated in the same publication.
  ASSERT_EQ(r.add_entry(entry(50, 100)), RegistryStatus::ok);
  const std::vector<std::pair<Key, Key>> want = {
      {kSubheadKey, 50}, {50, 100}, {100, kSubtailKey}};
  EXPECT_EQ(ranges(r), want);
  Guard g;
  EXPECT_TRUE(r.snapshot().tiles());
}

TEST(Registry, CapacityIsEnforced) {
  Registry r(2);
  ASSERT_EQ(r.add_entry(entry(kSubheadKey, 0)), RegistryStatus::ok);
  ASSERT_EQ(r.add_entry(entry(0, kSubtailKey)), RegistryStatus::ok);
  EXPECT_EQ(r.add_entry(entry(10, kSubtailKey)), RegistryStatus::capacity_exceeded);
  EXPECT_EQ(r.size(), 2u);
}

TEST(Registry, RemoveMiddleAndOnly) {
  Registry r;
  auto a = entry(kSubheadKey, 10);
  auto b = entry(10, 20);
  auto c = entry(20, kSubtailKey);
  for (auto& e : {a, b, c}) ASSERT_EQ(r.add_entry(e), RegistryStatus::ok);
  ASSERT_EQ(r.remove_entry(b.get()), RegistryStatus::ok);
  const std::vector<std::pair<Key, Key>> want = {{kSubheadKey, 10}, {20, kSubtailKey}};
  EXPECT_EQ(ranges(r), want);
  EXPECT_EQ(r.remove_entry(b.get()), RegistryStatus::not_found);

  Registry one;
  auto only = entry(kSubheadKey, kSubtailKey);
  ASSERT_EQ(one.add_entry(only), RegistryStatus::ok);
  ASSERT_EQ(one.remove_entry(only.get()), RegistryStatus::ok);
  EXPECT_EQ(one.size(), 0u);
}

TEST(Registry, RemoveWithWidenAbsorbsRange) {
  Registry r;
  auto a = entry(kSubheadKey, 10);
  auto b = entry(10, kSubtailKey);
  ASSERT_EQ(r.add_entry(a), RegistryStatus::ok);
  ASSERT_EQ(r.add_entry(b), RegistryStatus::ok);
  ASSERT_EQ(r.remove_entry(b.get(), true), RegistryStatus::ok);
  Guard g;
  EXPECT_EQ(r.get_by_key(1000), a.get());
  EXPECT_EQ(a->key_max.load(), kSubtailKey);
}

TEST(Registry, UpdateFields) {
  Registry r;
  auto a = entry(kSubheadKey, 100, 1);
  auto b = entry(100, kSubtailKey, 3);
  ASSERT_EQ(r.add_entry(a), RegistryStatus::ok);
  ASSERT_EQ(r.add_entry(b), RegistryStatus::ok);
  ASSERT_EQ(r.add_entry(entry(50, 100, 5)), RegistryStatus::ok);
  {
    Guard g;
    EXPECT_NE(r.get_by_key(75), a.get());
  }
  EntryUpdate u;
  u.subhead = NodeRef::pack(2, 77);
  ASSERT_EQ(r.update_entry_fields(b.get(), u), RegistryStatus::ok);
  EXPECT_EQ(b->head(), NodeRef::pack(2, 77));
}

// Random tilings checked against a linear scan over the same boundaries.
TEST(Registry, MatchesLinearScanOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    std::set<Key> cuts;
    while (cuts.size() < n - 1) cuts.insert(static_cast<Key>(rng() % 20'000) - 10'000);
    std::vector<Key> bounds(cuts.begin(), cuts.end());
    bounds.push_back(kSubtailKey);

    Registry r;
    std::vector<std::shared_ptr<Entry>> entries;
    Key lo = kSubheadKey;
    for (Key hi : bounds) {
      entries.push_back(entry(lo, hi, entries.size() * 2 + 1));
      lo = hi;
    }
    // Insertion order must not matter for a tiling.
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) ASSERT_EQ(r.add_entry(entries[i]), RegistryStatus::ok);

    Guard g;
    for (int q = 0; q < 200; ++q) {
      const Key k = static_cast<Key>(rng() % 24'000) - 12'000;
      std::size_t want = 0;
      while (bounds[want] < k) ++want;
      ASSERT_EQ(r.get_by_key(k), entries[want].get()) << "key " << k;
    }
  }
}

// Readers only ever see the pre- or post-state of each publication.
TEST(Registry, LookupsDuringAddsSeeConsistentSnapshots) {
  Registry r;
  ASSERT_EQ(r.add_entry(entry(kSubheadKey, kSubtailKey)), RegistryStatus::ok);
  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> bad{0};
  std::thread reader([&] {
    std::mt19937_64 rng(3);
    while (!done.load()) {
      Guard g;
      const auto& snap = r.snapshot();
      if (!snap.tiles()) bad.fetch_add(1);
      const Key k = static_cast<Key>(rng() % 2000);
      const auto i = snap.locate(k);
      if (!i || !(snap.slots[*i].key_min < k && k <= snap.slots[*i].key_max)) bad.fetch_add(1);
      if (r.get_by_key(k) == nullptr) bad.fetch_add(1);
    }
  });
  // Each add splits (-inf, bound] at k, as a split would.
  for (Key k = 1999, bound = kSubtailKey; k >= 1000; bound = k--)
    EXPECT_EQ(r.add_entry(entry(k, bound)), RegistryStatus::ok);
  done.store(true);
  reader.join();
  EXPECT_EQ(bad.load(), 0u);
  EXPECT_EQ(r.size(), 1001u);
}

TEST(Registry, SubheadUpdatesAreNeverTorn) {
  Registry r;
  auto a = entry(kSubheadKey, kSubtailKey);
  ASSERT_EQ(r.add_entry(a), RegistryStatus::ok);
  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> bad{0};
  std::thread reader([&] {
    while (!done.load()) {
      const NodeRef h = a->head();
      if (h.server() != 0 || h.slot() % 2 != 1) bad.fetch_add(1);
    }
  });
  for (std::uint64_t i = 0; i < 10'000; ++i) {
    EntryUpdate u;
    u.subhead = NodeRef::pack(0, 2 * i + 1);
    EXPECT_EQ(r.update_entry_fields(a.get(), u), RegistryStatus::ok);
  }
  done.store(true);
  reader.join();
  EXPECT_EQ(bad.load(), 0u);
}

}  // namespace
}  // namespace dili
