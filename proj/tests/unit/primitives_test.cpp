#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>
#include <unordered_set>

#include "dili/clock.hpp"
#include "dili/counter.hpp"
#include "dili/node.hpp"
#include "dili/node_ref.hpp"
#include "dili/rdcss.hpp"

namespace dili {
namespace {

TEST(NodeRef, EncodingIsServerSlotMark) {
  EXPECT_EQ(NodeRef::pack(0, 1, false).raw(), 0x0000'0000'0000'0002ull);
  const NodeRef r = NodeRef::pack(3, 42, true);
  EXPECT_EQ(r.raw() >> 48, 3u);
  EXPECT_EQ((r.raw() >> 1) & ((1ull << 47) - 1), 42u);
  EXPECT_EQ(r.raw() & 1u, 1u);
}

TEST(NodeRef, PackUnpackRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100'000; ++i) {
    const auto server = static_cast<ServerId>(rng() % (kMaxServerId + 1));
    const std::uint64_t slot = rng() & NodeRef::kMaxSlot;
    const bool mark = rng() & 1;
    const NodeRef r = NodeRef::pack(server, slot, mark);
    ASSERT_EQ(r.server(), server);
    ASSERT_EQ(r.slot(), slot);
    ASSERT_EQ(r.marked(), mark);
    ASSERT_EQ(NodeRef::from_raw(r.raw()), r);
    ASSERT_EQ(r.with_mark(!mark).with_mark(mark), r);
  }
}

TEST(NodeRef, NullIgnoresMark) {
  EXPECT_TRUE(kNullRef.is_null());
  EXPECT_TRUE(kNullRef.with_mark(true).is_null());
  EXPECT_FALSE(NodeRef::pack(0, 1).is_null());
}

TEST(NodeStore, AllocReadBackAndDistinct) {
  NodeStore store(0, 1024);
  auto a = store.alloc({7, kUnsetKeyMax, 1, 0, kNullRef, nullptr, kNullRef});
  auto b = store.alloc({8, kUnsetKeyMax, 2, 0, kNullRef, nullptr, kNullRef});
  ASSERT_TRUE(a && b);
  EXPECT_EQ(store.get(*a).key.load(), 7);
  EXPECT_NE(a->slot(), b->slot());
}

TEST(NodeStore, RetiredSlotNotReusedWhileGuardHeld) {
  NodeStore store(0, 1024);
  Guard g;
  auto a = store.alloc({7, kUnsetKeyMax, 1, 0, kNullRef, nullptr, kNullRef});
  ASSERT_TRUE(a);
  store.retire(*a);
  store.reclaim();
  for (int i = 0; i < 100; ++i) {
    auto b = store.alloc({9, kUnsetKeyMax, 1, 0, kNullRef, nullptr, kNullRef});
    ASSERT_TRUE(b);
    ASSERT_NE(b->slot(), a->slot());
  }
}

TEST(NodeStore, CapacityExhaustionIsReported) {
  NodeStore store(0, 16);
  int ok = 0;
  while (store.alloc({1, kUnsetKeyMax, 1, 0, kNullRef, nullptr, kNullRef})) ++ok;
  EXPECT_EQ(ok, 16);
}

TEST(Clock, StartsAtOneAndIncreases) {
  Clock c;
  const Timestamp t1 = c.next();
  const Timestamp t2 = c.next();
  EXPECT_EQ(t1, 1u);
  EXPECT_GT(t2, t1);
  c.observe(100);
  EXPECT_GT(c.next(), 100u);
}

TEST(Clock, ConcurrentValuesAreDistinct) {
  Clock c;
  constexpr int kThreads = 64;
  constexpr int kCalls = 10'000;
  std::vector<std::vector<Timestamp>> seen(kThreads);
  std::vector<std::thread> pool;
  for (int t = 0; t < kThreads; ++t)
    pool.emplace_back([&, t] {
      seen[t].reserve(kCalls);
      for (int i = 0; i < kCalls; ++i) seen[t].push_back(c.next());
    });
  for (auto& th : pool) th.join();
  std::unordered_set<Timestamp> all;
  for (auto& v : seen) all.insert(v.begin(), v.end());
  EXPECT_EQ(all.size(), static_cast<std::size_t>(kThreads * kCalls));
}

TEST(CounterCell, IncrementAndFreeze) {
  CounterCell c;
  EXPECT_EQ(c.increment(), 1);
  CounterCell f(kFrozenBase);
  EXPECT_EQ(f.increment(), kFrozenBase + 1);
  EXPECT_TRUE(f.frozen());

  CounterCell five(5);
  EXPECT_TRUE(five.freeze(5));
  EXPECT_EQ(five.load(), kFrozenBase);
  CounterCell other(5);
  EXPECT_FALSE(other.freeze(4));
  EXPECT_EQ(other.load(), 5);
}

TEST(CounterCell, ConcurrentIncrementsAreAtomic) {
  CounterCell c;
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&] {
      for (int i = 0; i < 10'000; ++i) c.increment();
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(c.load(), 80'000);
}

// Exactly one of: the freeze won (and the increment landed on the frozen
// value), or the increment came first and the freeze failed.
TEST(CounterCell, IncrementRacingFreeze) {
  for (int round = 0; round < 2000; ++round) {
    CounterCell c(3);
    bool frozen = false;
    std::thread inc([&] { c.increment(); });
    std::thread frz([&] { frozen = c.freeze(3); });
    inc.join();
    frz.join();
    if (frozen)
      ASSERT_EQ(c.load(), kFrozenBase + 1);
    else
      ASSERT_EQ(c.load(), 4);
  }
}

TEST(Link, MarkingIsOneShot) {
  Link l;
  const NodeRef a = NodeRef::pack(0, 5);
  l.store(a);
  NodeRef expected = a;
  EXPECT_TRUE(l.cas(expected, a.with_mark(true)));
  NodeRef again = a;
  EXPECT_FALSE(l.cas(again, a.with_mark(true)));
  EXPECT_TRUE(again.marked());
}

TEST(Link, RacingInsertsOneWins) {
  for (int round = 0; round < 500; ++round) {
    Link l;
    const NodeRef a = NodeRef::pack(0, 5);
    l.store(a);
    std::atomic<int> wins{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < 2; ++t)
      pool.emplace_back([&, t] {
        NodeRef e = a;
        if (l.cas(e, NodeRef::pack(0, 10 + static_cast<std::uint64_t>(t)))) wins.fetch_add(1);
      });
    for (auto& th : pool) th.join();
    ASSERT_EQ(wins.load(), 1);
  }
}

TEST(Rdcss, SwingsOnlyWhenBothMatch) {
  std::atomic<std::uint64_t> data{NodeRef::pack(0, 1).raw()};
  std::atomic<std::uint64_t> control{NodeRef::pack(0, 2).raw()};
  EXPECT_TRUE(rdcss(data, NodeRef::pack(0, 1), control, NodeRef::pack(0, 2), NodeRef::pack(0, 3)));
  EXPECT_EQ(data.load(), NodeRef::pack(0, 3).raw());

  // Control word changed underneath: data is restored.
  control.store(NodeRef::pack(0, 9).raw());
  EXPECT_FALSE(rdcss(data, NodeRef::pack(0, 3), control, NodeRef::pack(0, 2), NodeRef::pack(0, 4)));
  EXPECT_EQ(data.load(), NodeRef::pack(0, 3).raw());
}

TEST(Rdcss, ConcurrentWithLinkCasOnControl) {
  for (int round = 0; round < 1000; ++round) {
    Link data;
    Link control;
    data.store(NodeRef::pack(0, 1));
    control.store(NodeRef::pack(0, 2));
    bool swung = false;
    bool marked = false;
    std::thread a([&] {
      swung = rdcss(data.word(), NodeRef::pack(0, 1), control.word(), NodeRef::pack(0, 2),
                    NodeRef::pack(0, 3));
    });
    std::thread b([&] {
      NodeRef e = NodeRef::pack(0, 2);
      marked = control.cas(e, e.with_mark(true));
    });
    a.join();
    b.join();
    ASSERT_TRUE(marked);
    ASSERT_EQ(data.load(), swung ? NodeRef::pack(0, 3) : NodeRef::pack(0, 1));
  }
}

}  // namespace
}  // namespace dili
