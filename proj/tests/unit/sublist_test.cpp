#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "dili/chaos.hpp"
#include "dili/clock.hpp"
#include "dili/counter.hpp"
#include "dili/node.hpp"
#include "dili/registry.hpp"
#include "dili/sublist.hpp"

namespace dili {
namespace {

// Server 0's storage with the given local ranges, chained subtail to
// subhead the way bootstrap lays them out.
class SublistFixture : public ::testing::Test {
 protected:
  void build(const std::vector<Key>& bounds) {
    std::vector<std::pair<NodeRef, NodeRef>> pairs;
    for (Key hi : bounds) {
      Counters* cells = pool.make();
      NodeRef sh = *store.alloc({kSubheadKey, kUnsetKeyMax, clock.next(), 0, kNullRef, cells, kNullRef});
      NodeRef st = *store.alloc({kSubtailKey, hi, clock.next(), 0, kNullRef, cells, kNullRef});
      store.get(sh).next.store(st);
      pairs.emplace_back(sh, st);
      cells_.push_back(cells);
    }
    Key lo = kSubheadKey;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      if (i + 1 < pairs.size()) store.get(pairs[i].second).next.store(pairs[i + 1].first);
      entries.push_back(std::make_shared<Entry>(lo, bounds[i], pairs[i].first, pairs[i].second, cells_[i]));
      ASSERT_EQ(registry.add_entry(entries.back()), RegistryStatus::ok);
      lo = bounds[i];
    }
  }

  NodeRef head(std::size_t i = 0) const { return entries.at(i)->head(); }

  // Client keys reachable from the first subhead, unmarked only.
  std::vector<Key> keys() {
    std::vector<Key> out;
    for (NodeRef r = store.get(head()).next.load(); r;) {
      Node& n = store.get(r.unmarked());
      const NodeRef nx = n.next.load();
      if (is_client_key(n.key.load()) && !nx.marked()) out.push_back(n.key.load());
      r = nx.unmarked();
    }
    return out;
  }

  // Links a hand-built chain of client nodes after the first subhead.
  std::vector<NodeRef> chain(const std::vector<Key>& ks) {
    std::vector<NodeRef> refs;
    Counters* cells = cells_.at(0);
    for (Key k : ks) refs.push_back(*store.alloc({k, kUnsetKeyMax, clock.next(), 0, kNullRef, cells, kNullRef}));
    NodeRef tail = store.get(head()).next.load();
    for (std::size_t i = refs.size(); i-- > 0;) {
      store.get(refs[i]).next.store(tail);
      tail = refs[i];
    }
    store.get(head()).next.store(tail);
    return refs;
  }

  static bool done(const OpResult& r, bool v) {
    const auto* d = std::get_if<Done>(&r);
    return d != nullptr && d->success == v;
  }

  FaultInjection faults;
  NodeStore store{0, 1 << 16};
  Registry registry;
  Clock clock;
  CounterPool pool;
  Sublist sub{store, registry, clock, faults};
  std::vector<std::shared_ptr<Entry>> entries;
  std::vector<Counters*> cells_;
};

TEST_F(SublistFixture, SearchFindsPresentKey) {
  build({kSubtailKey});
  auto refs = chain({5, 9});
  auto out = sub.search(9, head());
  ASSERT_TRUE(std::holds_alternative<Found>(out));
  EXPECT_EQ(std::get<Found>(out).node, refs[1]);
  EXPECT_EQ(std::get<Found>(out).left, refs[0]);
  auto miss = sub.search(7, head());
  ASSERT_TRUE(std::holds_alternative<NotFound>(miss));
  EXPECT_EQ(std::get<NotFound>(miss).left, refs[0]);
}

TEST_F(SublistFixture, SearchCrossesLocalSubtail) {
  build({7, kSubtailKey});
  ASSERT_TRUE(done(sub.insert(5), true));
  ASSERT_TRUE(done(sub.insert(9), true));
  auto out = sub.search(9, head(0));
  ASSERT_TRUE(std::holds_alternative<Found>(out));
  EXPECT_EQ(store.get(std::get<Found>(out).node).key.load(), 9);
}

TEST_F(SublistFixture, FrozenSublistForwardsToNewLocation) {
  build({kSubtailKey});
  const NodeRef remote = NodeRef::pack(1, 1);
  store.get(head()).new_loc.store(remote.raw());
  ASSERT_TRUE(cells_[0]->start.freeze(0));
  auto out = sub.search(3, head());
  ASSERT_TRUE(std::holds_alternative<Forward>(out));
  EXPECT_EQ(std::get<Forward>(out).target, remote);
}

TEST_F(SublistFixture, DelinkRemovesMarkedRun) {
  build({kSubtailKey});
  auto refs = chain({1, 2, 3});
  NodeRef e = refs[1];
  ASSERT_TRUE(store.get(refs[0]).next.cas(e, refs[1].with_mark(true)));
  e = refs[2];
  ASSERT_TRUE(store.get(refs[1]).next.cas(e, refs[2].with_mark(true)));
  NodeRef curr = refs[0];
  ASSERT_TRUE(sub.delink(head(), curr));
  EXPECT_EQ(curr, refs[2]);
  EXPECT_EQ(store.get(head()).next.load(), refs[2]);
}

TEST_F(SublistFixture, DelinkFailsWhenPredecessorChanged) {
  build({kSubtailKey});
  auto refs = chain({1, 3});
  NodeRef e = store.get(refs[1]).next.load();
  ASSERT_TRUE(store.get(refs[1]).next.cas(e, e.with_mark(true)));
  // An insert of 2 lands between 1 and the marked 3 before the delink CAS.
  NodeRef two = *store.alloc({2, kUnsetKeyMax, clock.next(), 0, refs[1], cells_[0], kNullRef});
  e = refs[1];
  ASSERT_TRUE(store.get(refs[0]).next.cas(e, two));
  NodeRef curr = refs[1];
  EXPECT_FALSE(sub.delink(refs[0], curr));
}

TEST_F(SublistFixture, InsertOrdersKeysAndRejectsDuplicates) {
  build({kSubtailKey});
  ASSERT_TRUE(done(sub.insert(5), true));
  ASSERT_TRUE(done(sub.insert(9), true));
  EXPECT_TRUE(done(sub.insert(7), true));
  EXPECT_EQ(keys(), (std::vector<Key>{5, 7, 9}));
  EXPECT_TRUE(done(sub.insert(7), false));
}

TEST_F(SublistFixture, InsertPastSplitBoundaryLandsInRightSublist) {
  build({7, kSubtailKey});
  ASSERT_TRUE(done(sub.insert(5), true));
  ASSERT_TRUE(done(sub.insert(8, head(0)), true));
  EXPECT_EQ(keys(), (std::vector<Key>{5, 8}));
  auto out = sub.search(8, head(1));
  EXPECT_TRUE(std::holds_alternative<Found>(out));
}

TEST_F(SublistFixture, RemoveMarksAndReportsAbsence) {
  build({kSubtailKey});
  auto refs = chain({4});
  EXPECT_TRUE(done(sub.remove(4), true));
  EXPECT_TRUE(keys().empty());
  EXPECT_TRUE(done(sub.remove(4), false));
  EXPECT_TRUE(done(sub.remove(100), false));
}

TEST_F(SublistFixture, EraseOfMarkedNodeFails) {
  build({kSubtailKey});
  auto refs = chain({4});
  NodeRef e = store.get(refs[0]).next.load();
  ASSERT_TRUE(store.get(refs[0]).next.cas(e, e.with_mark(true)));
  EXPECT_TRUE(done(sub.erase(refs[0], 4), false));
}

TEST_F(SublistFixture, RemoteRangeDelegates) {
  build({100});
  auto remote = std::make_shared<Entry>(100, kSubtailKey, NodeRef::pack(2, 1));
  ASSERT_EQ(registry.add_entry(remote), RegistryStatus::ok);
  const OpResult r = sub.find(150);
  ASSERT_TRUE(std::holds_alternative<Delegate>(r));
  EXPECT_EQ(std::get<Delegate>(r).target_server, 2);
  EXPECT_EQ(std::get<Delegate>(r).ref, NodeRef::pack(2, 1));
  EXPECT_TRUE(done(sub.find(50), false));
}

TEST_F(SublistFixture, SequentialOpsMatchSetOracle) {
  build({-500, 0, 500, kSubtailKey});
  std::set<Key> oracle;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20'000; ++i) {
    const Key k = static_cast<Key>(rng() % 2000) - 1000;
    switch (rng() % 3) {
      case 0:
        ASSERT_TRUE(done(sub.find(k), oracle.count(k) == 1)) << "find " << k;
        break;
      case 1:
        ASSERT_TRUE(done(sub.insert(k), oracle.insert(k).second)) << "insert " << k;
        break;
      default:
        ASSERT_TRUE(done(sub.remove(k), oracle.erase(k) == 1)) << "remove " << k;
    }
  }
  EXPECT_EQ(keys(), std::vector<Key>(oracle.begin(), oracle.end()));
}

TEST_F(SublistFixture, CountersBalanceAtQuiescence) {
  build({kSubtailKey});
  for (Key k = 0; k < 200; ++k) ASSERT_TRUE(done(sub.insert(k), true));
  for (Key k = 0; k < 200; ++k) ASSERT_TRUE(done(sub.remove(k), true));
  EXPECT_EQ(cells_[0]->in_flight(), entries[0]->offset.load());
}

TEST_F(SublistFixture, ConcurrentRemovesExactlyOneSucceeds) {
  build({kSubtailKey});
  for (int round = 0; round < 500; ++round) {
    ASSERT_TRUE(done(sub.insert(round), true));
    std::atomic<int> wins{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < 2; ++t)
      pool.emplace_back([&] {
        if (done(sub.remove(round), true)) wins.fetch_add(1);
      });
    for (auto& th : pool) th.join();
    ASSERT_EQ(wins.load(), 1) << "round " << round;
  }
}

TEST_F(SublistFixture, ConcurrentMixedOpsKeepDisjointKeysExact) {
  build({-1000, 0, 1000, kSubtailKey});
  constexpr int kThreads = 4;
  std::vector<std::set<Key>> expect(kThreads);
  std::vector<std::thread> pool;
  for (int t = 0; t < kThreads; ++t)
    pool.emplace_back([&, t] {
      std::mt19937_64 rng(100 + static_cast<std::uint64_t>(t));
      for (int i = 0; i < 5000; ++i) {
        const Key k = static_cast<Key>(rng() % 500) * kThreads + t - 1000;
        if (rng() % 2) {
          if (done(sub.insert(k), true)) expect[t].insert(k);
        } else if (done(sub.remove(k), true)) {
          expect[t].erase(k);
        }
      }
    });
  for (auto& th : pool) th.join();
  std::set<Key> all;
  for (auto& s : expect) all.insert(s.begin(), s.end());
  EXPECT_EQ(keys(), std::vector<Key>(all.begin(), all.end()));
  for (auto* c : cells_) EXPECT_EQ(c->in_flight(), 0);
}

}  // namespace
}  // namespace dili
