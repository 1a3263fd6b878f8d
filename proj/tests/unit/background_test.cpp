#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "dili/cluster.hpp"
#include "dili/server.hpp"
#include "dili/verify/inspect.hpp"

namespace dili {
namespace {

ClusterOptions owned_by_zero(std::size_t servers, bool retain_copy = false) {
  ClusterOptions o;
  o.servers = servers;
  o.partition = {{0, kSubtailKey}};
  o.background.retain_moved_copy = retain_copy;
  return o;
}

NodeRef node_for(Server& s, Entry& e, Key k) {
  Guard g;
  auto out = s.sublist().search(k, e.head());
  auto* f = std::get_if<Found>(&out);
  return f ? f->node : kNullRef;
}

std::shared_ptr<Entry> split_at(Server& s, Entry& e, Key k) {
  const NodeRef n = node_for(s, e, k);
  EXPECT_TRUE(n) << "no node for " << k;
  auto out = s.submit_and_wait([&] { return s.background().split(e, n); });
  auto* fresh = std::get_if<NewEntry>(&out);
  return fresh ? fresh->entry : nullptr;
}

std::vector<Key> item_keys(const std::vector<verify::WalkedNode>& nodes) {
  std::vector<Key> out;
  for (const auto& n : nodes)
    if (is_client_key(n.key) && !n.marked) out.push_back(n.key);
  return out;
}

TEST(Split, QuiescentSplitPartitionsKeysAndOffsets) {
  LoopbackCluster c(owned_by_zero(1));
  for (Key k : {5, 9, 12}) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto left = s.owned_entries().at(0);
  auto right = split_at(s, *left, 9);
  ASSERT_TRUE(right);

  EXPECT_EQ(left->key_min, kSubheadKey);
  EXPECT_EQ(left->key_max.load(), 9);
  EXPECT_EQ(right->key_min, 9);
  EXPECT_EQ(right->key_max.load(), kSubtailKey);
  EXPECT_EQ(item_keys(verify::walk_sublist(c, left->head())), (std::vector<Key>{5, 9}));
  EXPECT_EQ(item_keys(verify::walk_sublist(c, right->head())), (std::vector<Key>{12}));
  EXPECT_EQ(left->offset.load(), 0);
  EXPECT_EQ(right->offset.load(), 0);
  EXPECT_EQ(verify::check_offsets(c).mismatches, 0u);
  EXPECT_TRUE(verify::check_structure(c).ok) << verify::check_structure(c).detail;
  c.stop();
}

TEST(Split, AtDeletedNodeFails) {
  LoopbackCluster c(owned_by_zero(1));
  for (Key k : {5, 9, 12}) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto e = s.owned_entries().at(0);
  const NodeRef n = node_for(s, *e, 9);
  ASSERT_TRUE(c.call(0, Tag::remove, 9).value);
  auto out = s.submit_and_wait([&] { return s.background().split(*e, n); });
  ASSERT_TRUE(std::holds_alternative<SplitFailed>(out));
  EXPECT_EQ(std::get<SplitFailed>(out).reason, SplitFailure::item_deleted);
  c.stop();
}

TEST(Split, PeersLearnTheNewRangeAndRedeliveryIsIdempotent) {
  LoopbackCluster c(owned_by_zero(2));
  for (Key k : {5, 9, 12}) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto right = split_at(s, *s.owned_entries().at(0), 9);
  ASSERT_TRUE(right);
  c.quiesce();

  Server& peer = c.server(1);
  ASSERT_EQ(peer.registry().size(), 2u);
  {
    Guard g;
    EXPECT_EQ(peer.registry().get_by_key(60)->head(), right->head());
  }
  EXPECT_TRUE(peer.background().register_sublist_recv(9, right->head()));
  EXPECT_EQ(peer.registry().size(), 2u);
  EXPECT_TRUE(c.call(1, Tag::find, 12).value);
  c.stop();
}

TEST(Split, ConcurrentInsertsConserveOffsets) {
  LoopbackCluster c(owned_by_zero(1));
  for (Key k = 0; k < 200; k += 2) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    std::mt19937_64 rng(4);
    while (!stop.load()) {
      const Key k = static_cast<Key>(rng() % 200);
      c.call(0, rng() % 2 ? Tag::insert : Tag::remove, k);
    }
  });
  for (int i = 0; i < 20; ++i) {
    auto entries = s.owned_entries();
    auto e = entries.at(static_cast<std::size_t>(i) % entries.size());
    for (const auto& n : verify::walk_sublist(c, e->head()))
      if (is_client_key(n.key) && !n.marked) {
        split_at(s, *e, n.key);
        break;
      }
  }
  stop.store(true);
  writer.join();
  c.quiesce();
  EXPECT_EQ(verify::check_offsets(c).mismatches, 0u) << verify::check_offsets(c).detail;
  EXPECT_TRUE(verify::check_structure(c).ok) << verify::check_structure(c).detail;
  c.stop();
}

TEST(Move, DestinationReproducesSourceStructure) {
  LoopbackCluster c(owned_by_zero(2, true));
  for (Key k : {5, 9}) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto e = s.owned_entries().at(0);
  const NodeRef src_head = e->head();
  ASSERT_EQ(s.submit_and_wait([&] { return s.background().move(*e, 1); }), MoveResult::moved);
  c.quiesce();

  const NodeRef dst_head = c.server(1).owned_entries().at(0)->head();
  EXPECT_EQ(dst_head.server(), 1);
  const auto src = verify::walk_sublist(c, src_head);
  const auto dst = verify::walk_sublist(c, dst_head);
  ASSERT_EQ(src.size(), dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_EQ(src[i].key, dst[i].key) << i;
    EXPECT_EQ(src[i].id, dst[i].id) << i;
    EXPECT_EQ(src[i].marked, dst[i].marked) << i;
  }
  EXPECT_EQ(item_keys(dst), (std::vector<Key>{5, 9}));
  EXPECT_TRUE(c.call(0, Tag::find, 9).value);
  EXPECT_TRUE(c.call(1, Tag::remove, 5).value);
  EXPECT_FALSE(c.call(0, Tag::find, 5).value);
  c.stop();
}

TEST(Move, ConcurrentUpdatesAreReplayed) {
  LoopbackCluster c(owned_by_zero(2));
  for (Key k = 0; k < 100; k += 2) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  std::set<Key> expect;
  for (Key k = 0; k < 100; k += 2) expect.insert(k);
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::thread writer([&] {
    std::mt19937_64 rng(8);
    while (!stop.load()) {
      const Key k = static_cast<Key>(rng() % 100);
      const bool ins = rng() % 2;
      const BoolResp r = c.call(0, ins ? Tag::insert : Tag::remove, k);
      EXPECT_EQ(r.status, Status::ok);
      std::lock_guard lock(mu);
      if (r.value) ins ? (void)expect.insert(k) : (void)expect.erase(k);
    }
  });
  Server& s = c.server(0);
  auto e = s.owned_entries().at(0);
  std::this_thread::sleep_for(std::chrono::milliseconds(5));
  const MoveResult moved = s.submit_and_wait([&] { return s.background().move(*e, 1); });
  std::this_thread::sleep_for(std::chrono::milliseconds(5));
  stop.store(true);
  writer.join();
  c.quiesce();
  EXPECT_EQ(moved, MoveResult::moved);
  EXPECT_EQ(verify::key_set(c), expect);
  EXPECT_EQ(verify::check_offsets(c).mismatches, 0u);
  c.stop();
}

TEST(Merge, SplitThenMergeRestoresOneSublist) {
  LoopbackCluster c(owned_by_zero(1));
  for (Key k : {5, 9, 12}) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto left = s.owned_entries().at(0);
  auto right = split_at(s, *left, 9);
  ASSERT_TRUE(right);
  auto merged = s.submit_and_wait([&] { return s.background().merge(*left, *right); });
  ASSERT_TRUE(merged);
  c.quiesce();
  EXPECT_EQ(s.registry().size(), 1u);
  EXPECT_EQ(merged->key_max.load(), kSubtailKey);
  const auto nodes = verify::walk_sublist(c, merged->head());
  EXPECT_EQ(item_keys(nodes), (std::vector<Key>{5, 9, 12}));
  // Subhead, three items, subtail: the interior pair is gone.
  EXPECT_EQ(nodes.size(), 5u);
  EXPECT_EQ(verify::check_offsets(c).mismatches, 0u);
  c.stop();
}

TEST(Merge, ConcurrentInsertsIntoBothHalvesSurvive) {
  LoopbackCluster c(owned_by_zero(1));
  for (Key k = 0; k < 100; k += 10) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto left = s.owned_entries().at(0);
  auto right = split_at(s, *left, 50);
  ASSERT_TRUE(right);
  std::thread writer([&] {
    for (Key k = 1; k < 100; k += 10) c.call(0, Tag::insert, k);
  });
  auto merged = s.submit_and_wait([&] { return s.background().merge(*left, *right); });
  writer.join();
  c.quiesce();
  EXPECT_TRUE(merged);
  std::set<Key> want;
  for (Key k = 0; k < 100; k += 10) want.insert({k, k + 1});
  EXPECT_EQ(verify::key_set(c), want);
  EXPECT_EQ(verify::check_offsets(c).mismatches, 0u);
  EXPECT_TRUE(verify::check_structure(c).ok) << verify::check_structure(c).detail;
  c.stop();
}

TEST(Merge, NonAdjacentEntriesAreRejected) {
  LoopbackCluster c(owned_by_zero(1));
  for (Key k : {1, 2, 3, 4}) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  auto a = s.owned_entries().at(0);
  auto b = split_at(s, *a, 1);
  auto d = split_at(s, *b, 3);
  ASSERT_TRUE(b && d);
  auto merged = s.submit_and_wait([&] { return s.background().merge(*a, *d); });
  EXPECT_FALSE(merged);
  EXPECT_EQ(s.registry().size(), 3u);
  c.stop();
}

}  // namespace
}  // namespace dili
