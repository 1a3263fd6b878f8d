#include <gtest/gtest.h>

#include <sstream>

#include "dili/cluster.hpp"
#include "dili/config.hpp"
#include "dili/server.hpp"
#include "dili/verify/inspect.hpp"

namespace dili {
namespace {

ServerConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

TEST(Config, ParsesEveryKey) {
  const ServerConfig c = parse(
      "# two servers\n"
      "server_id = 1\n"
      "listen_addr = 127.0.0.1:7001\n"
      "peer = 0=127.0.0.1:7000\n"
      "peer = 1=127.0.0.1:7001\n"
      "partition = 0@0,1@inf\n"
      "split_threshold = 200\n"
      "move_trigger_ratio = 1.25\n"
      "balancer_period_ms = 40\n"
      "move_cooldown_ms = 100\n"
      "workers = 3\n"
      "arena_capacity = 4096\n"
      "max_sublists = 64\n"
      "seed = 9\n");
  EXPECT_EQ(c.server_id, 1);
  EXPECT_EQ(c.listen_addr, "127.0.0.1:7001");
  EXPECT_EQ(c.peers.size(), 2u);
  EXPECT_EQ(c.peers.at(0), "127.0.0.1:7000");
  EXPECT_EQ(c.partition, (std::vector<RangeAssignment>{{0, 0}, {1, kSubtailKey}}));
  EXPECT_EQ(c.split_threshold, 200);
  EXPECT_DOUBLE_EQ(c.move_trigger_ratio, 1.25);
  EXPECT_EQ(c.balancer_period.count(), 40);
  EXPECT_EQ(c.move_cooldown.count(), 100);
  EXPECT_EQ(c.workers, 3u);
  EXPECT_EQ(c.arena_capacity, 4096u);
  EXPECT_EQ(c.max_sublists, 64u);
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, RejectsInconsistentSetups) {
  // Owner 2 is not a peer.
  EXPECT_THROW(parse("server_id=0\npeer=0=127.0.0.1:1\npartition=0@0,2@inf\n"), ConfigError);
  // Partition must end at +inf.
  EXPECT_THROW(parse("server_id=0\npeer=0=127.0.0.1:1\npartition=0@100\n"), ConfigError);
  // Descending bounds.
  EXPECT_THROW(parse("server_id=0\npeer=0=127.0.0.1:1\npartition=0@5,0@1,0@inf\n"), ConfigError);
  EXPECT_THROW(parse("server_id=0\npeer=0=127.0.0.1:1\npartition=0@inf\nbogus=1\n"), ConfigError);
  EXPECT_THROW(parse("server_id=0\npeer=0=127.0.0.1:1\npartition=0@inf\nsplit_threshold=x\n"),
               ConfigError);
  EXPECT_THROW(parse("server_id=0\nserver_id=1\n"), ConfigError);
}

TEST(Config, PartitionTextRoundTrips) {
  const auto p = parse_partition("0@-100, 1@0 ,2@inf");
  EXPECT_EQ(p, (std::vector<RangeAssignment>{{0, -100}, {1, 0}, {2, kSubtailKey}}));
  EXPECT_EQ(parse_partition(format_partition(p)), p);
  const auto u = uniform_partition(4, 0, 400);
  ASSERT_EQ(u.size(), 4u);
  EXPECT_EQ(u.back().key_max, kSubtailKey);
  EXPECT_EQ(u[0].key_max, 100);
}

ClusterOptions two_servers_split_at_zero() {
  ClusterOptions o;
  o.servers = 2;
  o.partition = {{0, 0}, {1, kSubtailKey}};
  return o;
}

std::vector<std::tuple<Key, Key, std::uint64_t>> registry_rows(Server& s) {
  std::vector<std::tuple<Key, Key, std::uint64_t>> out;
  for (const auto& slot : s.registry().copy_slots())
    out.emplace_back(slot.key_min, slot.key_max, slot.entry->head().raw());
  return out;
}

TEST(Cluster, BootstrapTilesEveryRegistryIdentically) {
  LoopbackCluster c(two_servers_split_at_zero());
  const auto rows0 = registry_rows(c.server(0));
  ASSERT_EQ(rows0.size(), 2u);
  EXPECT_EQ(std::get<0>(rows0[0]), kSubheadKey);
  EXPECT_EQ(std::get<1>(rows0[0]), 0);
  EXPECT_EQ(std::get<1>(rows0[1]), kSubtailKey);
  EXPECT_EQ(registry_rows(c.server(1)), rows0);

  LoopbackCluster again(two_servers_split_at_zero());
  EXPECT_EQ(registry_rows(again.server(0)), rows0);
  again.stop();
  c.stop();
}

TEST(Cluster, EmptyClusterFindsNothing) {
  LoopbackCluster c(two_servers_split_at_zero());
  for (ServerId s = 0; s < 2; ++s)
    for (Key k : {-5, 0, 1, 1000}) {
      const BoolResp r = c.call(s, Tag::find, k);
      EXPECT_EQ(r.status, Status::ok);
      EXPECT_FALSE(r.value);
    }
  c.stop();
}

// Hop counts as seen by the executing server: 1 for the entry server, one
// more per forward.
TEST(Cluster, LocalKeyTakesNoForwardAndRemoteKeyOne) {
  LoopbackCluster c(two_servers_split_at_zero());
  const BoolResp local = c.call(0, Tag::insert, -3);
  EXPECT_TRUE(local.value);
  EXPECT_EQ(local.hops, 1);
  const BoolResp remote = c.call(0, Tag::insert, 3);
  EXPECT_TRUE(remote.value);
  EXPECT_EQ(remote.hops, 2);
  EXPECT_TRUE(c.call(1, Tag::find, -3).value);
  EXPECT_TRUE(c.call(0, Tag::find, 3).value);
  EXPECT_TRUE(c.call(1, Tag::remove, 3).value);
  EXPECT_FALSE(c.call(0, Tag::find, 3).value);
  c.stop();
}

TEST(Cluster, HopLimitIsEnforced) {
  LoopbackCluster c(two_servers_split_at_zero());
  ClientOp op{5, kNullRef, static_cast<std::uint8_t>(kMaxHops + 1), true};
  const BoolResp r = c.server(1).handle_client(Tag::find, op);
  EXPECT_EQ(r.status, Status::hop_limit);
  EXPECT_EQ(c.server(1).stats().hop_violations.load(), 1u);
  c.stop();
}

TEST(Cluster, TcpBackendServesClientOps) {
  auto c = make_cluster("tcp", two_servers_split_at_zero());
  for (Key k = -50; k < 50; ++k) ASSERT_TRUE(c->call(static_cast<ServerId>(k & 1), Tag::insert, k).value);
  for (Key k = -50; k < 50; ++k) ASSERT_TRUE(c->call(0, Tag::find, k).value) << k;
  EXPECT_FALSE(c->call(1, Tag::insert, 7).value);
  EXPECT_EQ(verify::key_set(*c).size(), 100u);
  c->stop();
}

TEST(Balancer, OversizedSublistIsSplitBelowThreshold) {
  ClusterOptions o;
  o.servers = 1;
  o.base.split_threshold = 125;
  LoopbackCluster c(o);
  for (Key k = 0; k < 300; ++k) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  Server& s = c.server(0);
  const BalancerReport rep = s.submit_and_wait([&] { return s.balancer_tick(); });
  EXPECT_GE(rep.splits, 1);
  for (std::int64_t n : verify::sublist_sizes(c)) EXPECT_LE(n, 125);
  EXPECT_EQ(verify::key_set(c).size(), 300u);
  const BalancerReport again = s.submit_and_wait([&] { return s.balancer_tick(); });
  EXPECT_EQ(again.splits, 0);
  c.stop();
}

TEST(Balancer, BalancedClusterTakesNoAction) {
  LoopbackCluster c(two_servers_split_at_zero());
  for (Key k = -20; k < 20; ++k) ASSERT_TRUE(c.call(0, Tag::insert, k).value);
  for (std::size_t i = 0; i < 2; ++i) {
    Server& s = c.server(i);
    const BalancerReport rep = s.submit_and_wait([&] { return s.balancer_tick(); });
    EXPECT_EQ(rep.splits, 0);
    EXPECT_EQ(rep.moves, 0);
  }
  c.stop();
}

TEST(RouteCache, FollowsOwnershipAfterMove) {
  ClusterOptions o;
  o.servers = 2;
  o.partition = {{0, kSubtailKey}};
  LoopbackCluster c(o);
  RouteCache routes(c);
  EXPECT_EQ(routes.guess(10), 0);
  ASSERT_TRUE(routes.call(Tag::insert, 10).value);
  Server& s = c.server(0);
  auto entry = s.owned_entries().at(0);
  ASSERT_EQ(s.submit_and_wait([&] { return s.background().move(*entry, 1); }), MoveResult::moved);
  c.quiesce();
  EXPECT_TRUE(routes.call(Tag::find, 10).value);
  EXPECT_EQ(routes.guess(10), 1);
  c.stop();
}

}  // namespace
}  // namespace dili
