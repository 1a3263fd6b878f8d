#include <benchmark/benchmark.h>

#include <random>

#include "dili/cluster.hpp"
#include "dili/message.hpp"
#include "dili/registry.hpp"
#include "dili/server.hpp"

namespace {

using namespace dili;

// A single loopback server holding `n` even keys; ops go straight to the
// handler so the numbers reflect the list, not the transport.
struct OneServer {
  explicit OneServer(std::int64_t n) : cluster(options(n)) {
    for (std::int64_t k = 0; k < n; ++k) server().handle_client(Tag::insert, {.key = 2 * k});
  }
  static ClusterOptions options(std::int64_t n) {
    ClusterOptions o;
    o.servers = 1;
    o.key_lo = 0;
    o.key_hi = 2 * n;
    o.base.split_threshold = 1 << 20;
    o.base.arena_capacity = static_cast<std::uint64_t>(4 * n) + (1u << 16);
    return o;
  }
  Server& server() { return cluster.server(0); }
  LoopbackCluster cluster;
};

void BM_SublistFind(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  OneServer s(n);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> key(0, 2 * n - 1);
  for (auto _ : state) benchmark::DoNotOptimize(s.server().handle_client(Tag::find, {.key = key(rng)}));
  s.cluster.stop();
}
BENCHMARK(BM_SublistFind)->Arg(64)->Arg(1024);

// Insert then remove the same odd key, so the list size stays fixed.
void BM_SublistInsertRemove(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  OneServer s(n);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int64_t> key(0, n - 1);
  for (auto _ : state) {
    const Key k = 2 * key(rng) + 1;
    benchmark::DoNotOptimize(s.server().handle_client(Tag::insert, {.key = k}));
    benchmark::DoNotOptimize(s.server().handle_client(Tag::remove, {.key = k}));
  }
  s.cluster.stop();
}
BENCHMARK(BM_SublistInsertRemove)->Arg(64)->Arg(1024);

void BM_RegistryGetByKey(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Registry reg(n + 1);
  Key lo = kSubheadKey;
  for (std::size_t i = 0; i < n; ++i) {
    const Key hi = i + 1 == n ? kSubtailKey : static_cast<Key>(i * 1000);
    reg.add_entry(std::make_shared<Entry>(lo, hi, NodeRef::pack(0, i + 1)));
    lo = hi;
  }
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<Key> key(0, static_cast<Key>(n * 1000));
  for (auto _ : state) {
    Guard g;
    benchmark::DoNotOptimize(reg.get_by_key(key(rng)));
  }
}
BENCHMARK(BM_RegistryGetByKey)->Arg(16)->Arg(4096);

void BM_EncodeDecodeFind(benchmark::State& state) {
  const Message m{Tag::find, 42, ClientOp{.key = 123456}};
  std::vector<std::uint8_t> buf;
  for (auto _ : state) {
    buf.clear();
    encode_into(m, buf);
    benchmark::DoNotOptimize(decode(buf));
  }
}
BENCHMARK(BM_EncodeDecodeFind);

}  // namespace

BENCHMARK_MAIN();
