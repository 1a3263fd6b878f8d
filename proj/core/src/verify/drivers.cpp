#include "dili/verify/drivers.hpp"

#include <algorithm>
#include <future>

#include <fmt/format.h>

#include "dili/verify/inspect.hpp"

namespace dili::verify {

bool ClientGate::enter() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return shut_ || !closed_; });
  if (shut_) return false;
  ++inside_;
  return true;
}

void ClientGate::leave() {
  std::lock_guard lock(mu_);
  if (--inside_ == 0) cv_.notify_all();
}

void ClientGate::close() {
  std::unique_lock lock(mu_);
  closed_ = true;
  cv_.wait(lock, [this] { return inside_ == 0; });
}

void ClientGate::open() {
  std::lock_guard lock(mu_);
  closed_ = false;
  cv_.notify_all();
}

void ClientGate::shut() {
  std::lock_guard lock(mu_);
  shut_ = true;
  cv_.notify_all();
}

namespace {

template <class F>
bool on_maintenance(Server& s, F&& f) {
  try {
    return s.submit_and_wait(std::forward<F>(f));
  } catch (const ShutdownInProgress&) {
  } catch (const std::future_error&) {
  }
  return false;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

bool random_split(Server& s, std::mt19937_64& rng) {
  return on_maintenance(s, [&] {
    auto owned = s.owned_entries();
    if (owned.empty()) return false;
    auto e = pick(owned, rng);
    std::vector<NodeRef> candidates;
    {
      Guard g;
      const NodeRef tail = e->tail();
      for (NodeRef c = s.store().get(e->head()).next.load().unmarked();
           c != tail && s.store().is_local(c);) {
        const Node& n = s.store().get(c);
        const NodeRef nx = n.next.load();
        if (!nx.marked() && is_client_key(n.key.load())) candidates.push_back(c);
        c = nx.unmarked();
      }
    }
    if (candidates.empty()) return false;
    return std::holds_alternative<NewEntry>(s.background().split(*e, pick(candidates, rng)));
  });
}

bool random_merge(Server& s, std::mt19937_64& rng) {
  return on_maintenance(s, [&] {
    auto owned = s.owned_entries();
    std::vector<std::pair<std::shared_ptr<Entry>, std::shared_ptr<Entry>>> pairs;
    {
      Guard g;
      const auto& slots = s.registry().snapshot().slots;
      auto is_owned = [&](const Entry* e) {
        return std::any_of(owned.begin(), owned.end(), [&](const auto& o) { return o.get() == e; });
      };
      for (std::size_t i = 0; i + 1 < slots.size(); ++i)
        if (is_owned(slots[i].entry.get()) && is_owned(slots[i + 1].entry.get()))
          pairs.emplace_back(slots[i].entry, slots[i + 1].entry);
    }
    if (pairs.empty()) return false;
    const auto& [left, right] = pick(pairs, rng);
    return s.background().merge(*left, *right) != nullptr;
  });
}

bool random_move(Server& s, std::mt19937_64& rng, std::chrono::milliseconds cooldown) {
  std::vector<ServerId> peers;
  for (ServerId p : s.config().server_ids())
    if (p != s.id()) peers.push_back(p);
  if (peers.empty()) return false;
  const ServerId dest = pick(peers, rng);
  return on_maintenance(s, [&] {
    const std::int64_t now = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                 std::chrono::steady_clock::now().time_since_epoch())
                                 .count();
    const std::int64_t min_age = std::chrono::nanoseconds(cooldown).count();
    std::vector<std::shared_ptr<Entry>> settled;
    for (auto& e : s.owned_entries()) {
      const std::int64_t acquired = e->acquired_at_ns.load();
      if (acquired == 0 || now - acquired >= min_age) settled.push_back(std::move(e));
    }
    if (settled.empty()) return false;
    return s.background().move(*pick(settled, rng), dest) == MoveResult::moved;
  });
}

ForcedBackground::ForcedBackground(Cluster& cluster, ForcedOptions options)
    : cluster_(cluster), options_(options) {}

void ForcedBackground::start() {
  stop_.store(false);
  thread_ = std::thread([this] { loop(); });
}

void ForcedBackground::stop() {
  stop_.store(true);
  if (thread_.joinable()) thread_.join();
}

ForcedCounts ForcedBackground::counts() const {
  return {attempts_.load(), splits_.load(), merges_.load(), moves_.load()};
}

void ForcedBackground::loop() {
  std::mt19937_64 rng(options_.seed);
  std::vector<int> kinds;
  if (options_.split) kinds.push_back(0);
  if (options_.merge) kinds.push_back(1);
  if (options_.move && cluster_.size() > 1) kinds.push_back(2);
  if (kinds.empty()) return;
  while (!stop_.load()) {
    Server& s = cluster_.server(rng() % cluster_.size());
    attempts_.fetch_add(1);
    switch (pick(kinds, rng)) {
      case 0:
        if (random_split(s, rng)) splits_.fetch_add(1);
        break;
      case 1:
        if (random_merge(s, rng)) merges_.fetch_add(1);
        break;
      default:
        if (random_move(s, rng, options_.move_cooldown)) moves_.fetch_add(1);
    }
    std::this_thread::sleep_for(options_.pause);
  }
}

std::uint64_t preload(Cluster& cluster, const std::vector<Key>& keys, std::size_t threads) {
  threads = std::max<std::size_t>(threads, 1);
  std::atomic<std::uint64_t> failed{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      RouteCache route(cluster);
      for (std::size_t i = t; i < keys.size(); i += threads) {
        BoolResp r = route.call(Tag::insert, keys[i]);
        if (r.status != Status::ok || !r.value) failed.fetch_add(1);
      }
    });
  }
  for (auto& th : pool) th.join();
  cluster.quiesce();
  return failed.load();
}

std::uint64_t settle_splits(Cluster& cluster, int max_rounds) {
  std::uint64_t total = 0;
  for (int round = 0; round < max_rounds; ++round) {
    std::uint64_t splits = 0;
    for (std::size_t i = 0; i < cluster.size(); ++i) {
      Server& s = cluster.server(i);
      try {
        splits += static_cast<std::uint64_t>(
            s.submit_and_wait([&] { return s.balancer_tick(); }).splits);
      } catch (const ShutdownInProgress&) {
      }
    }
    cluster.quiesce();
    total += splits;
    if (splits == 0) break;
  }
  return total;
}

std::size_t Monitors::max_hop() const {
  for (std::size_t i = hops.size(); i-- > 0;)
    if (hops[i] != 0) return i;
  return 0;
}

Monitors Monitors::operator-(const Monitors& b) const {
  Monitors d = *this;
  for (std::size_t i = 0; i < d.hops.size() && i < b.hops.size(); ++i) d.hops[i] -= b.hops[i];
  d.hop_violations -= b.hop_violations;
  d.maintenance_waits_from_client -= b.maintenance_waits_from_client;
  d.sign_violations -= b.sign_violations;
  d.freeze_breaches -= b.freeze_breaches;
  d.replicate_failures -= b.replicate_failures;
  d.tiling_violations -= b.tiling_violations;
  d.splits -= b.splits;
  d.moves -= b.moves;
  d.merges -= b.merges;
  return d;
}

Monitors collect_monitors(Cluster& cluster) {
  Monitors m;
  m.hops.assign(ServerStats::kHopBuckets, 0);
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    Server& s = cluster.server(i);
    auto h = s.stats().hop_histogram();
    for (std::size_t b = 0; b < h.size(); ++b) m.hops[b] += h[b];
    m.hop_violations += s.stats().hop_violations.load();
    m.maintenance_waits_from_client += s.stats().maintenance_waits_from_client.load();
    m.sign_violations += s.sublist().stats().sign_violations.load();
    auto& bg = s.background().stats();
    m.freeze_breaches += bg.freeze_quiescence_breaches.load();
    m.replicate_failures += bg.replicate_failures.load();
    m.splits += bg.splits.load();
    m.moves += bg.moves.load();
    m.merges += bg.merges.load();
    m.tiling_violations += s.registry().tiling_violations();
  }
  return m;
}

std::vector<InvariantResult> quiescent_checks(Cluster& c, const Monitors& m,
                                              std::size_t hop_limit) {
  std::vector<InvariantResult> out;
  auto add = [&](std::string name, bool pass, std::string detail) {
    out.push_back({std::move(name), pass, std::move(detail)});
  };
  const StructureReport st = check_structure(c);
  add("structure", st.ok,
      st.ok ? fmt::format("nodes={} keys={} sublists={}", st.nodes, st.keys, st.sublists)
            : st.detail);
  const OffsetReport off = check_offsets(c);
  add("offsets_at_quiescence", off.mismatches == 0,
      off.mismatches ? off.detail : fmt::format("entries={}", off.entries));
  add("hop_bound", m.max_hop() <= hop_limit && m.hop_violations == 0,
      fmt::format("max_hop={} limit={} violations={}", m.max_hop(), hop_limit, m.hop_violations));
  add("sign_property", m.sign_violations == 0,
      fmt::format("inserts_landing_on_frozen_pairs={}", m.sign_violations));
  add("freeze_quiescence", m.freeze_breaches == 0,
      fmt::format("end_counter_moves_after_freeze={}", m.freeze_breaches));
  add("replication", m.replicate_failures == 0,
      fmt::format("failed_replicates={}", m.replicate_failures));
  add("registry_tiling", m.tiling_violations == 0,
      fmt::format("tiling_violations={}", m.tiling_violations));
  add("clients_never_wait_on_maintenance", m.maintenance_waits_from_client == 0,
      fmt::format("waits={}", m.maintenance_waits_from_client));
  return out;
}

}  // namespace dili::verify
