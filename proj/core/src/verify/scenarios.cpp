#include "dili/verify/scenarios.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <mutex>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dili/chaos.hpp"
#include "dili/verify/drivers.hpp"
#include "dili/verify/inspect.hpp"
#include "dili/verify/rdcss_model.hpp"
#include "dili/verify/workload.hpp"

namespace dili::verify {

namespace {

using SteadyClock = std::chrono::steady_clock;

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  return std::mt19937_64(splitmix(seed ^ splitmix(salt)));
}

std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

Tag random_update_or_read(std::mt19937_64& rng, double read_fraction) {
  const double c = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (c < read_fraction) return Tag::find;
  return c < read_fraction + (1 - read_fraction) / 2 ? Tag::insert : Tag::remove;
}

// Resets global test switches when a scenario leaves, however it leaves.
struct GlobalSwitches {
  GlobalSwitches() = default;
  GlobalSwitches(const GlobalSwitches&) = delete;
  GlobalSwitches& operator=(const GlobalSwitches&) = delete;
  ~GlobalSwitches() {
    chaos::configure(0, 0);
    hooks::insert_counted.store(nullptr);
    hooks::remove_counted.store(nullptr);
    hooks::move_pre_freeze.store(nullptr);
  }
};

// Distinct random keys in [lo, hi).
std::vector<Key> random_keys(std::mt19937_64& rng, std::size_t n, Key lo, Key hi) {
  std::unordered_set<Key> seen;
  std::vector<Key> out;
  std::uniform_int_distribution<Key> d(lo, hi - 1);
  while (out.size() < n) {
    Key k = d(rng);
    if (seen.insert(k).second) out.push_back(k);
  }
  return out;
}

// Inserts in chunks and splits between them so no sublist grows long
// enough to make the load quadratic.
void load_in_chunks(Cluster& c, const std::vector<Key>& keys, std::size_t threads,
                    std::size_t chunk = 4000) {
  for (std::size_t i = 0; i < keys.size(); i += chunk) {
    std::vector<Key> part(keys.begin() + static_cast<std::ptrdiff_t>(i),
                          keys.begin() + static_cast<std::ptrdiff_t>(std::min(keys.size(), i + chunk)));
    preload(c, part, threads);
    settle_splits(c);
  }
}

std::size_t owned_count(Cluster& c) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) n += c.server(i).owned_entries().size();
  return n;
}

}  // namespace

// ---- linearizability ----

HistoryShape history_shape(std::uint64_t seed) {
  auto rng = stream(seed, 0x11);
  HistoryShape s;
  s.servers = 1 + below(rng, 4);
  s.threads = 2 + below(rng, 7);
  s.ops_per_thread = 20 + below(rng, 31);
  const std::size_t nkeys = 4 + below(rng, 5);
  for (std::size_t k = 0; k < nkeys; ++k) {
    const Key key = static_cast<Key>(16 * k + 3);
    s.keys.push_back(key);
    if (below(rng, 2) == 0) s.initially_present.push_back(key);
  }
  return s;
}

HistoryRun run_history(std::uint64_t seed, bool mutate, std::uint32_t chaos_per_mille) {
  GlobalSwitches switches;
  HistoryRun run;
  run.shape = history_shape(seed);
  const HistoryShape& shape = run.shape;

  ClusterOptions o;
  o.servers = shape.servers;
  o.key_lo = 0;
  o.key_hi = static_cast<Key>(16 * shape.keys.size());
  o.faults.skip_delete_mark_check = mutate;
  o.background.backoff_max = std::chrono::microseconds(500);
  LoopbackCluster c(o);
  for (Key k : shape.initially_present) c.call(0, Tag::insert, k);
  c.quiesce();

  HistoryRecorder rec(shape.threads * shape.ops_per_thread + 1);
  std::atomic<std::uint64_t> errors{0};
  chaos::configure(chaos_per_mille, seed);
  // Removes pause before marking so that removes of one key overlap.
  hooks::remove_counted.store(+[] { std::this_thread::sleep_for(std::chrono::microseconds(200)); });
  ForcedOptions fo;
  fo.seed = splitmix(seed);
  fo.pause = std::chrono::microseconds(100);
  ForcedBackground forced(c, fo);
  forced.start();

  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < shape.threads; ++t) {
    clients.emplace_back([&, t] {
      auto rng = stream(seed, 0x100 + t);
      for (std::size_t i = 0; i < shape.ops_per_thread; ++i) {
        const auto kind = static_cast<OpKind>(below(rng, 3));
        // Half the traffic goes to one hot key so that same-key races are
        // common even with two threads.
        const Key key = shape.keys[below(rng, 2) ? 0 : below(rng, shape.keys.size())];
        const auto entry = static_cast<ServerId>(below(rng, shape.servers));
        HistoryEvent e;
        e.client = static_cast<std::uint32_t>(t);
        e.op = kind;
        e.key = key;
        e.invoke = rec.tick();
        BoolResp r = c.call(entry, tag_for(kind), key);
        e.response = rec.tick();
        e.result = r.value;
        if (r.status != Status::ok) {
          errors.fetch_add(1);
          continue;
        }
        rec.append(e);
      }
    });
  }
  for (auto& th : clients) th.join();
  forced.stop();
  chaos::configure(0, 0);
  c.quiesce();
  c.stop();

  const ForcedCounts fc = forced.counts();
  run.background_ops = fc.splits + fc.merges + fc.moves;
  run.client_errors = errors.load();
  run.events = rec.events();
  CheckOptions co;
  co.initially_present = shape.initially_present;
  run.verdict = check_linearizable(run.events, co);
  return run;
}

ScenarioResult check_linearizability(const LinearizabilityOptions& o) {
  const auto t0 = SteadyClock::now();
  ScenarioResult res;
  std::size_t clean_ok = 0;
  std::size_t detected = 0;
  std::uint64_t background = 0;
  std::uint64_t events = 0;
  for (std::size_t i = 0; i < o.histories; ++i) {
    const std::uint64_t seed = o.first_seed + i;
    HistoryRun clean = run_history(seed, false, o.chaos_per_mille);
    background += clean.background_ops;
    events += clean.events.size();
    if (clean.verdict.kind == VerdictKind::ok && clean.client_errors == 0) {
      ++clean_ok;
    } else if (res.detail.empty()) {
      res.detail = fmt::format("seed {}: {} errors={} {}", seed, verdict_name(clean.verdict.kind),
                               clean.client_errors, clean.verdict.detail);
      for (const auto& e : clean.verdict.window) res.detail += "\n  " + to_string(e);
    }
    if (o.with_mutation) {
      HistoryRun bad = run_history(seed, true, o.chaos_per_mille);
      if (bad.verdict.kind == VerdictKind::violation) ++detected;
    }
  }
  const double rate = o.histories ? static_cast<double>(detected) / static_cast<double>(o.histories) : 0;
  res.pass = clean_ok == o.histories && (!o.with_mutation || rate >= 0.95);
  res.summary = fmt::format("histories={} clean_ok={} events={} background_ops={}", o.histories,
                            clean_ok, events, background);
  if (o.with_mutation)
    res.summary += fmt::format(" mutant_detected={} ({:.1f}%, need >=95%)", detected, 100 * rate);
  res.seconds = seconds_since(t0);
  return res;
}

// ---- replay ----

namespace {

std::atomic<ClientGate*> g_freeze_gate{nullptr};

void close_gate_before_freeze() {
  if (ClientGate* g = g_freeze_gate.load()) g->close();
}

std::string ident(const WalkedNode& n) {
  return fmt::format("{}/{}{}", n.id.sid, n.id.ts, n.marked ? "(marked)" : "");
}

// The copy must hold the source's nodes in the source's order with the
// same marks. It may also hold marked nodes the source already unlinked;
// replay never unlinks.
std::string compare_copies(const std::vector<WalkedNode>& src, const std::vector<WalkedNode>& dst) {
  if (src.empty() || dst.empty()) return "empty walk";
  if (src.front().id != dst.front().id) return "subhead identity differs";
  if (src.back().key != kSubtailKey || dst.back().key != kSubtailKey)
    return "walk did not end at a subtail";
  if (src.back().id != dst.back().id)
    return "subtail identity differs: source " + ident(src.back()) + " destination " + ident(dst.back());
  if (src.back().key_max != dst.back().key_max) return "subtail bound differs";
  std::set<ItemId> src_ids;
  for (const auto& n : src) src_ids.insert(n.id);
  std::vector<const WalkedNode*> common;
  for (const auto& n : dst) {
    if (src_ids.count(n.id)) {
      common.push_back(&n);
    } else if (!n.marked) {
      return "destination holds unmarked node " + ident(n) + " absent from the source";
    }
  }
  if (common.size() != src.size())
    return fmt::format("destination has {} of the source's {} nodes", common.size(), src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].id != common[i]->id || src[i].marked != common[i]->marked)
      return fmt::format("position {}: source {} destination {}", i, ident(src[i]),
                         ident(*common[i]));
  }
  return {};
}

}  // namespace

namespace {
std::atomic<std::uint64_t> g_replay_client_ops{0};
std::atomic<std::uint64_t> g_replay_replicates{0};
}  // namespace

std::string replay_run(std::uint64_t seed, const ReplayOptions& o) {
  GlobalSwitches switches;
  auto rng = stream(seed, 0x22);
  ClusterOptions co;
  co.servers = 2;
  co.background.retain_moved_copy = true;
  co.background.backoff_max = std::chrono::microseconds(500);
  LoopbackCluster c(co);
  Server& src = c.server(0);

  const Key span = 4000;
  for (Key k : random_keys(rng, o.preload, 1, span)) c.call(0, Tag::insert, k);
  c.quiesce();
  if (below(rng, 2) == 0) random_split(src, rng);
  auto owned = src.owned_entries();
  std::shared_ptr<Entry> e = owned[below(rng, owned.size())];
  const NodeRef old_head = e->head();
  const Key lo = std::max<Key>(e->key_min + 1, 1);
  const Key hi = std::min<Key>(e->key_max.load(), span);

  ClientGate gate;
  g_freeze_gate.store(&gate);
  hooks::move_pre_freeze.store(&close_gate_before_freeze);
  chaos::configure(150, seed);

  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < o.clients; ++t) {
    clients.emplace_back([&, t] {
      auto r = stream(seed, 0x200 + t);
      while (gate.enter()) {
        const Key k = lo + static_cast<Key>(below(r, static_cast<std::uint64_t>(hi - lo + 1)));
        c.call(0, below(r, 2) ? Tag::insert : Tag::remove, k);
        g_replay_client_ops.fetch_add(1);
        gate.leave();
      }
    });
  }
  std::this_thread::sleep_for(std::chrono::microseconds(500));
  const MoveResult moved = src.submit_and_wait([&] { return src.background().move(*e, 1); });
  gate.close();  // already closed if the move reached its freeze
  c.quiesce();
  chaos::configure(0, 0);
  g_replay_replicates.fetch_add(src.sublist().stats().replicates.load());

  std::string why;
  if (moved != MoveResult::moved) {
    why = "move did not complete";
  } else {
    why = compare_copies(walk_sublist(c, old_head), walk_sublist(c, e->head()));
  }
  gate.shut();
  for (auto& th : clients) th.join();
  g_freeze_gate.store(nullptr);
  c.stop();
  return why;
}

ScenarioResult check_replay(const ReplayOptions& o) {
  const auto t0 = SteadyClock::now();
  ScenarioResult res;
  std::size_t ok = 0;
  g_replay_client_ops.store(0);
  g_replay_replicates.store(0);
  for (std::size_t i = 0; i < o.runs; ++i) {
    const std::uint64_t seed = o.first_seed + i;
    std::string why = replay_run(seed, o);
    if (why.empty())
      ++ok;
    else if (res.detail.empty())
      res.detail = fmt::format("seed {}: {}", seed, why);
  }
  res.pass = ok == o.runs;
  res.summary = fmt::format("moves={} identical={} concurrent_client_ops={} replicates={}", o.runs,
                            ok, g_replay_client_ops.load(), g_replay_replicates.load());
  res.seconds = seconds_since(t0);
  return res;
}

// ---- hop bound ----

ScenarioResult check_hop_bound(const HopOptions& o) {
  const auto t0 = SteadyClock::now();
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = o.servers;
  co.background.backoff_max = std::chrono::microseconds(500);
  LoopbackCluster c(co);
  auto rng = stream(o.seed, 0x33);
  load_in_chunks(c, random_keys(rng, 4000, 0, co.key_hi), 4);

  auto phase = [&](bool background, std::uint64_t salt, std::uint64_t& errors, ForcedCounts& fc) {
    const Monitors before = collect_monitors(c);
    ForcedOptions fo;
    fo.merge = false;
    fo.seed = o.seed ^ salt;
    fo.pause = std::chrono::microseconds(500);
    ForcedBackground forced(c, fo);
    if (background) forced.start();
    std::atomic<std::uint64_t> errs{0};
    std::vector<std::thread> clients;
    for (std::size_t t = 0; t < o.clients; ++t) {
      clients.emplace_back([&, t] {
        auto r = stream(o.seed ^ salt, 0x300 + t);
        const std::size_t n = o.ops / o.clients + (t < o.ops % o.clients ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
          const Key k = static_cast<Key>(below(r, static_cast<std::uint64_t>(co.key_hi)));
          BoolResp resp = c.call(static_cast<ServerId>(below(r, c.size())),
                                 random_update_or_read(r, 0.5), k);
          if (resp.status != Status::ok) errs.fetch_add(1);
        }
      });
    }
    for (auto& th : clients) th.join();
    forced.stop();
    c.quiesce();
    errors = errs.load();
    fc = forced.counts();
    return collect_monitors(c) - before;
  };

  std::uint64_t err_off = 0;
  std::uint64_t err_on = 0;
  ForcedCounts fc_off;
  ForcedCounts fc_on;
  const Monitors off = phase(false, 0xA, err_off, fc_off);
  const Monitors on = phase(true, 0xB, err_on, fc_on);
  c.stop();

  auto hist = [](const Monitors& m) {
    std::string s;
    for (std::size_t i = 1; i < m.hops.size(); ++i)
      if (m.hops[i]) s += fmt::format("{}{}:{}", s.empty() ? "" : ",", i, m.hops[i]);
    return s;
  };
  ScenarioResult res;
  res.pass = off.max_hop() <= 2 && off.hop_violations == 0 && err_off == 0 && on.max_hop() <= 3 &&
             on.hop_violations == 0 && err_on == 0 && fc_on.moves > 0;
  res.summary = fmt::format(
      "quiet: max_hop={} hist=[{}] errors={}; moving: max_hop={} hist=[{}] moves={} "
      "violations={} errors={}",
      off.max_hop(), hist(off), err_off, on.max_hop(), hist(on), fc_on.moves, on.hop_violations,
      err_on);
  res.seconds = seconds_since(t0);
  return res;
}

// ---- offset conservation ----

ScenarioResult check_offset_conservation(const OffsetOptions& o) {
  const auto t0 = SteadyClock::now();
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = 2;
  co.background.backoff_max = std::chrono::microseconds(500);
  LoopbackCluster c(co);
  Server& s = c.server(0);
  auto rng = stream(o.seed, 0x44);
  const Key span = 6000;
  load_in_chunks(c, random_keys(rng, 3000, 0, span), 4);

  ClientGate gate;
  chaos::configure(100, o.seed);
  // Inserts linger between counting and linking so some of them straddle
  // the retarget walk of a split or merge.
  hooks::insert_counted.store(+[] { std::this_thread::sleep_for(std::chrono::microseconds(100)); });
  std::atomic<std::uint64_t> client_ops{0};
  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < o.clients; ++t) {
    clients.emplace_back([&, t] {
      auto r = stream(o.seed, 0x400 + t);
      while (gate.enter()) {
        c.call(0, below(r, 2) ? Tag::insert : Tag::remove, static_cast<Key>(below(r, span)));
        client_ops.fetch_add(1);
        gate.leave();
      }
    });
  }

  std::size_t splits = 0;
  std::size_t merges = 0;
  std::size_t conserved = 0;
  std::size_t shifted = 0;  // operations leaving a nonzero offset on the second half
  std::size_t offset_mismatches = 0;
  std::size_t quiescences = 0;
  std::string detail;
  auto quiesce = [&] {
    gate.close();
    c.quiesce();
    ++quiescences;
    OffsetReport rep = check_offsets(c);
    offset_mismatches += rep.mismatches;
    if (rep.mismatches && detail.empty()) detail = rep.detail;
  };

  // A pick can go stale before the maintenance thread runs it (the split
  // node is removed, say); those attempts are retried with a fresh pick.
  std::size_t attempts = 0;
  for (std::size_t i = 0; splits + merges < o.operations && attempts < 4 * o.operations;
       i = splits + merges) {
    ++attempts;
    quiesce();
    auto owned = s.owned_entries();
    std::vector<std::pair<std::shared_ptr<Entry>, std::shared_ptr<Entry>>> adjacent;
    {
      Guard g;
      const auto& slots = s.registry().snapshot().slots;
      for (std::size_t k = 0; k + 1 < slots.size(); ++k) {
        auto is_owned = [&](const Entry* e) {
          return std::any_of(owned.begin(), owned.end(), [&](const auto& x) { return x.get() == e; });
        };
        if (is_owned(slots[k].entry.get()) && is_owned(slots[k + 1].entry.get()))
          adjacent.emplace_back(slots[k].entry, slots[k + 1].entry);
      }
    }
    const bool do_merge = !adjacent.empty() && (owned.size() > 24 || below(rng, 2) == 0);
    std::shared_ptr<Entry> a;
    std::shared_ptr<Entry> b;
    NodeRef split_at;
    if (do_merge) {
      std::tie(a, b) = adjacent[below(rng, adjacent.size())];
    } else {
      a = owned[below(rng, owned.size())];
      Guard g;
      std::vector<NodeRef> nodes;
      for (NodeRef x = s.store().get(a->head()).next.load().unmarked(); x != a->tail();) {
        const Node& n = s.store().get(x);
        if (!n.next.load().marked() && is_client_key(n.key.load())) nodes.push_back(x);
        x = n.next.load().unmarked();
      }
      if (nodes.empty()) {
        gate.open();
        continue;
      }
      split_at = nodes[below(rng, nodes.size())];
    }
    const std::int64_t before = a->offset.load() + (b ? b->offset.load() : 0);
    gate.open();
    std::this_thread::sleep_for(std::chrono::microseconds(50));

    bool done = s.submit_and_wait([&] {
      if (do_merge) return s.background().merge(*a, *b) != nullptr;
      SplitOutcome out = s.background().split(*a, split_at);
      if (auto* ne = std::get_if<NewEntry>(&out)) {
        b = ne->entry;
        return true;
      }
      return false;
    });

    quiesce();
    if (!done) {
      gate.open();
      continue;
    }
    (do_merge ? merges : splits) += 1;
    const std::int64_t after = a->offset.load() + b->offset.load();
    // After a merge the right pair is idle but still holds its residual.
    const std::int64_t cells = a->counters.load()->in_flight() + b->counters.load()->in_flight();
    if (after == before && cells == before) {
      ++conserved;
    } else if (detail.empty()) {
      detail = fmt::format("{} #{}: before={} after={} counters={}", do_merge ? "merge" : "split",
                           i, before, after, cells);
    }
    if (b->offset.load() != 0) ++shifted;
    gate.open();
  }
  gate.shut();
  for (auto& th : clients) th.join();
  chaos::configure(0, 0);
  c.quiesce();
  c.stop();

  ScenarioResult res;
  const std::size_t performed = splits + merges;
  res.pass = performed == o.operations && conserved == performed && offset_mismatches == 0;
  res.summary = fmt::format(
      "requested={} attempts={} splits={} merges={} conserved={} second_half_nonzero={} "
      "quiescences={} offset_mismatches={} client_ops={}",
      o.operations, attempts, splits, merges, conserved, shifted, quiescences, offset_mismatches, client_ops.load());
  res.detail = detail;
  res.seconds = seconds_since(t0);
  return res;
}

// ---- single active subhead ----

ScenarioResult check_single_active_subhead(const SubheadOptions& o) {
  const auto t0 = SteadyClock::now();
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = o.servers;
  co.background.backoff_max = std::chrono::microseconds(500);
  LoopbackCluster c(co);
  auto rng = stream(o.seed, 0x55);
  load_in_chunks(c, random_keys(rng, 4000, 0, co.key_hi), 4);

  ForcedOptions fo;
  fo.seed = o.seed;
  fo.pause = std::chrono::microseconds(1000);
  ForcedBackground forced(c, fo);
  std::atomic<bool> stop{false};
  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < o.clients; ++t) {
    clients.emplace_back([&, t] {
      auto r = stream(o.seed, 0x500 + t);
      while (!stop.load())
        c.call(static_cast<ServerId>(below(r, c.size())), random_update_or_read(r, 0.5),
               static_cast<Key>(below(r, static_cast<std::uint64_t>(co.key_hi))));
    });
  }
  forced.start();

  std::size_t samples = 0;
  std::size_t violations = 0;
  std::size_t identities = 0;
  std::string detail;
  const auto end = SteadyClock::now() + o.duration;
  for (auto next = SteadyClock::now(); next < end; next += o.period) {
    std::this_thread::sleep_until(next);
    SubheadSample s = sample_active_subheads(c);
    ++samples;
    identities = std::max(identities, s.identities);
    violations += s.violations;
    if (s.violations && detail.empty()) detail = s.detail;
  }
  forced.stop();
  stop.store(true);
  for (auto& th : clients) th.join();
  c.quiesce();
  const StructureReport st = check_structure(c);
  const ForcedCounts fc = forced.counts();
  c.stop();

  const auto expected = static_cast<std::size_t>(o.duration / o.period);
  ScenarioResult res;
  res.pass = violations == 0 && samples * 10 >= expected * 9 && st.ok;
  res.summary = fmt::format(
      "samples={} violations={} max_identities={} splits={} merges={} moves={} final_structure={}",
      samples, violations, identities, fc.splits, fc.merges, fc.moves, st.ok ? "ok" : "broken");
  res.detail = detail.empty() ? st.detail : detail;
  res.seconds = seconds_since(t0);
  return res;
}

// ---- suspended client ----

namespace {

struct Suspension {
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<bool> armed{false};
  bool parked = false;
  bool released = false;
};
Suspension g_suspension;

void park_first_insert() {
  bool expected = true;
  if (!g_suspension.armed.compare_exchange_strong(expected, false)) return;
  std::unique_lock lock(g_suspension.mu);
  g_suspension.parked = true;
  g_suspension.cv.notify_all();
  g_suspension.cv.wait(lock, [] { return g_suspension.released; });
}

}  // namespace

ScenarioResult check_suspended_client(const SuspendOptions& o) {
  const auto t0 = SteadyClock::now();
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = 2;
  co.background.backoff_max = std::chrono::microseconds(2000);
  LoopbackCluster c(co);
  auto rng = stream(o.seed, 0x66);
  const Key span = 1 << 16;
  std::vector<Key> keys = random_keys(rng, 2000, 0, span / 2);
  for (Key& k : keys) k *= 2;  // odd keys stay free for the parked insert
  load_in_chunks(c, keys, 4);

  ForcedOptions fo;
  fo.merge = false;
  fo.seed = o.seed;
  fo.pause = std::chrono::microseconds(2000);
  ForcedBackground forced(c, fo);
  forced.start();

  // Per-thread completed operations over one phase.
  auto run_phase = [&](std::size_t first, std::size_t count, std::uint64_t salt) {
    std::vector<std::uint64_t> done(count, 0);
    std::atomic<bool> stop{false};
    std::vector<std::thread> clients;
    for (std::size_t t = 0; t < count; ++t) {
      clients.emplace_back([&, t] {
        auto r = stream(o.seed ^ salt, 0x600 + first + t);
        std::uint64_t n = 0;
        while (!stop.load()) {
          BoolResp resp = c.call(static_cast<ServerId>(below(r, 2)), random_update_or_read(r, 0.5),
                                 static_cast<Key>(2 * below(r, span / 2)));
          if (resp.status == Status::ok) ++n;
        }
        done[t] = n;
      });
    }
    std::this_thread::sleep_for(o.phase);
    stop.store(true);
    for (auto& th : clients) th.join();
    return done;
  };

  const auto baseline = run_phase(0, o.clients, 0xB0);
  const double base_per_thread =
      static_cast<double>(std::accumulate(baseline.begin(), baseline.end(), std::uint64_t{0})) /
      static_cast<double>(o.clients);

  {
    std::lock_guard lock(g_suspension.mu);
    g_suspension.parked = false;
    g_suspension.released = false;
  }
  g_suspension.armed.store(true);
  hooks::insert_counted.store(&park_first_insert);
  std::thread parked([&] { c.call(0, Tag::insert, static_cast<Key>(2 * below(rng, span / 2) + 1)); });
  bool reached = false;
  {
    std::unique_lock lock(g_suspension.mu);
    reached = g_suspension.cv.wait_for(lock, std::chrono::seconds(10),
                                       [] { return g_suspension.parked; });
  }
  const auto others = run_phase(1, o.clients - 1, 0xC0);
  const std::uint64_t moves_while_parked = forced.counts().moves;
  {
    std::lock_guard lock(g_suspension.mu);
    g_suspension.released = true;
  }
  g_suspension.armed.store(false);
  g_suspension.cv.notify_all();
  parked.join();
  hooks::insert_counted.store(nullptr);
  forced.stop();
  c.quiesce();
  const Monitors m = collect_monitors(c);
  c.stop();

  const std::uint64_t min_other = others.empty() ? 0 : *std::min_element(others.begin(), others.end());
  const double other_per_thread =
      others.empty() ? 0
                     : static_cast<double>(std::accumulate(others.begin(), others.end(), std::uint64_t{0})) /
                           static_cast<double>(others.size());
  const double ratio = base_per_thread > 0 ? other_per_thread / base_per_thread : 0;
  ScenarioResult res;
  res.pass = reached && min_other > 0 && ratio >= 0.5 && ratio <= 2.0 &&
             m.maintenance_waits_from_client == 0;
  res.summary = fmt::format(
      "parked={} baseline_per_thread={:.0f} others_per_thread={:.0f} ratio={:.2f} "
      "min_other={} client_waits_on_maintenance={} moves_total={}",
      reached ? "yes" : "no", base_per_thread, other_per_thread, ratio, min_other,
      m.maintenance_waits_from_client, moves_while_parked);
  res.seconds = seconds_since(t0);
  return res;
}

// ---- scaling ----

ScalingPoint measure_scaling_point(std::size_t servers, const ScalingOptions& o) {
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = servers;
  co.key_lo = 0;
  co.key_hi = static_cast<Key>(2 * o.keys);
  co.base.workers = 1;
  co.base.max_sublists = 8192;
  LoopbackCluster c(co);
  WorkloadSpec spec;
  spec.keys = o.keys;
  spec.seed = o.seed;
  load_in_chunks(c, load_keys(spec), 8);
  const std::size_t sublists = owned_count(c);

  DeliveryPolicy p;
  p.min_delay = p.max_delay = o.service_time;
  c.network().set_policy(p);

  std::atomic<bool> stop{false};
  std::atomic<bool> measuring{false};
  std::atomic<std::uint64_t> ops{0};
  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < o.clients; ++t) {
    clients.emplace_back([&, t] {
      auto r = stream(o.seed, 0x700 + t);
      RouteCache route(c);
      while (!stop.load()) {
        BoolResp resp = route.call(random_update_or_read(r, o.read_fraction),
                                   static_cast<Key>(below(r, 2 * o.keys)));
        if (resp.status == Status::ok && measuring.load()) ops.fetch_add(1);
      }
    });
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  measuring.store(true);
  const auto t0 = SteadyClock::now();
  std::this_thread::sleep_for(o.measure);
  measuring.store(false);
  const double secs = seconds_since(t0);
  stop.store(true);
  for (auto& th : clients) th.join();
  c.network().set_policy({});
  c.stop();
  return {servers, static_cast<double>(ops.load()) / secs, sublists};
}

ScenarioResult check_scaling(const ScalingOptions& o) {
  const auto t0 = SteadyClock::now();
  const ScalingPoint one = measure_scaling_point(1, o);
  const ScalingPoint four = measure_scaling_point(4, o);
  const double ratio = one.ops_per_sec > 0 ? four.ops_per_sec / one.ops_per_sec : 0;
  ScenarioResult res;
  res.pass = ratio >= 1.5;
  res.summary = fmt::format(
      "1 server: {:.0f} ops/s ({} sublists); 4 servers: {:.0f} ops/s ({} sublists); ratio={:.2f} "
      "(need >=1.5)",
      one.ops_per_sec, one.sublists, four.ops_per_sec, four.sublists, ratio);
  res.seconds = seconds_since(t0);
  return res;
}

// ---- split/merge inverse ----

ScenarioResult check_split_merge_inverse(const SplitMergeOptions& o) {
  const auto t0 = SteadyClock::now();
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = 2;
  LoopbackCluster c(co);
  auto rng = stream(o.seed, 0x88);
  load_in_chunks(c, random_keys(rng, o.keys, 0, co.key_hi), 4);
  const std::set<Key> expected = key_set(c);

  std::size_t preserved = 0;
  std::size_t splits = 0;
  std::size_t merges = 0;
  std::string detail;
  for (std::size_t cycle = 0; cycle < o.cycles; ++cycle) {
    Server& s = c.server(below(rng, c.size()));
    const std::size_t want = 1 + below(rng, 3);
    std::size_t did = 0;
    for (std::size_t k = 0; k < want; ++k)
      if (random_split(s, rng)) ++did;
    splits += did;
    for (std::size_t k = 0; k < did;) {
      if (random_merge(s, rng)) {
        ++k;
        ++merges;
      }
    }
    c.quiesce();
    const std::set<Key> now = key_set(c);
    const StructureReport st = check_structure(c);
    if (now == expected && st.ok) {
      ++preserved;
      continue;
    }
    if (!detail.empty()) continue;
    std::vector<Key> lost;
    std::vector<Key> gained;
    std::set_difference(expected.begin(), expected.end(), now.begin(), now.end(),
                        std::back_inserter(lost));
    std::set_difference(now.begin(), now.end(), expected.begin(), expected.end(),
                        std::back_inserter(gained));
    detail = fmt::format("cycle {}: lost={} gained={} structure={}", cycle, lost.size(),
                         gained.size(), st.ok ? "ok" : st.detail);
  }
  c.stop();

  ScenarioResult res;
  res.pass = preserved == o.cycles && splits > 0;
  res.summary = fmt::format("cycles={} preserved={} splits={} merges={} keys={}", o.cycles,
                            preserved, splits, merges, expected.size());
  res.detail = detail;
  res.seconds = seconds_since(t0);
  return res;
}

// ---- balancer convergence ----

ScenarioResult check_balancer_convergence(const ConvergenceOptions& o) {
  const auto t0 = SteadyClock::now();
  GlobalSwitches switches;
  ClusterOptions co;
  co.servers = 2;
  co.partition = {RangeAssignment{0, kSubtailKey}};
  co.base.split_threshold = o.threshold;
  co.base.balancer_period = o.period;
  co.base.max_sublists = 8192;
  co.start_balancers = true;
  LoopbackCluster c(co);
  WorkloadSpec spec;
  spec.keys = o.keys;
  spec.seed = o.seed;
  const std::vector<Key> keys = load_keys(spec);

  std::atomic<std::uint64_t> failed{0};
  std::vector<std::thread> clients;
  for (std::size_t t = 0; t < o.clients; ++t) {
    clients.emplace_back([&, t] {
      for (std::size_t i = t; i < keys.size(); i += o.clients) {
        BoolResp r = c.call(0, Tag::insert, keys[i]);
        if (r.status != Status::ok || !r.value) failed.fetch_add(1);
      }
    });
  }
  for (auto& th : clients) th.join();
  for (std::size_t i = 0; i < c.size(); ++i) c.server(i).stop_balancer();
  c.quiesce();

  auto sizes = sublist_sizes(c);
  const std::int64_t max_after_load = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  const std::uint64_t load_splits = collect_monitors(c).splits;

  auto round = [&] {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      Server& s = c.server(i);
      n += static_cast<std::uint64_t>(s.submit_and_wait([&] { return s.balancer_tick(); }).splits);
    }
    c.quiesce();
    return n;
  };
  const std::uint64_t drain = round();
  std::uint64_t later = 0;
  for (int i = 0; i < o.later_rounds; ++i) later += round();
  sizes = sublist_sizes(c);
  const std::int64_t max_final = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  const Monitors m = collect_monitors(c);
  const std::size_t keys_present = key_set(c).size();
  c.stop();

  ScenarioResult res;
  res.pass = failed.load() == 0 && keys_present == o.keys && later == 0 &&
             max_after_load <= o.threshold + o.slack;
  res.summary = fmt::format(
      "keys={} failed_inserts={} sublists={} splits_during_load={} moves={} max_after_load={} "
      "(limit {}) drain_splits={} later_splits={} max_final={}",
      keys_present, failed.load(), sizes.size(), load_splits, m.moves, max_after_load,
      o.threshold + o.slack, drain, later, max_final);
  res.seconds = seconds_since(t0);
  return res;
}

// ---- registry oracle ----

ScenarioResult check_registry_oracle(const RegistryOracleOptions& o) {
  const auto t0 = SteadyClock::now();
  auto rng = stream(o.seed, 0x99);
  std::size_t lookups = 0;
  std::size_t mismatches = 0;
  std::string detail;
  const std::size_t per_snapshot = std::max<std::size_t>(1, o.lookups / std::max<std::size_t>(o.snapshots, 1));
  std::uniform_int_distribution<Key> anywhere(-1'000'000, 1'000'000);
  for (std::size_t snap = 0; snap < o.snapshots; ++snap) {
    Registry reg(Registry::kDefaultMaxSublists);
    const std::size_t n = 1 + below(rng, 200);
    std::set<Key> bounds;
    while (bounds.size() < n) bounds.insert(anywhere(rng));
    Key lo = kSubheadKey;
    std::uint64_t slot = 1;
    for (Key b : bounds) {
      reg.add_entry(std::make_shared<Entry>(lo, b, NodeRef::pack(0, slot++)));
      lo = b;
    }
    reg.add_entry(std::make_shared<Entry>(lo, kSubtailKey, NodeRef::pack(0, slot++)));
    // Churn: removals widen the left neighbour, additions truncate.
    for (std::size_t k = below(rng, 20); k > 0; --k) {
      auto slots = reg.copy_slots();
      if (below(rng, 2) == 0 && slots.size() > 1) {
        reg.remove_entry(slots[1 + below(rng, slots.size() - 1)].entry.get(), true);
      } else {
        const Key at = anywhere(rng);
        Guard g;
        Entry* holder = reg.get_by_key(at);
        if (holder && holder->key_min < at && at < holder->key_max.load())
          reg.add_entry(std::make_shared<Entry>(at, holder->key_max.load(), NodeRef::pack(0, slot++)));
      }
    }
    const auto slots = reg.copy_slots();
    std::vector<Key> probes;
    for (const auto& s : slots) {
      for (Key d : {Key{-1}, Key{0}, Key{1}}) {
        const Key k = s.key_max + d;
        if (s.key_max != kSubtailKey && is_client_key(k)) probes.push_back(k);
      }
    }
    probes.push_back(kSubheadKey + 1);
    probes.push_back(kSubtailKey - 1);
    while (probes.size() < per_snapshot) probes.push_back(anywhere(rng));
    probes.resize(per_snapshot);
    Guard g;
    for (Key k : probes) {
      Entry* want = nullptr;
      for (const auto& s : slots)
        if (s.key_min < k && k <= s.key_max) {
          want = s.entry.get();
          break;
        }
      Entry* got = reg.get_by_key(k);
      ++lookups;
      if (got != want) {
        ++mismatches;
        if (detail.empty())
          detail = fmt::format("snapshot {} key {}: registry and scan disagree", snap, k);
      }
    }
  }
  ScenarioResult res;
  res.pass = mismatches == 0 && lookups >= o.lookups;
  res.summary = fmt::format("lookups={} snapshots={} mismatches={}", lookups, o.snapshots, mismatches);
  res.detail = detail;
  res.seconds = seconds_since(t0);
  return res;
}

ScenarioResult check_rdcss_schedules(const RdcssModelOptions& o) {
  const auto t0 = SteadyClock::now();
  std::uint64_t schedules = 0;
  std::uint64_t failures = 0;
  std::size_t truncated = 0;
  std::string detail;
  const auto programs = rdcss_model_programs(o.seed, o.random_programs);
  for (const auto& p : programs) {
    ModelReport r = check_rdcss_model(p);
    schedules += r.schedules;
    failures += r.failures;
    if (!r.exhaustive) ++truncated;
    if (r.failures && detail.empty()) detail = r.detail;
  }
  ScenarioResult res;
  res.pass = failures == 0 && truncated == 0;
  res.summary = fmt::format("programs={} schedules={} failures={} truncated={}", programs.size(),
                            schedules, failures, truncated);
  res.detail = detail;
  res.seconds = seconds_since(t0);
  return res;
}

}  // namespace dili::verify
