#include "dili/verify/suite.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <random>
#include <thread>

#include "dili/chaos.hpp"
#include "dili/verify/history.hpp"
#include "dili/verify/inspect.hpp"
#include "dili/verify/linearizability.hpp"
#include "dili/verify/workload.hpp"

namespace dili::verify {

namespace {

std::size_t round_count(const SuiteOptions& o) {
  const auto r = std::max<std::chrono::milliseconds::rep>(o.round.count(), 1);
  return static_cast<std::size_t>(std::max<std::chrono::milliseconds::rep>(o.duration.count() / r, 1));
}

}  // namespace

bool SuiteReport::pass() const {
  return !results.empty() &&
         std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

SuiteReport run_invariant_suite(Cluster& c, const SuiteOptions& o) {
  SuiteReport rep;
  rep.seed = o.seed;
  rep.trace = fmt::format("seed={} servers={} clients={} duration_ms={} round_ms={} chaos={} faults={}{}",
                          o.seed, c.size(), o.clients, o.duration.count(), o.round.count(),
                          o.chaos_per_mille,
                          o.faults.skip_delete_mark_check ? "skip_delete_mark_check " : "",
                          o.faults.skip_insert_freeze_check ? "skip_insert_freeze_check" : "");
  const std::size_t rounds = round_count(o);
  const auto stride = static_cast<Key>(rounds);

  ForcedOptions fo;
  fo.seed = o.seed;
  fo.pause = std::chrono::microseconds(1000);
  chaos::configure(o.chaos_per_mille, o.seed);
  ForcedBackground forced(c, fo);
  forced.start();

  std::atomic<bool> sampling{true};
  std::size_t samples = 0;
  std::size_t subhead_violations = 0;
  std::string subhead_detail;
  std::thread sampler([&] {
    for (auto next = std::chrono::steady_clock::now(); sampling.load(); next += o.sample_period) {
      std::this_thread::sleep_until(next);
      SubheadSample s = sample_active_subheads(c);
      ++samples;
      subhead_violations += s.violations;
      if (s.violations && subhead_detail.empty()) subhead_detail = s.detail;
    }
  });

  std::size_t rounds_ok = 0;
  std::size_t unchecked_keys = 0;
  std::uint64_t events = 0;
  std::uint64_t client_errors = 0;
  std::string lin_detail;
  for (std::size_t r = 0; r < rounds; ++r) {
    HistoryRecorder rec(1u << 19);
    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> errors{0};
    std::vector<std::thread> clients;
    for (std::size_t t = 0; t < o.clients; ++t) {
      clients.emplace_back([&, t] {
        std::mt19937_64 rng(o.seed * 1'000'003 + r * 131 + t);
        std::uniform_int_distribution<std::size_t> pick_key(0, o.keys_per_round - 1);
        std::uniform_int_distribution<int> pick_op(0, 2);
        std::uniform_int_distribution<std::size_t> pick_server(0, c.size() - 1);
        while (!stop.load()) {
          HistoryEvent e;
          e.client = static_cast<std::uint32_t>(t);
          e.op = static_cast<OpKind>(pick_op(rng));
          e.key = static_cast<Key>(pick_key(rng)) * stride + static_cast<Key>(r);
          e.invoke = rec.tick();
          BoolResp resp = c.call(static_cast<ServerId>(pick_server(rng)), tag_for(e.op), e.key);
          e.response = rec.tick();
          e.result = resp.value;
          if (resp.status != Status::ok) {
            errors.fetch_add(1);
            continue;
          }
          if (!rec.append(e)) return;
        }
      });
    }
    std::this_thread::sleep_for(o.round);
    stop.store(true);
    for (auto& th : clients) th.join();
    client_errors += errors.load();

    const auto history = rec.events();
    events += history.size();
    const Verdict v = check_linearizable(history);
    unchecked_keys += v.unchecked_keys;
    if (v.kind == VerdictKind::ok && rec.dropped() == 0) {
      ++rounds_ok;
    } else if (lin_detail.empty()) {
      lin_detail = fmt::format("round {}: {} dropped={} {}", r, verdict_name(v.kind), rec.dropped(),
                               v.detail);
      for (const auto& e : v.window) lin_detail += "\n  " + to_string(e);
    }
  }

  forced.stop();
  chaos::configure(0, 0);
  sampling.store(false);
  sampler.join();
  c.quiesce();
  const ForcedCounts fc = forced.counts();
  const Monitors m = collect_monitors(c);

  rep.results.push_back({"linearizability", rounds_ok == rounds,
                         rounds_ok == rounds
                             ? fmt::format("rounds={} events={}", rounds, events)
                             : fmt::format("rounds_ok={}/{} unchecked_keys={} {}", rounds_ok,
                                           rounds, unchecked_keys, lin_detail)});
  rep.results.push_back({"single_active_subhead", subhead_violations == 0 && samples > 0,
                         subhead_violations ? subhead_detail
                                            : fmt::format("samples={}", samples)});
  for (auto& r : quiescent_checks(c, m, 3)) rep.results.push_back(std::move(r));
  rep.results.push_back({"client_errors", client_errors == 0, fmt::format("errors={}", client_errors)});
  const bool exercised =
      fc.splits > 0 && fc.merges > 0 && (c.size() < 2 || fc.moves > 0);
  rep.results.push_back({"background_exercised", exercised,
                         fmt::format("splits={} merges={} moves={}", fc.splits, fc.merges, fc.moves)});

  for (const auto& r : rep.results)
    if (!r.pass) {
      rep.trace += fmt::format("\nfirst failure: {}: {}", r.name, r.detail);
      break;
    }
  return rep;
}

SuiteReport run_invariant_suite(const SuiteOptions& o) {
  ClusterOptions co;
  co.servers = o.servers;
  co.key_lo = 0;
  co.key_hi = static_cast<Key>(o.keys_per_round * round_count(o));
  co.faults = o.faults;
  co.background.backoff_max = std::chrono::microseconds(1000);
  LoopbackCluster c(co);
  SuiteReport rep = run_invariant_suite(c, o);
  c.stop();
  return rep;
}

std::string format_suite(const SuiteReport& r) {
  std::string s;
  for (const auto& x : r.results)
    s += fmt::format("[{}] {}: {}\n", x.pass ? "PASS" : "FAIL", x.name, x.detail);
  s += fmt::format("suite {} ({})\n", r.pass() ? "passed" : "FAILED", r.trace);
  return s;
}

}  // namespace dili::verify
