#include "dili/verify/bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <thread>

namespace dili::verify {

namespace {

using SteadyClock = std::chrono::steady_clock;

double percentile(const std::vector<std::uint64_t>& sorted, double q) {
  if (sorted.empty()) return 0;
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1) + 0.5);
  return static_cast<double>(sorted[std::min(idx, sorted.size() - 1)]) / 1000.0;
}

const char* kind_name(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::split:
      return "split";
    case BackgroundKind::move:
      return "move";
    case BackgroundKind::merge:
      return "merge";
  }
  return "?";
}

std::vector<BackgroundSummary> summarize_background(Cluster& c) {
  std::map<std::string, std::vector<OpSample>> by_kind;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (const auto& s : c.server(i).background().stats().samples())
      by_kind[kind_name(s.kind)].push_back(s);
  std::vector<BackgroundSummary> out;
  for (auto& [kind, samples] : by_kind) {
    BackgroundSummary b;
    b.kind = kind;
    b.count = samples.size();
    std::vector<double> ms;
    double items = 0;
    for (const auto& s : samples) {
      ms.push_back(s.millis);
      items += static_cast<double>(s.items);
    }
    std::sort(ms.begin(), ms.end());
    b.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    b.p50_ms = ms[ms.size() / 2];
    b.max_ms = ms.back();
    b.mean_items = items / static_cast<double>(samples.size());
    out.push_back(b);
  }
  return out;
}

void latency_rows(std::ostream& out, const std::string& section, const LatencySummary& l) {
  out << section << ",count," << l.count << "\n";
  out << section << ",mean_us," << fmt::format("{:.2f}", l.mean_us) << "\n";
  out << section << ",p50_us," << fmt::format("{:.2f}", l.p50_us) << "\n";
  out << section << ",p90_us," << fmt::format("{:.2f}", l.p90_us) << "\n";
  out << section << ",p99_us," << fmt::format("{:.2f}", l.p99_us) << "\n";
  out << section << ",p999_us," << fmt::format("{:.2f}", l.p999_us) << "\n";
  out << section << ",max_us," << fmt::format("{:.2f}", l.max_us) << "\n";
}

std::string latency_line(const char* label, const LatencySummary& l) {
  return fmt::format("  {:<7} n={:<8} mean={:>8.1f}us p50={:>8.1f} p90={:>8.1f} p99={:>8.1f} "
                     "p99.9={:>8.1f} max={:>9.1f}\n",
                     label, l.count, l.mean_us, l.p50_us, l.p90_us, l.p99_us, l.p999_us, l.max_us);
}

}  // namespace

bool BenchReport::monitors_ok() const {
  return std::all_of(monitors.begin(), monitors.end(), [](const auto& m) { return m.pass; });
}

LatencySummary summarize_latencies(std::vector<std::uint64_t> nanos) {
  LatencySummary l;
  l.count = nanos.size();
  if (nanos.empty()) return l;
  std::sort(nanos.begin(), nanos.end());
  l.mean_us = std::accumulate(nanos.begin(), nanos.end(), 0.0) / static_cast<double>(nanos.size()) / 1000.0;
  l.p50_us = percentile(nanos, 0.50);
  l.p90_us = percentile(nanos, 0.90);
  l.p99_us = percentile(nanos, 0.99);
  l.p999_us = percentile(nanos, 0.999);
  l.max_us = static_cast<double>(nanos.back()) / 1000.0;
  return l;
}

BenchReport run_workload(const BenchOptions& o, Cluster& c) {
  BenchReport rep;
  rep.options = o;
  const WorkloadSpec& spec = o.spec;

  const auto load0 = SteadyClock::now();
  const std::vector<Key> keys = load_keys(spec);
  const std::size_t chunk = 4000;
  for (std::size_t i = 0; i < keys.size(); i += chunk) {
    std::vector<Key> part(keys.begin() + static_cast<std::ptrdiff_t>(i),
                          keys.begin() + static_cast<std::ptrdiff_t>(std::min(keys.size(), i + chunk)));
    rep.errors += preload(c, part, std::max<std::size_t>(spec.threads, 1));
    settle_splits(c);
  }
  rep.load_seconds = std::chrono::duration<double>(SteadyClock::now() - load0).count();

  const std::size_t threads = std::max<std::size_t>(spec.threads, 1);
  std::vector<std::vector<OpRequest>> streams;
  for (std::size_t t = 0; t < threads; ++t) streams.push_back(thread_ops(spec, t));

  const Monitors before = collect_monitors(c);
  std::vector<std::array<std::vector<std::uint64_t>, 3>> lat(threads);
  std::vector<std::uint64_t> errs(threads, 0);
  const auto run0 = SteadyClock::now();
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      RouteCache route(c);
      for (auto& v : lat[t]) v.reserve(streams[t].size());
      for (const OpRequest& op : streams[t]) {
        const auto a = SteadyClock::now();
        BoolResp r = route.call(tag_for(op.op), op.key);
        const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(SteadyClock::now() - a);
        if (r.status != Status::ok) ++errs[t];
        lat[t][static_cast<std::size_t>(op.op)].push_back(static_cast<std::uint64_t>(ns.count()));
      }
    });
  }
  for (auto& th : pool) th.join();
  rep.run_seconds = std::chrono::duration<double>(SteadyClock::now() - run0).count();
  c.quiesce();

  std::array<std::vector<std::uint64_t>, 3> per_op;
  std::vector<std::uint64_t> all;
  for (std::size_t t = 0; t < threads; ++t) {
    rep.errors += errs[t];
    for (std::size_t k = 0; k < 3; ++k) {
      per_op[k].insert(per_op[k].end(), lat[t][k].begin(), lat[t][k].end());
      all.insert(all.end(), lat[t][k].begin(), lat[t][k].end());
    }
  }
  rep.ops = all.size();
  rep.ops_per_sec = rep.run_seconds > 0 ? static_cast<double>(rep.ops) / rep.run_seconds : 0;
  rep.latency = summarize_latencies(std::move(all));
  rep.find_latency = summarize_latencies(std::move(per_op[0]));
  rep.insert_latency = summarize_latencies(std::move(per_op[1]));
  rep.remove_latency = summarize_latencies(std::move(per_op[2]));

  const Monitors all_time = collect_monitors(c);
  const Monitors delta = all_time - before;
  rep.hops = delta.hops;
  rep.background = summarize_background(c);
  for (std::size_t i = 0; i < c.size(); ++i) rep.sublists += c.server(i).owned_entries().size();
  if (o.monitors) {
    rep.monitors = quiescent_checks(c, all_time, all_time.moves > 0 ? 3 : 2);
    rep.monitors.push_back({"client_errors", rep.errors == 0, fmt::format("errors={}", rep.errors)});
  }
  return rep;
}

BenchReport run_workload(const BenchOptions& o) {
  ClusterOptions co;
  co.servers = o.servers;
  co.key_lo = 0;
  co.key_hi = static_cast<Key>(std::max<std::uint64_t>(2 * o.spec.keys, 2));
  co.base.split_threshold = o.split_threshold;
  co.base.balancer_period = o.balancer_period;
  co.base.max_sublists = std::max<std::size_t>(
      4096, static_cast<std::size_t>(4 * o.spec.keys / static_cast<std::uint64_t>(o.split_threshold)));
  co.base.arena_capacity = std::max<std::uint64_t>(co.base.arena_capacity, 4 * o.spec.keys + (1u << 16));
  co.base.seed = o.spec.seed;
  co.start_balancers = o.balancer_period.count() > 0;
  auto cluster = make_cluster(o.backend, co);
  BenchReport rep = run_workload(o, *cluster);
  cluster->stop();
  return rep;
}

void write_csv(const BenchReport& r, std::ostream& out) {
  const auto& o = r.options;
  out << "section,name,value\n";
  out << "run,backend," << o.backend << "\n";
  out << "run,servers," << o.servers << "\n";
  out << "run,keys," << o.spec.keys << "\n";
  out << "run,ops," << o.spec.ops << "\n";
  out << "run,threads," << o.spec.threads << "\n";
  out << "run,read_fraction," << o.spec.read_fraction << "\n";
  out << "run,zipf," << o.spec.zipf << "\n";
  out << "run,seed," << o.spec.seed << "\n";
  out << "run,split_threshold," << o.split_threshold << "\n";
  out << "result,load_seconds," << fmt::format("{:.3f}", r.load_seconds) << "\n";
  out << "result,run_seconds," << fmt::format("{:.3f}", r.run_seconds) << "\n";
  out << "result,ops_per_sec," << fmt::format("{:.1f}", r.ops_per_sec) << "\n";
  out << "result,completed_ops," << r.ops << "\n";
  out << "result,errors," << r.errors << "\n";
  out << "result,sublists," << r.sublists << "\n";
  latency_rows(out, "latency_all", r.latency);
  latency_rows(out, "latency_find", r.find_latency);
  latency_rows(out, "latency_insert", r.insert_latency);
  latency_rows(out, "latency_remove", r.remove_latency);
  for (std::size_t i = 1; i < r.hops.size(); ++i) out << "hops," << i << "," << r.hops[i] << "\n";
  for (const auto& b : r.background) {
    out << "background_" << b.kind << ",count," << b.count << "\n";
    out << "background_" << b.kind << ",mean_ms," << fmt::format("{:.3f}", b.mean_ms) << "\n";
    out << "background_" << b.kind << ",p50_ms," << fmt::format("{:.3f}", b.p50_ms) << "\n";
    out << "background_" << b.kind << ",max_ms," << fmt::format("{:.3f}", b.max_ms) << "\n";
    out << "background_" << b.kind << ",mean_items," << fmt::format("{:.1f}", b.mean_items) << "\n";
  }
  for (const auto& m : r.monitors) out << "monitor," << m.name << "," << (m.pass ? "pass" : "fail") << "\n";
}

std::string format_text(const BenchReport& r) {
  const auto& o = r.options;
  std::string s = fmt::format(
      "workload: backend={} servers={} keys={} ops={} threads={} read={:.0f}% zipf={} seed={}\n",
      o.backend, o.servers, o.spec.keys, o.spec.ops, o.spec.threads, 100 * o.spec.read_fraction,
      o.spec.zipf, o.spec.seed);
  s += fmt::format("load: {:.2f}s   run: {:.2f}s   throughput: {:.0f} ops/s   errors: {}   sublists: {}\n",
                   r.load_seconds, r.run_seconds, r.ops_per_sec, r.errors, r.sublists);
  s += "latency:\n";
  s += latency_line("all", r.latency);
  s += latency_line("find", r.find_latency);
  s += latency_line("insert", r.insert_latency);
  s += latency_line("remove", r.remove_latency);
  s += "hops:";
  for (std::size_t i = 1; i < r.hops.size(); ++i)
    if (r.hops[i]) s += fmt::format(" {}={}", i, r.hops[i]);
  s += "\nbackground operations:\n";
  if (r.background.empty()) s += "  none\n";
  for (const auto& b : r.background)
    s += fmt::format("  {:<6} n={:<6} mean={:.3f}ms p50={:.3f}ms max={:.3f}ms mean_items={:.1f}\n",
                     b.kind, b.count, b.mean_ms, b.p50_ms, b.max_ms, b.mean_items);
  if (!r.monitors.empty()) {
    s += "monitors:\n";
    for (const auto& m : r.monitors)
      s += fmt::format("  [{}] {} ({})\n", m.pass ? "PASS" : "FAIL", m.name, m.detail);
  }
  return s;
}

}  // namespace dili::verify
