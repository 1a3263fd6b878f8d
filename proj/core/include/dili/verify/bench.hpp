#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dili/cluster.hpp"
#include "dili/verify/drivers.hpp"
#include "dili/verify/workload.hpp"

namespace dili::verify {

struct BenchOptions {
  WorkloadSpec spec;
  std::string backend = "loopback";
  std::size_t servers = 1;
  std::int64_t split_threshold = 125;
  std::chrono::milliseconds balancer_period{50};
  bool monitors = true;
};

struct LatencySummary {
  std::uint64_t count = 0;
  double mean_us = 0;
  double p50_us = 0;
  double p90_us = 0;
  double p99_us = 0;
  double p999_us = 0;
  double max_us = 0;
};

struct BackgroundSummary {
  std::string kind;
  std::uint64_t count = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double max_ms = 0;
  double mean_items = 0;
};

struct BenchReport {
  BenchOptions options;
  double load_seconds = 0;
  double run_seconds = 0;
  double ops_per_sec = 0;
  std::uint64_t ops = 0;
  std::uint64_t errors = 0;
  LatencySummary latency;
  LatencySummary find_latency;
  LatencySummary insert_latency;
  LatencySummary remove_latency;
  std::vector<std::uint64_t> hops;  // op phase only
  std::vector<BackgroundSummary> background;
  std::size_t sublists = 0;
  std::vector<InvariantResult> monitors;

  bool monitors_ok() const;
};

LatencySummary summarize_latencies(std::vector<std::uint64_t> nanos);

// Load phase, then the op phase with one thread per WorkloadSpec thread,
// each using an owner-guessing client. With monitors on, the cluster is
// quiesced afterwards and every structural invariant is checked.
BenchReport run_workload(const BenchOptions& o, Cluster& cluster);
// Builds the cluster described by `o`, runs, and tears it down.
BenchReport run_workload(const BenchOptions& o);

// section,name,value rows.
void write_csv(const BenchReport& r, std::ostream& out);
std::string format_text(const BenchReport& r);

}  // namespace dili::verify
