#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "dili/verify/history.hpp"
#include "dili/verify/linearizability.hpp"

namespace dili::verify {

// Common result shape: a verdict plus the measured numbers behind it.
struct ScenarioResult {
  bool pass = false;
  std::string summary;
  std::string detail;  // first counterexample, if any
  double seconds = 0;
};

// ---- linearizability of short seeded histories ----

struct HistoryShape {
  std::size_t servers;
  std::size_t threads;
  std::size_t ops_per_thread;
  std::vector<Key> keys;
  std::vector<Key> initially_present;
};
// Derived from the seed alone.
HistoryShape history_shape(std::uint64_t seed);

struct HistoryRun {
  HistoryShape shape;
  std::vector<HistoryEvent> events;
  Verdict verdict;
  std::uint64_t client_errors = 0;
  std::uint64_t background_ops = 0;
};

// One seeded loopback run with forced background operations. `mutate`
// disables the delete-mark check.
HistoryRun run_history(std::uint64_t seed, bool mutate, std::uint32_t chaos_per_mille = 200);

struct LinearizabilityOptions {
  std::size_t histories = 1000;
  std::uint64_t first_seed = 1;
  bool with_mutation = true;
  std::uint32_t chaos_per_mille = 200;
};
// pass: every clean run linearizable, and mutated runs flagged on at least
// 95% of seeds.
ScenarioResult check_linearizability(const LinearizabilityOptions& o);

// ---- Move replay reconstruction ----

struct ReplayOptions {
  std::size_t runs = 500;
  std::uint64_t first_seed = 1;
  std::size_t preload = 48;
  std::size_t clients = 3;
};
ScenarioResult check_replay(const ReplayOptions& o);
// One run; empty string on success, otherwise the mismatch.
std::string replay_run(std::uint64_t seed, const ReplayOptions& o);

// ---- hop bound ----

struct HopOptions {
  std::size_t ops = 100'000;  // per phase
  std::size_t servers = 4;
  std::size_t clients = 8;
  std::uint64_t seed = 1;
};
ScenarioResult check_hop_bound(const HopOptions& o);

// ---- offset conservation across splits and merges ----

struct OffsetOptions {
  std::size_t operations = 200;
  std::size_t clients = 4;
  std::uint64_t seed = 1;
};
ScenarioResult check_offset_conservation(const OffsetOptions& o);

// ---- single active subhead ----

struct SubheadOptions {
  std::chrono::milliseconds duration{60'000};
  std::chrono::milliseconds period{100};
  std::size_t servers = 4;
  std::size_t clients = 4;
  std::uint64_t seed = 1;
};
ScenarioResult check_single_active_subhead(const SubheadOptions& o);

// ---- progress with a suspended client ----

struct SuspendOptions {
  std::chrono::milliseconds phase{10'000};
  std::size_t clients = 4;
  std::uint64_t seed = 1;
};
ScenarioResult check_suspended_client(const SuspendOptions& o);

// ---- throughput scaling with worker-constrained servers ----

struct ScalingOptions {
  std::size_t keys = 100'000;
  std::size_t clients = 16;
  std::chrono::microseconds service_time{1000};
  std::chrono::milliseconds measure{3000};
  double read_fraction = 0.5;
  std::uint64_t seed = 1;
};
struct ScalingPoint {
  std::size_t servers;
  double ops_per_sec;
  std::size_t sublists;
};
ScalingPoint measure_scaling_point(std::size_t servers, const ScalingOptions& o);
ScenarioResult check_scaling(const ScalingOptions& o);

// ---- split/merge inverse ----

struct SplitMergeOptions {
  std::size_t cycles = 100;
  std::size_t keys = 2000;
  std::uint64_t seed = 1;
};
ScenarioResult check_split_merge_inverse(const SplitMergeOptions& o);

// ---- balancer convergence after an insert-only load ----

struct ConvergenceOptions {
  std::size_t keys = 50'000;
  std::int64_t threshold = 125;
  std::int64_t slack = 8;
  std::size_t clients = 8;
  std::chrono::milliseconds period{10};
  int later_rounds = 5;
  std::uint64_t seed = 1;
};
ScenarioResult check_balancer_convergence(const ConvergenceOptions& o);

// ---- registry lookups and the RDCSS model ----

struct RegistryOracleOptions {
  std::size_t lookups = 10'000;
  std::size_t snapshots = 100;
  std::uint64_t seed = 1;
};
ScenarioResult check_registry_oracle(const RegistryOracleOptions& o);

struct RdcssModelOptions {
  std::size_t random_programs = 40;
  std::uint64_t seed = 1;
};
ScenarioResult check_rdcss_schedules(const RdcssModelOptions& o);

}  // namespace dili::verify
