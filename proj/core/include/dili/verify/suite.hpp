#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "dili/chaos.hpp"
#include "dili/cluster.hpp"
#include "dili/verify/drivers.hpp"

namespace dili::verify {

struct SuiteOptions {
  std::chrono::milliseconds duration{60'000};
  std::uint64_t seed = 1;
  std::size_t servers = 4;
  std::size_t clients = 4;
  // Each round drives a fresh block of keys and is checked on its own.
  std::chrono::milliseconds round{1000};
  std::size_t keys_per_round = 512;
  std::chrono::milliseconds sample_period{100};
  // Yield/sleep probability at the race points, so one core still
  // interleaves threads there.
  std::uint32_t chaos_per_mille = 50;
  FaultInjection faults;
};

struct SuiteReport {
  std::uint64_t seed = 0;
  std::vector<InvariantResult> results;
  // Seed, options and the first counterexample, for rerunning a failure.
  std::string trace;

  bool pass() const;
};

// Mixed client traffic plus forced splits, merges and moves, with
// histories checked per round, subhead sampling throughout, and every
// quiescent invariant at the end.
SuiteReport run_invariant_suite(Cluster& cluster, const SuiteOptions& o);
// Builds a loopback cluster sized for the options.
SuiteReport run_invariant_suite(const SuiteOptions& o);

std::string format_suite(const SuiteReport& r);

}  // namespace dili::verify
