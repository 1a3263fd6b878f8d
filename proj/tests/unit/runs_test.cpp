#include <gtest/gtest.h>

#include <sstream>

#include "dili/verify/bench.hpp"
#include "dili/verify/scenarios.hpp"
#include "dili/verify/suite.hpp"

namespace dili::verify {
namespace {

const InvariantResult* find_result(const std::vector<InvariantResult>& rs, const std::string& name) {
  for (const auto& r : rs)
    if (r.name == name) return &r;
  return nullptr;
}

TEST(Bench, SmokeRunOnOneLoopbackServer) {
  BenchOptions o;
  o.spec.keys = 10'000;
  o.spec.ops = 20'000;
  const BenchReport r = run_workload(o);
  EXPECT_TRUE(r.monitors_ok()) << format_text(r);
  EXPECT_EQ(r.ops, 20'000u);
  EXPECT_EQ(r.errors, 0u);
  EXPECT_GT(r.ops_per_sec, 0);
  EXPECT_GT(r.sublists, 1u) << "10^4 keys must have been split at threshold 125";

  std::ostringstream csv;
  write_csv(r, csv);
  EXPECT_NE(csv.str().find("ops_per_sec"), std::string::npos);
}

TEST(Bench, TcpBackendWithTwoServers) {
  BenchOptions o;
  o.backend = "tcp";
  o.servers = 2;
  o.spec.keys = 2'000;
  o.spec.ops = 4'000;
  const BenchReport r = run_workload(o);
  EXPECT_TRUE(r.monitors_ok()) << format_text(r);
  EXPECT_EQ(r.errors, 0u);
}

TEST(Suite, ShortLoopbackRunPasses) {
  SuiteOptions o;
  o.duration = std::chrono::milliseconds(3000);
  o.round = std::chrono::milliseconds(500);
  const SuiteReport rep = run_invariant_suite(o);
  EXPECT_TRUE(rep.pass()) << format_suite(rep);
  EXPECT_NE(find_result(rep.results, "linearizability"), nullptr);
}

// With the freeze check removed from insert, inserts land on frozen pairs
// and the sign property must report it.
TEST(Suite, MissingInsertFreezeCheckBreaksSignProperty) {
  SuiteOptions o;
  o.duration = std::chrono::milliseconds(4000);
  o.round = std::chrono::milliseconds(500);
  o.faults.skip_insert_freeze_check = true;
  const SuiteReport rep = run_invariant_suite(o);
  const InvariantResult* sign = find_result(rep.results, "sign_property");
  ASSERT_NE(sign, nullptr);
  EXPECT_FALSE(sign->pass) << format_suite(rep);
  EXPECT_FALSE(rep.pass());
}

TEST(Scenarios, SplitMergeFuzzPreservesKeysAndOffsets) {
  SplitMergeOptions o;
  o.cycles = 10;
  o.seed = 3;
  const ScenarioResult r = check_split_merge_inverse(o);
  EXPECT_TRUE(r.pass) << r.summary << "\n" << r.detail;
  OffsetOptions off;
  off.operations = 20;
  const ScenarioResult c = check_offset_conservation(off);
  EXPECT_TRUE(c.pass) << c.summary << "\n" << c.detail;
}

TEST(Scenarios, MutantHistoryIsFlagged) {
  // The checker must reject at least one of a handful of mutant histories.
  int flagged = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    flagged += run_history(seed, true).verdict.kind == VerdictKind::violation;
  EXPECT_GT(flagged, 5);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const HistoryRun clean = run_history(seed, false);
    EXPECT_EQ(clean.verdict.kind, VerdictKind::ok) << clean.verdict.detail;
  }
}

}  // namespace
}  // namespace dili::verify
