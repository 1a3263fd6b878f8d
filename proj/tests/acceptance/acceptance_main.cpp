// Acceptance suite. With no arguments every criterion runs; otherwise only
// the named ones (e.g. `dili_acceptance C1 C7`). One result line per
// criterion; the exit status is nonzero if any selected criterion fails.
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "dili/verify/scenarios.hpp"

namespace {

namespace v = dili::verify;

// Tolerances and sizes. Each scenario applies its own pass rule; the
// numbers that define that rule are fixed here or in the scenario defaults
// and are printed with the verdict.
constexpr std::size_t kHistories = 1000;          // clean runs, also the mutant seeds
constexpr double kMutantDetection = 0.95;         // enforced inside check_linearizability
constexpr double kLinearizabilityBudgetS = 600;   // 10 minutes
constexpr std::size_t kReplayRuns = 500;
constexpr double kReplayBudgetS = 300;            // 5 minutes
constexpr std::size_t kRoutedOps = 100'000;       // per phase
constexpr std::size_t kSplitMergeOps = 200;
constexpr std::chrono::milliseconds kSubheadRun{60'000};
constexpr std::chrono::milliseconds kSubheadPeriod{100};
constexpr std::chrono::milliseconds kSuspendPhase{10'000};
constexpr std::size_t kScalingKeys = 100'000;
constexpr double kScalingReadFraction = 0.5;
constexpr std::size_t kInverseCycles = 100;
constexpr std::size_t kConvergenceKeys = 50'000;
constexpr std::int64_t kThreshold = 125;
constexpr std::int64_t kSlack = 8;
constexpr std::size_t kRegistryLookups = 10'000;

struct Criterion {
  std::string id;
  std::string name;
  std::function<v::ScenarioResult()> run;
  double budget_s = 0;  // zero: no wall-clock limit beyond ctest's
};

std::vector<Criterion> criteria() {
  return {
      {"C1", "linearizability under forced background operations",
       [] {
         v::LinearizabilityOptions o;
         o.histories = kHistories;
         o.with_mutation = true;
         static_assert(kMutantDetection == 0.95);
         return v::check_linearizability(o);
       },
       kLinearizabilityBudgetS},
      {"C2", "move replay reconstructs the source sublist",
       [] {
         v::ReplayOptions o;
         o.runs = kReplayRuns;
         return v::check_replay(o);
       },
       kReplayBudgetS},
      {"C3", "hop bound",
       [] {
         v::HopOptions o;
         o.ops = kRoutedOps;
         return v::check_hop_bound(o);
       }},
      {"C4", "offset conservation across splits and merges",
       [] {
         v::OffsetOptions o;
         o.operations = kSplitMergeOps;
         return v::check_offset_conservation(o);
       }},
      {"C5", "single active subhead per sublist",
       [] {
         v::SubheadOptions o;
         o.duration = kSubheadRun;
         o.period = kSubheadPeriod;
         return v::check_single_active_subhead(o);
       }},
      {"C6", "progress with a suspended client",
       [] {
         v::SuspendOptions o;
         o.phase = kSuspendPhase;
         return v::check_suspended_client(o);
       }},
      {"C7", "throughput scaling 1 to 4 servers",
       [] {
         v::ScalingOptions o;
         o.keys = kScalingKeys;
         o.read_fraction = kScalingReadFraction;
         return v::check_scaling(o);
       }},
      {"C8", "split then merge preserves the key set",
       [] {
         v::SplitMergeOptions o;
         o.cycles = kInverseCycles;
         return v::check_split_merge_inverse(o);
       }},
      {"C9", "balancer convergence after an insert-only load",
       [] {
         v::ConvergenceOptions o;
         o.keys = kConvergenceKeys;
         o.threshold = kThreshold;
         o.slack = kSlack;
         return v::check_balancer_convergence(o);
       }},
      {"C10", "registry lookups and the RDCSS model",
       [] {
         v::RegistryOracleOptions r;
         r.lookups = kRegistryLookups;
         v::ScenarioResult a = v::check_registry_oracle(r);
         v::ScenarioResult b = v::check_rdcss_schedules({});
         v::ScenarioResult out;
         out.pass = a.pass && b.pass;
         out.summary = a.summary + "; " + b.summary;
         out.detail = a.detail.empty() ? b.detail : a.detail;
         out.seconds = a.seconds + b.seconds;
         return out;
       }},
  };
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  std::set<std::string> selected(argv + 1, argv + argc);
  std::size_t ran = 0;
  std::size_t failed = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    ++ran;
    v::ScenarioResult r = c.run();
    const bool in_budget = c.budget_s == 0 || r.seconds <= c.budget_s;
    const bool pass = r.pass && in_budget;
    if (!pass) ++failed;
    std::string line = fmt::format("[{}] {} {}: {} ({:.1f}s", pass ? "PASS" : "FAIL", c.id, c.name,
                                   r.summary, r.seconds);
    if (c.budget_s > 0) line += fmt::format(", budget {:.0f}s", c.budget_s);
    line += ")";
    std::cout << line << std::endl;
    if (!r.pass && !r.detail.empty()) std::cout << "    " << r.detail << std::endl;
  }
  if (ran == 0) {
    std::cerr << "no criterion matched; ids are C1..C10\n";
    return 2;
  }
  std::cout << fmt::format("{}/{} criteria passed", ran - failed, ran) << std::endl;
  return failed == 0 ? 0 : 1;
}
