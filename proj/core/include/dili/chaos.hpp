#pragma once

#include <atomic>
#include <cstdint>

namespace dili {

// Test-only fault switches. Production code reads them on hot paths, so
// they are plain flags checked with relaxed loads.
struct FaultInjection {
  // Delete marks a node even when it is already marked.
  bool skip_delete_mark_check = false;
  // Insert ignores frozen counters, both during search and after counting.
  bool skip_insert_freeze_check = false;
};

namespace chaos {

// Perturbation points let a single core interleave threads at the places
// where races matter. Disabled unless a test sets a nonzero rate.
extern std::atomic<std::uint32_t> g_rate_per_mille;

void configure(std::uint32_t rate_per_mille, std::uint64_t seed);
void perturb();

inline void point() {
  if (g_rate_per_mille.load(std::memory_order_relaxed) != 0) perturb();
}

}  // namespace chaos

namespace hooks {

using Fn = void (*)();

// After insert validated its start-counter increment, before its CAS.
extern std::atomic<Fn> insert_counted;
// After remove counted itself on the target node, before the mark CAS.
extern std::atomic<Fn> remove_counted;
// On the mover, after the copy walk and before the freeze loop.
extern std::atomic<Fn> move_pre_freeze;

inline void fire(const std::atomic<Fn>& hook) {
  if (Fn f = hook.load(std::memory_order_relaxed)) f();
}

}  // namespace hooks

}  // namespace dili
