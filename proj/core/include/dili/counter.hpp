#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>

namespace dili {

inline constexpr std::int64_t kFrozenBase = -(std::int64_t{1} << 62);

class CounterCell {
 public:
  CounterCell() = default;
  explicit CounterCell(std::int64_t v) : value_(v) {}

  std::int64_t increment() noexcept { return value_.fetch_add(1) + 1; }
  std::int64_t load() const noexcept { return value_.load(); }

  bool freeze(std::int64_t expected) noexcept {
    return value_.compare_exchange_strong(expected, kFrozenBase);
  }

  bool frozen() const noexcept { return value_.load() < 0; }

 private:
  alignas(64) std::atomic<std::int64_t> value_{0};
};

// A sublist's start/end cells. Nodes reference the pair, so a retarget
// swaps both cells in one store.
struct Counters {
  CounterCell start;
  CounterCell end;

  // Ends first: a concurrent op that is seen starting is also seen unfinished.
  std::int64_t in_flight() const noexcept {
    std::int64_t e = end.load();
    return start.load() - e;
  }
};

// Owns every Counters object a server ever allocates. Cells outlive the
// sublists that use them because frozen sentinels keep referencing theirs.
class CounterPool {
 public:
  Counters* make() {
    std::lock_guard lock(mu_);
    return cells_.emplace_back(std::make_unique<Counters>()).get();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return cells_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::unique_ptr<Counters>> cells_;
};

}  // namespace dili
