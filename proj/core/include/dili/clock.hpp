#pragma once

#include <atomic>

#include "dili/node_ref.hpp"

namespace dili {

// Per-server logical clock. 0 is reserved for "never".
class Clock {
 public:
  Timestamp next() noexcept { return next_.fetch_add(1); }

  // Lamport bump so locally drawn stamps exceed every materialized one.
  void observe(Timestamp ts) noexcept {
    Timestamp cur = next_.load();
    while (cur <= ts && !next_.compare_exchange_weak(cur, ts + 1)) {
    }
  }

  Timestamp peek() const noexcept { return next_.load(); }

 private:
  std::atomic<Timestamp> next_{1};
};

}  // namespace dili
