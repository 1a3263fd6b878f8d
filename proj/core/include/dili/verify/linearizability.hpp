#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dili/verify/history.hpp"

namespace dili::verify {

enum class VerdictKind { ok, violation, unchecked };

const char* verdict_name(VerdictKind k);

struct CheckOptions {
  // Partitions larger than this are reported unchecked, never ok.
  std::size_t max_ops_per_key = 1024;
  // Search budget per key, in distinct (linearized set, state) pairs.
  std::size_t max_states = std::size_t{1} << 21;
  std::vector<Key> initially_present;
};

struct Verdict {
  VerdictKind kind = VerdictKind::ok;
  std::size_t keys = 0;
  std::size_t unchecked_keys = 0;
  std::optional<Key> key;
  // A 1-minimal violating sub-history of the failing key: dropping any one
  // event makes it linearizable.
  std::vector<HistoryEvent> window;
  std::string detail;
};

// Wing-Gong search against set semantics. Operations on distinct keys
// commute, so each key's events are checked on their own.
Verdict check_linearizable(const std::vector<HistoryEvent>& history, const CheckOptions& opts = {});

// Single-key search; nullopt when the budget ran out.
std::optional<bool> linearizable_key(const std::vector<HistoryEvent>& events, bool initially_present,
                                     std::size_t max_states);

}  // namespace dili::verify
