#pragma once

#include <atomic>
#include <cstdint>

#include "dili/node_ref.hpp"

namespace dili {

enum RdcssStatus : std::uint8_t { kUndecided = 0, kSucceeded = 1, kFailed = 2 };

struct RdcssDescriptor {
  std::atomic<std::uint64_t>* data = nullptr;
  std::uint64_t expected_data = 0;
  const std::atomic<std::uint64_t>* control = nullptr;
  std::uint64_t expected_control = 0;
  std::uint64_t new_data = 0;
  std::atomic<std::uint8_t> status{kUndecided};
};

// Restricted double-compare single-swap over 64-bit words, parameterized on
// the memory model so the same code runs on real atomics and under the
// schedule-enumerating model checker. Descriptor words carry server id
// kDescriptorServer. Control words must never be RDCSS data words.
//
// Mem provides:
//   uint64_t load(const atomic<uint64_t>&)
//   bool cas(atomic<uint64_t>&, uint64_t& expected, uint64_t desired)
//   uint8_t decide(atomic<uint8_t>& status, uint8_t decision)  -> final status
//   RdcssDescriptor& descriptor(uint64_t word)
//   uint64_t make_descriptor(data, exp_data, control, exp_control, new_data)
//   void retire_descriptor(uint64_t word)
//   void discard_descriptor(uint64_t word)
template <class Mem>
struct Rdcss {
  using Word = std::atomic<std::uint64_t>;

  static bool is_descriptor(std::uint64_t w) {
    return NodeRef::from_raw(w).is_descriptor();
  }

  static std::uint8_t complete(Mem& m, std::uint64_t word) {
    RdcssDescriptor& d = m.descriptor(word);
    std::uint64_t c = m.load(*d.control);
    std::uint8_t st = m.decide(d.status, c == d.expected_control ? kSucceeded : kFailed);
    std::uint64_t expected = word;
    m.cas(*d.data, expected, st == kSucceeded ? d.new_data : d.expected_data);
    return st;
  }

  // Never returns a descriptor word.
  static std::uint64_t read(Mem& m, const Word& w) {
    for (;;) {
      std::uint64_t v = m.load(w);
      if (!is_descriptor(v)) return v;
      complete(m, v);
    }
  }

  // Plain CAS that helps any descriptor it collides with. On failure
  // `expected` holds the observed non-descriptor value.
  static bool cas(Mem& m, Word& w, std::uint64_t& expected, std::uint64_t desired) {
    for (;;) {
      std::uint64_t seen = expected;
      if (m.cas(w, seen, desired)) return true;
      if (is_descriptor(seen)) {
        complete(m, seen);
        continue;
      }
      expected = seen;
      return false;
    }
  }

  static bool rdcss(Mem& m, Word& data, std::uint64_t expected_data,
                    const Word& control, std::uint64_t expected_control,
                    std::uint64_t new_data) {
    std::uint64_t word =
        m.make_descriptor(&data, expected_data, &control, expected_control, new_data);
    for (;;) {
      std::uint64_t seen = expected_data;
      if (m.cas(data, seen, word)) {
        bool ok = complete(m, word) == kSucceeded;
        m.retire_descriptor(word);
        return ok;
      }
      if (is_descriptor(seen)) {
        complete(m, seen);
        continue;
      }
      m.discard_descriptor(word);
      return false;
    }
  }
};

// Production memory model: sequentially consistent atomics, descriptors
// from a process-wide pool reclaimed through the epoch domain.
struct AtomicMem {
  static std::uint64_t load(const std::atomic<std::uint64_t>& w) { return w.load(); }
  static bool cas(std::atomic<std::uint64_t>& w, std::uint64_t& expected,
                  std::uint64_t desired) {
    return w.compare_exchange_strong(expected, desired);
  }
  static std::uint8_t decide(std::atomic<std::uint8_t>& status, std::uint8_t decision) {
    std::uint8_t expected = kUndecided;
    return status.compare_exchange_strong(expected, decision) ? decision : expected;
  }
  static RdcssDescriptor& descriptor(std::uint64_t word);
  static std::uint64_t make_descriptor(std::atomic<std::uint64_t>* data,
                                       std::uint64_t expected_data,
                                       const std::atomic<std::uint64_t>* control,
                                       std::uint64_t expected_control,
                                       std::uint64_t new_data);
  static void retire_descriptor(std::uint64_t word);
  static void discard_descriptor(std::uint64_t word);
};

using LinkOps = Rdcss<AtomicMem>;

inline bool rdcss(std::atomic<std::uint64_t>& data, NodeRef expected_data,
                  const std::atomic<std::uint64_t>& control, NodeRef expected_control,
                  NodeRef new_data) {
  AtomicMem m;
  return LinkOps::rdcss(m, data, expected_data.raw(), control, expected_control.raw(),
                        new_data.raw());
}

}  // namespace dili
