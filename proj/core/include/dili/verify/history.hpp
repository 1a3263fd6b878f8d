#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dili/node_ref.hpp"

namespace dili::verify {

enum class OpKind : std::uint8_t { find, insert, remove };

const char* op_name(OpKind k);

struct HistoryEvent {
  std::uint32_t client = 0;
  OpKind op = OpKind::find;
  Key key = 0;
  std::uint64_t invoke = 0;
  std::uint64_t response = 0;
  bool result = false;
};

std::string to_string(const HistoryEvent& e);

// Fixed-capacity append log. Slots are claimed with one fetch_add, so
// recording never blocks a client.
class HistoryRecorder {
 public:
  explicit HistoryRecorder(std::size_t capacity);

  // Global monotonic tick shared by all clients.
  std::uint64_t tick() { return clock_.fetch_add(1) + 1; }
  // False when the log is full; the event is dropped and counted.
  bool append(const HistoryEvent& e);

  std::vector<HistoryEvent> events() const;
  std::uint64_t dropped() const { return dropped_.load(); }

 private:
  std::unique_ptr<HistoryEvent[]> slots_;
  std::unique_ptr<std::atomic<bool>[]> ready_;
  const std::size_t capacity_;
  std::atomic<std::size_t> next_{0};
  std::atomic<std::uint64_t> clock_{0};
  std::atomic<std::uint64_t> dropped_{0};
};

}  // namespace dili::verify
