#include "dili/verify/history.hpp"

#include <algorithm>

namespace dili::verify {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::find:
      return "find";
    case OpKind::insert:
      return "insert";
    case OpKind::remove:
      return "remove";
  }
  return "?";
}

std::string to_string(const HistoryEvent& e) {
  return "c" + std::to_string(e.client) + " " + op_name(e.op) + "(" + std::to_string(e.key) +
         ") -> " + (e.result ? "true" : "false") + " [" + std::to_string(e.invoke) + "," +
         std::to_string(e.response) + "]";
}

HistoryRecorder::HistoryRecorder(std::size_t capacity)
    : slots_(new HistoryEvent[capacity]),
      ready_(new std::atomic<bool>[capacity]),
      capacity_(capacity) {
  for (std::size_t i = 0; i < capacity; ++i) ready_[i].store(false);
}

bool HistoryRecorder::append(const HistoryEvent& e) {
  const std::size_t i = next_.fetch_add(1);
  if (i >= capacity_) {
    dropped_.fetch_add(1);
    return false;
  }
  slots_[i] = e;
  ready_[i].store(true, std::memory_order_release);
  return true;
}

std::vector<HistoryEvent> HistoryRecorder::events() const {
  std::vector<HistoryEvent> out;
  const std::size_t n = std::min(next_.load(), capacity_);
  for (std::size_t i = 0; i < n; ++i)
    if (ready_[i].load(std::memory_order_acquire)) out.push_back(slots_[i]);
  return out;
}

}  // namespace dili::verify
