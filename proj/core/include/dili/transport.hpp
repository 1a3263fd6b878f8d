#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>

#include "dili/message.hpp"

namespace dili {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeliveryPolicy {
  std::chrono::microseconds min_delay{0};
  std::chrono::microseconds max_delay{0};
  bool reorder = false;
  std::uint64_t seed = 1;
};

// Receive side. Must be re-entrant. A response whose status is not_ready
// asks the sender to redeliver later.
using Handler = std::function<Message(const Message&)>;
// nullopt: delivery failed after retries.
using Callback = std::function<void(std::optional<Message>)>;

inline constexpr int kAsyncAttempts = 5;

bool response_not_ready(const Message& m);

class Transport {
 public:
  virtual ~Transport() = default;
  virtual ServerId self() const = 0;
  // Blocks the caller until the matching response arrives.
  virtual Message request(ServerId dest, Message msg) = 0;
  // Returns immediately; cb runs on a callback executor thread.
  virtual void send_async(ServerId dest, Message msg, Callback cb) = 0;
};

}  // namespace dili
