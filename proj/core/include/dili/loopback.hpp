#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <random>
#include <thread>
#include <vector>

#include "dili/transport.hpp"

namespace dili {

// Marks the calling thread as belonging to a server (worker, maintenance,
// dispatcher). Such threads execute loopback requests inline instead of
// queueing onto the destination's workers, so nested requests cannot
// deadlock a bounded pool.
class ServerThreadScope {
 public:
  ServerThreadScope();
  ~ServerThreadScope();
  ServerThreadScope(const ServerThreadScope&) = delete;
  ServerThreadScope& operator=(const ServerThreadScope&) = delete;
  static bool active();

 private:
  bool prev_;
};

struct LoopbackStats {
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> async_sent{0};
  std::atomic<std::uint64_t> async_delivered{0};
  std::atomic<std::uint64_t> redeliveries{0};
  std::atomic<std::uint64_t> callbacks{0};
  std::atomic<std::uint64_t> failures{0};
};

// In-process cluster fabric. Requests from external threads are served by
// the destination's bounded worker pool; the per-message delay is consumed
// on the serving thread, which models a fixed service time per worker.
class LoopbackNetwork {
 public:
  explicit LoopbackNetwork(DeliveryPolicy policy = {});
  ~LoopbackNetwork();

  LoopbackNetwork(const LoopbackNetwork&) = delete;
  LoopbackNetwork& operator=(const LoopbackNetwork&) = delete;

  Transport& attach(ServerId id, Handler handler, std::size_t workers);
  // Request from an external client. Served by the destination's workers
  // unless the caller is itself a server thread.
  // The response carries the caller's request id.
  Message request(ServerId dest, Message msg) {
    const std::uint64_t id = msg.request_id;
    Message r = deliver(kMaxServerId, dest, std::move(msg));
    r.request_id = id;
    return r;
  }
  void set_down(ServerId id, bool down);
  void set_policy(DeliveryPolicy policy);
  DeliveryPolicy policy() const;

  // While held, async messages queue up; their due times are computed from
  // the hold instant so release order depends only on the seed.
  void hold();
  void release();
  // Next async message is handed to its handler twice.
  void duplicate_next_async();

  // Blocks until no async message or callback is pending.
  void quiesce();
  void shutdown();

  LoopbackStats& stats() { return stats_; }

 private:
  struct Job;
  struct Endpoint;
  class Port;
  struct Pending {
    std::chrono::steady_clock::time_point due;
    std::uint64_t seq;
    ServerId src;
    ServerId dest;
    Message msg;
    Callback cb;
    int failures;
    bool operator>(const Pending& o) const {
      return due != o.due ? due > o.due : seq > o.seq;
    }
  };

  Message deliver(ServerId src, ServerId dest, Message msg);
  void enqueue_async(ServerId src, ServerId dest, Message msg, Callback cb, int failures,
                     std::chrono::microseconds extra);
  std::chrono::microseconds draw_delay();
  void dispatcher_loop();
  void callback_loop();
  void worker_loop(Endpoint* ep);
  Endpoint* endpoint(ServerId id);

  mutable std::mutex mu_;
  DeliveryPolicy policy_;
  std::mt19937_64 rng_;
  std::map<ServerId, std::unique_ptr<Endpoint>> endpoints_;
  std::atomic<std::uint64_t> next_request_id_{1};

  std::mutex async_mu_;
  std::condition_variable async_cv_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> async_q_;
  std::map<std::pair<ServerId, ServerId>, std::chrono::steady_clock::time_point> last_due_;
  std::uint64_t seq_ = 0;
  bool held_ = false;
  std::chrono::steady_clock::time_point hold_base_;
  bool duplicate_next_ = false;
  std::size_t in_delivery_ = 0;

  std::mutex cb_mu_;
  std::condition_variable cb_cv_;
  std::deque<std::function<void()>> cb_q_;
  std::size_t cb_running_ = 0;

  std::condition_variable idle_cv_;
  std::atomic<bool> stopping_{false};
  std::thread dispatcher_;
  std::thread callbacks_;
  LoopbackStats stats_;
};

}  // namespace dili
