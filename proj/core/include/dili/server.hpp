#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "dili/background.hpp"
#include "dili/chaos.hpp"
#include "dili/clock.hpp"
#include "dili/config.hpp"
#include "dili/counter.hpp"
#include "dili/message.hpp"
#include "dili/node.hpp"
#include "dili/registry.hpp"
#include "dili/sublist.hpp"
#include "dili/transport.hpp"

namespace dili {

// Round trips a client operation may take: entry server, one forward, and
// one more while a Switch is being broadcast.
inline constexpr std::uint8_t kMaxHops = 3;

struct ServerStats {
  static constexpr std::size_t kHopBuckets = 8;
  // Indexed by the hop count at the server that executed the operation.
  std::array<std::atomic<std::uint64_t>, kHopBuckets> hops{};
  std::atomic<std::uint64_t> hop_violations{0};
  std::atomic<std::uint64_t> client_ops{0};
  std::atomic<std::uint64_t> forwarded{0};
  std::atomic<std::uint64_t> maintenance_waits_from_client{0};
  std::atomic<std::uint64_t> balancer_ticks{0};
  std::atomic<std::uint64_t> balancer_splits{0};
  std::atomic<std::uint64_t> balancer_moves{0};

  std::vector<std::uint64_t> hop_histogram() const;
};

struct BalancerReport {
  int splits = 0;
  int split_failures = 0;
  int moves = 0;
  std::int64_t load = 0;
  double fair_share = 0;
};

// Single worker thread; tasks run in submission order.
class MaintenanceExecutor {
 public:
  MaintenanceExecutor();
  ~MaintenanceExecutor();

  std::future<void> submit(std::function<void()> task);
  // Pending tasks are dropped with a ShutdownInProgress result.
  void stop();

 private:
  void loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::packaged_task<void()>> tasks_;
  bool stop_ = false;
  std::thread thread_;
};

// One list server: storage, registry, client routing, background
// operations, and the balancer.
class Server {
 public:
  explicit Server(ServerConfig config, FaultInjection faults = {},
                  BackgroundOptions background = {});
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Connects the transport and builds the initial sublists. Must precede
  // any traffic.
  void attach(Transport& transport);
  Message handle(const Message& m);
  BoolResp handle_client(Tag op, const ClientOp& req);

  // Runs f on the maintenance thread and waits for it. Waiting from a
  // client-handling thread is recorded as a violation.
  template <class F>
  auto submit_and_wait(F&& f) -> decltype(f());

  BalancerReport balancer_tick();
  void start_balancer();
  // Waits for a tick in progress; the server keeps serving.
  void stop_balancer();
  // Stops the balancer and executor; background operations in progress
  // abandon at their next backoff.
  void stop();

  ServerId id() const { return config_.server_id; }
  const ServerConfig& config() const { return config_; }
  NodeStore& store() { return store_; }
  Registry& registry() { return registry_; }
  Clock& clock() { return clock_; }
  CounterPool& counters() { return counters_; }
  Sublist& sublist() { return sublist_; }
  Background& background() { return *background_; }
  ServerStats& stats() { return stats_; }
  FaultInjection& faults() { return faults_; }

  std::vector<std::shared_ptr<Entry>> owned_entries() const;
  // Unmarked client nodes between the entry's subhead and subtail.
  std::int64_t count_items(const Entry& e) const;
  std::int64_t load() const;
  std::map<ServerId, std::int64_t> peer_loads() const;

 private:
  void bootstrap();
  NodeRef usable_hint(Key key, NodeRef ref) const;
  void bump_size(Key key, std::int64_t delta);
  std::optional<std::shared_ptr<Entry>> split_midpoint(Entry& e, std::int64_t items,
                                                       BalancerReport& rep);
  void gossip();
  bool maybe_move(BalancerReport& rep);
  void balancer_loop();
  static bool in_client_path();

  ServerConfig config_;
  FaultInjection faults_;
  BackgroundOptions background_options_;
  NodeStore store_;
  Registry registry_;
  Clock clock_;
  CounterPool counters_;
  Sublist sublist_;
  Transport* transport_ = nullptr;
  std::unique_ptr<Background> background_;
  ServerStats stats_;

  mutable std::mutex loads_mu_;
  std::map<ServerId, std::int64_t> peer_loads_;

  MaintenanceExecutor executor_;
  std::mutex balancer_mu_;
  std::condition_variable balancer_cv_;
  bool balancer_stop_ = false;
  std::atomic<bool> split_wanted_{false};  // a sublist just crossed split_threshold
  std::thread balancer_;
};

template <class F>
auto Server::submit_and_wait(F&& f) -> decltype(f()) {
  if (in_client_path()) stats_.maintenance_waits_from_client.fetch_add(1);
  using R = decltype(f());
  if constexpr (std::is_void_v<R>) {
    executor_.submit(std::forward<F>(f)).get();
  } else {
    std::optional<R> out;
    executor_.submit([&] { out.emplace(f()); }).get();
    return std::move(*out);
  }
}

}  // namespace dili
