#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dili/cluster.hpp"

namespace dili::verify {

// Lets a test stop client traffic at a chosen instant. close() returns
// once every operation that entered has left.
class ClientGate {
 public:
  // Blocks while closed; false once shut for good.
  bool enter();
  void leave();
  void close();
  void open();
  void shut();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int inside_ = 0;
  bool closed_ = false;
  bool shut_ = false;
};

// Background operations on randomly chosen sublists, each run on the
// owning server's maintenance thread. They return false when nothing
// suitable exists or the operation declined.
bool random_split(Server& s, std::mt19937_64& rng);
bool random_merge(Server& s, std::mt19937_64& rng);
// Only sublists owned for at least `cooldown` are candidates: a sublist is
// not switched again while requests routed by its previous move may still
// be in flight.
bool random_move(Server& s, std::mt19937_64& rng,
                 std::chrono::milliseconds cooldown = std::chrono::milliseconds(20));

struct ForcedOptions {
  bool split = true;
  bool merge = true;
  bool move = true;
  std::chrono::microseconds pause{300};
  std::chrono::milliseconds move_cooldown{20};
  std::uint64_t seed = 1;
};

struct ForcedCounts {
  std::uint64_t attempts = 0;
  std::uint64_t splits = 0;
  std::uint64_t merges = 0;
  std::uint64_t moves = 0;
};

// A thread issuing random splits, merges and moves until stopped.
class ForcedBackground {
 public:
  ForcedBackground(Cluster& cluster, ForcedOptions options);
  ~ForcedBackground() { stop(); }

  void start();
  void stop();
  ForcedCounts counts() const;

 private:
  void loop();

  Cluster& cluster_;
  ForcedOptions options_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> attempts_{0};
  std::atomic<std::uint64_t> splits_{0};
  std::atomic<std::uint64_t> merges_{0};
  std::atomic<std::uint64_t> moves_{0};
  std::thread thread_;
};

// Inserts every key through owner-guessing clients. Returns how many
// inserts did not report success.
std::uint64_t preload(Cluster& cluster, const std::vector<Key>& keys, std::size_t threads);

// Runs balancer ticks on every server until a full round splits nothing.
// Returns the number of splits performed.
std::uint64_t settle_splits(Cluster& cluster, int max_rounds = 20);

// Cluster-wide sums of per-server monitors.
struct Monitors {
  std::vector<std::uint64_t> hops;  // bucket i counts operations executed at hop i
  std::uint64_t hop_violations = 0;
  std::uint64_t maintenance_waits_from_client = 0;
  std::uint64_t sign_violations = 0;
  std::uint64_t freeze_breaches = 0;
  std::uint64_t replicate_failures = 0;
  std::uint64_t tiling_violations = 0;
  std::uint64_t splits = 0;
  std::uint64_t moves = 0;
  std::uint64_t merges = 0;

  std::size_t max_hop() const;
  Monitors operator-(const Monitors& before) const;
};
Monitors collect_monitors(Cluster& cluster);

struct InvariantResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Structural checks that need quiescence plus the monitor counters in `m`.
// `hop_limit` is 2 when no sublist moved and 3 otherwise.
std::vector<InvariantResult> quiescent_checks(Cluster& cluster, const Monitors& m,
                                              std::size_t hop_limit);

}  // namespace dili::verify
