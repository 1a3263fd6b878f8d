#include "dili/chaos.hpp"

#include <chrono>
#include <random>
#include <thread>

namespace dili {

namespace chaos {

std::atomic<std::uint32_t> g_rate_per_mille{0};

namespace {
std::atomic<std::uint64_t> g_seed{0};
std::atomic<std::uint64_t> g_thread_counter{0};
}  // namespace

void configure(std::uint32_t rate_per_mille, std::uint64_t seed) {
  g_seed.store(seed);
  g_rate_per_mille.store(rate_per_mille);
}

void perturb() {
  thread_local std::mt19937_64 rng(g_seed.load() ^
                                   (0x9E3779B97F4A7C15ull * ++g_thread_counter));
  std::uint32_t rate = g_rate_per_mille.load(std::memory_order_relaxed);
  std::uint64_t roll = rng() % 1000;
  if (roll >= rate) return;
  if (roll % 8 == 0)
    std::this_thread::sleep_for(std::chrono::microseconds(rng() % 50));
  else
    std::this_thread::yield();
}

}  // namespace chaos

namespace hooks {
std::atomic<Fn> insert_counted{nullptr};
std::atomic<Fn> remove_counted{nullptr};
std::atomic<Fn> move_pre_freeze{nullptr};
}  // namespace hooks

}  // namespace dili
