#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dili::verify {

// Three shared words: data words 0 and 1, control word 2. RDCSS always
// targets a data word under the control word; read and CAS may touch any.
inline constexpr int kModelWords = 3;
inline constexpr int kControlWord = 2;

enum class ModelOpKind { read, cas, rdcss };

struct ModelOp {
  ModelOpKind kind = ModelOpKind::read;
  int word = 0;
  std::uint64_t expected = 0;
  std::uint64_t expected_control = 0;  // rdcss only
  std::uint64_t desired = 0;
};

struct ModelProgram {
  std::array<std::uint64_t, kModelWords> initial{};
  std::vector<std::vector<ModelOp>> threads;
};

std::string describe(const ModelProgram& p);

struct ModelOptions {
  // Context switches away from a still-runnable thread; negative means
  // every interleaving.
  int max_preemptions = -1;
  std::uint64_t max_schedules = 20'000'000;
};

struct ModelReport {
  std::uint64_t schedules = 0;
  std::uint64_t failures = 0;
  bool exhaustive = true;  // false if max_schedules cut the search short
  std::string detail;      // first failing schedule
};

// Runs the production RDCSS algorithm under every interleaving of its
// shared-memory steps and checks each outcome (per-op results plus final
// memory) against some sequential execution of the atomic 3-word spec that
// respects program order and real-time order.
ModelReport check_rdcss_model(const ModelProgram& p, const ModelOptions& opts = {});

// Interleaving count if no step ever helps another thread's descriptor.
// Helping adds steps, so the true count is usually much larger.
double estimate_schedules(const ModelProgram& p);

// Hand-built programs for the interesting races followed by `random_count`
// seeded ones, all within 3 threads x 2 ops.
std::vector<ModelProgram> rdcss_model_programs(std::uint64_t seed, std::size_t random_count);

}  // namespace dili::verify
