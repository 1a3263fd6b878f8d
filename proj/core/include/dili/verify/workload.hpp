#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dili/message.hpp"
#include "dili/verify/history.hpp"

namespace dili::verify {

// Zipfian ranks over [0, n) using the closed-form sampler from the YCSB
// generator; rank 0 is the most popular. theta must be in (0, 1).
class Zipfian {
 public:
  Zipfian(std::uint64_t n, double theta);
  std::uint64_t operator()(std::mt19937_64& rng) const;
  std::uint64_t n() const { return n_; }

 private:
  std::uint64_t n_;
  double theta_;
  double alpha_;
  double zetan_;
  double eta_;
  double half_pow_;
};

struct WorkloadSpec {
  std::uint64_t keys = 10'000;    // load-phase size
  std::uint64_t ops = 20'000;     // op-phase total across threads
  double read_fraction = 0.9;     // the rest splits evenly into insert and remove
  double zipf = 0.99;
  std::uint64_t seed = 1;
  std::size_t threads = 4;
};

struct OpRequest {
  OpKind op;
  Key key;
};

Tag tag_for(OpKind k);

// Keys used by the load phase: `keys` distinct even numbers in shuffled
// order. Odd keys are reserved for op-phase inserts of absent keys.
std::vector<Key> load_keys(const WorkloadSpec& spec);

// The op-phase stream of one client thread. Depends only on (spec, thread).
std::vector<OpRequest> thread_ops(const WorkloadSpec& spec, std::size_t thread);

// Popular ranks are scattered over the key space rather than clustered at
// its low end.
Key key_for_rank(std::uint64_t rank, std::uint64_t key_space);

}  // namespace dili::verify
