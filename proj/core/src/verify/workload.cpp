#include "dili/verify/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dili::verify {

namespace {

double zeta(std::uint64_t n, double theta) {
  double sum = 0;
  for (std::uint64_t i = 1; i <= n; ++i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
  return sum;
}

std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

}  // namespace

Zipfian::Zipfian(std::uint64_t n, double theta) : n_(std::max<std::uint64_t>(n, 1)), theta_(theta) {
  const double zeta2 = zeta(2, theta_);
  zetan_ = zeta(n_, theta_);
  alpha_ = 1.0 / (1.0 - theta_);
  eta_ = (1 - std::pow(2.0 / static_cast<double>(n_), 1 - theta_)) / (1 - zeta2 / zetan_);
  half_pow_ = 1 + std::pow(0.5, theta_);
}

std::uint64_t Zipfian::operator()(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (uz < half_pow_) return std::min<std::uint64_t>(1, n_ - 1);
  auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1, alpha_));
  return std::min(r, n_ - 1);
}

Tag tag_for(OpKind k) {
  switch (k) {
    case OpKind::find:
      return Tag::find;
    case OpKind::insert:
      return Tag::insert;
    case OpKind::remove:
      return Tag::remove;
  }
  return Tag::find;
}

Key key_for_rank(std::uint64_t rank, std::uint64_t key_space) {
  return static_cast<Key>(mix(rank) % std::max<std::uint64_t>(key_space, 1));
}

std::vector<Key> load_keys(const WorkloadSpec& spec) {
  std::vector<Key> keys(spec.keys);
  for (std::uint64_t i = 0; i < spec.keys; ++i) keys[i] = static_cast<Key>(2 * i);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(keys.begin(), keys.end(), rng);
  return keys;
}

std::vector<OpRequest> thread_ops(const WorkloadSpec& spec, std::size_t thread) {
  std::mt19937_64 rng(mix(spec.seed * 0x9e3779b97f4a7c15ull + thread + 1));
  const std::size_t threads = std::max<std::size_t>(spec.threads, 1);
  const std::uint64_t count = spec.ops / threads + (thread < spec.ops % threads ? 1 : 0);
  const std::uint64_t space = std::max<std::uint64_t>(2 * spec.keys, 2);
  Zipfian zipf(space, spec.zipf);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<OpRequest> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double c = coin(rng);
    OpKind op = c < spec.read_fraction                            ? OpKind::find
                : c < spec.read_fraction + (1 - spec.read_fraction) / 2 ? OpKind::insert
                                                                  : OpKind::remove;
    out.push_back({op, key_for_rank(zipf(rng), space)});
  }
  return out;
}

}  // namespace dili::verify
