#pragma once

#include <chrono>
#include <cstdint>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dili/node_ref.hpp"

namespace dili {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One contiguous initial range (previous key_max, key_max] and its owner.
struct RangeAssignment {
  ServerId owner = 0;
  Key key_max = kSubtailKey;
  friend bool operator==(const RangeAssignment&, const RangeAssignment&) = default;
};

struct ServerConfig {
  ServerId server_id = 0;
  std::string listen_addr;
  std::map<ServerId, std::string> peers;  // includes this server
  // Tiles (-inf, +inf] in ascending key_max order; identical on every server.
  std::vector<RangeAssignment> partition;
  std::uint64_t arena_capacity = 1u << 22;
  std::size_t max_sublists = 4096;
  std::int64_t split_threshold = 125;
  double move_trigger_ratio = 1.10;
  std::chrono::milliseconds balancer_period{0};  // zero disables the balancer
  std::chrono::milliseconds move_cooldown{250};
  std::size_t workers = 4;
  std::uint64_t seed = 1;

  std::vector<ServerId> server_ids() const;
};

// Human-readable problems; empty when the config is usable.
std::vector<std::string> validate(const ServerConfig& c);

// key=value lines, '#' comments. Throws ConfigError on syntax errors or a
// failed validation.
ServerConfig parse_config(std::istream& in);
ServerConfig load_config(const std::string& path);

// "0@-100,1@0,2@inf": owner@key_max, ascending.
std::vector<RangeAssignment> parse_partition(const std::string& text);
std::string format_partition(const std::vector<RangeAssignment>& p);

// n ranges with split points spread evenly over [lo, hi).
std::vector<RangeAssignment> uniform_partition(std::size_t n, Key lo, Key hi);

}  // namespace dili
