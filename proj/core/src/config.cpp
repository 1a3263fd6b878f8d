#include "dili/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace dili {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& s, const std::string& what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("bad " + what + ": '" + s + "'");
  return v;
}

Key parse_key(const std::string& s) {
  if (s == "inf" || s == "+inf") return kSubtailKey;
  return parse_number<Key>(s, "key");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

std::vector<ServerId> ServerConfig::server_ids() const {
  std::vector<ServerId> ids;
  for (const auto& [id, addr] : peers) ids.push_back(id);
  return ids;
}

std::vector<std::string> validate(const ServerConfig& c) {
  std::vector<std::string> errs;
  if (c.peers.empty()) errs.push_back("peer table is empty");
  if (!c.peers.empty() && !c.peers.count(c.server_id))
    errs.push_back("server_id " + std::to_string(c.server_id) + " missing from peers");
  for (const auto& [id, addr] : c.peers)
    if (id > kMaxServerId) errs.push_back("peer id " + std::to_string(id) + " is reserved");
  if (c.split_threshold < 8) errs.push_back("split_threshold must be >= 8");
  if (!(c.move_trigger_ratio >= 1.0)) errs.push_back("move_trigger_ratio must be >= 1");
  if (c.workers == 0) errs.push_back("workers must be positive");
  if (c.arena_capacity < 16) errs.push_back("arena_capacity too small");
  if (c.partition.empty()) {
    errs.push_back("partition is empty");
  } else {
    for (std::size_t i = 0; i < c.partition.size(); ++i) {
      const auto& r = c.partition[i];
      if (!c.peers.count(r.owner))
        errs.push_back("partition owner " + std::to_string(r.owner) + " not in peers");
      if (i > 0 && c.partition[i - 1].key_max >= r.key_max)
        errs.push_back("partition key_max values must ascend");
      if (i + 1 < c.partition.size() && !is_client_key(r.key_max))
        errs.push_back("interior partition bound must be a client key");
    }
    if (c.partition.back().key_max != kSubtailKey)
      errs.push_back("partition must end at inf");
  }
  if (c.max_sublists < c.partition.size())
    errs.push_back("max_sublists below initial partition size");
  return errs;
}

std::vector<RangeAssignment> parse_partition(const std::string& text) {
  std::vector<RangeAssignment> out;
  for (const auto& item : split(text, ',')) {
    auto at = item.find('@');
    if (at == std::string::npos) throw ConfigError("partition item needs owner@key_max: " + item);
    out.push_back({parse_number<ServerId>(trim(item.substr(0, at)), "owner"),
                   parse_key(trim(item.substr(at + 1)))});
  }
  return out;
}

std::string format_partition(const std::vector<RangeAssignment>& p) {
  std::string s;
  for (const auto& r : p) {
    if (!s.empty()) s += ',';
    s += std::to_string(r.owner) + '@' +
         (r.key_max == kSubtailKey ? std::string("inf") : std::to_string(r.key_max));
  }
  return s;
}

std::vector<RangeAssignment> uniform_partition(std::size_t n, Key lo, Key hi) {
  std::vector<RangeAssignment> out;
  n = std::max<std::size_t>(n, 1);
  const auto span = static_cast<long double>(hi) - static_cast<long double>(lo);
  for (std::size_t i = 1; i < n; ++i)
    out.push_back({static_cast<ServerId>(i - 1),
                   lo + static_cast<Key>(span * static_cast<long double>(i) /
                                         static_cast<long double>(n))});
  out.push_back({static_cast<ServerId>(n - 1), kSubtailKey});
  return out;
}

ServerConfig parse_config(std::istream& in) {
  ServerConfig c;
  std::set<std::string> seen;
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key != "peer" && !seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);

    if (key == "server_id") {
      c.server_id = parse_number<ServerId>(val, key);
    } else if (key == "listen_addr") {
      c.listen_addr = val;
    } else if (key == "peer") {  // peer=ID=HOST:PORT, repeatable
      auto e2 = val.find('=');
      if (e2 == std::string::npos) throw ConfigError("peer needs id=address");
      auto id = parse_number<ServerId>(trim(val.substr(0, e2)), "peer id");
      if (!c.peers.emplace(id, trim(val.substr(e2 + 1))).second)
        throw ConfigError("duplicate peer id " + std::to_string(id));
    } else if (key == "peers") {  // peers=0=host:port,1=host:port
      for (const auto& item : split(val, ',')) {
        auto e2 = item.find('=');
        if (e2 == std::string::npos) throw ConfigError("peers item needs id=address");
        auto id = parse_number<ServerId>(trim(item.substr(0, e2)), "peer id");
        if (!c.peers.emplace(id, trim(item.substr(e2 + 1))).second)
          throw ConfigError("duplicate peer id " + std::to_string(id));
      }
    } else if (key == "partition" || key == "key_range") {
      c.partition = parse_partition(val);
    } else if (key == "split_threshold") {
      c.split_threshold = parse_number<std::int64_t>(val, key);
    } else if (key == "move_trigger_ratio") {
      try {
        std::size_t pos = 0;
        c.move_trigger_ratio = std::stod(val, &pos);
        if (pos != val.size()) throw ConfigError("bad move_trigger_ratio");
      } catch (const std::logic_error&) {
        throw ConfigError("bad move_trigger_ratio: '" + val + "'");
      }
    } else if (key == "balancer_period_ms") {
      c.balancer_period = std::chrono::milliseconds(parse_number<std::int64_t>(val, key));
    } else if (key == "move_cooldown_ms") {
      c.move_cooldown = std::chrono::milliseconds(parse_number<std::int64_t>(val, key));
    } else if (key == "workers") {
      c.workers = parse_number<std::size_t>(val, key);
    } else if (key == "arena_capacity") {
      c.arena_capacity = parse_number<std::uint64_t>(val, key);
    } else if (key == "max_sublists") {
      c.max_sublists = parse_number<std::size_t>(val, key);
    } else if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(val, key);
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key " + key);
    }
  }
  if (auto errs = validate(c); !errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

ServerConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in);
}

}  // namespace dili
