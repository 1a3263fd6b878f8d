#include "dili/cluster.hpp"

#include <algorithm>

namespace dili {

Cluster::Cluster(const ClusterOptions& o) : options_(o) {
  options_.servers = std::max<std::size_t>(o.servers, 1);
}

ServerConfig Cluster::config_for(std::size_t i) const {
  ServerConfig c = options_.base;
  c.server_id = static_cast<ServerId>(i);
  c.peers.clear();
  for (std::size_t p = 0; p < options_.servers; ++p)
    c.peers[static_cast<ServerId>(p)] = "127.0.0.1:0";
  c.partition = options_.partition.empty()
                    ? uniform_partition(options_.servers, options_.key_lo, options_.key_hi)
                    : options_.partition;
  return c;
}

// ---- loopback ----

LoopbackCluster::LoopbackCluster(const ClusterOptions& o) : Cluster(o), net_(o.policy) {
  for (std::size_t i = 0; i < options_.servers; ++i)
    servers_.push_back(std::make_unique<Server>(config_for(i), o.faults, o.background));
  for (auto& s : servers_) {
    Server* raw = s.get();
    Transport& t = net_.attach(raw->id(), [raw](const Message& m) { return raw->handle(m); },
                               raw->config().workers);
    raw->attach(t);
  }
  if (o.start_balancers)
    for (auto& s : servers_) s->start_balancer();
}

LoopbackCluster::~LoopbackCluster() { stop(); }

BoolResp LoopbackCluster::call(ServerId entry, Tag op, Key key) {
  Message r = net_.request(entry, Message{op, 0, ClientOp{key, kNullRef, 0, false}});
  if (auto* b = std::get_if<BoolResp>(&r.body)) return *b;
  return {Status::error, false, 0};
}

void LoopbackCluster::stop() {
  if (stopped_) return;
  stopped_ = true;
  for (auto& s : servers_) s->stop();
  net_.shutdown();
}

// ---- tcp ----

TcpCluster::TcpCluster(const ClusterOptions& o) : Cluster(o) {
  std::map<ServerId, std::string> addrs;
  for (std::size_t i = 0; i < options_.servers; ++i) {
    ServerConfig c = config_for(i);
    transports_.push_back(std::make_unique<TcpTransport>(c.server_id, c.peers, c.workers));
    servers_.push_back(std::make_unique<Server>(c, o.faults, o.background));
  }
  for (std::size_t i = 0; i < servers_.size(); ++i) {
    Server* raw = servers_[i].get();
    transports_[i]->serve([raw](const Message& m) { return raw->handle(m); }, "127.0.0.1:0");
    addrs[raw->id()] = "127.0.0.1:" + std::to_string(transports_[i]->port());
  }
  for (std::size_t i = 0; i < servers_.size(); ++i) {
    for (const auto& [id, a] : addrs) transports_[i]->set_peer(id, a);
    servers_[i]->attach(*transports_[i]);
    clients_.push_back(std::make_unique<TcpConnection>(addrs[servers_[i]->id()]));
  }
  if (o.start_balancers)
    for (auto& s : servers_) s->start_balancer();
}

TcpCluster::~TcpCluster() { stop(); }

BoolResp TcpCluster::call(ServerId entry, Tag op, Key key) {
  try {
    Message r = clients_.at(entry)->request(Message{op, 0, ClientOp{key, kNullRef, 0, false}});
    if (auto* b = std::get_if<BoolResp>(&r.body)) return *b;
  } catch (const TransportError&) {
  }
  return {Status::error, false, 0};
}

void TcpCluster::quiesce() {
  for (auto& t : transports_) t->quiesce();
}

void TcpCluster::stop() {
  if (stopped_) return;
  stopped_ = true;
  for (auto& s : servers_) s->stop();
  for (auto& c : clients_) c->close();
  for (auto& t : transports_) t->shutdown();
}

std::unique_ptr<Cluster> make_cluster(const std::string& backend, const ClusterOptions& o) {
  if (backend == "loopback") return std::make_unique<LoopbackCluster>(o);
  if (backend == "tcp") return std::make_unique<TcpCluster>(o);
  throw ConfigError("unknown backend " + backend);
}

// ---- routing cache ----

ServerId RouteCache::guess(Key key) const {
  auto it = std::lower_bound(bounds_.begin(), bounds_.end(), key,
                             [](const auto& b, Key k) { return b.first < k; });
  return it == bounds_.end() ? 0 : it->second;
}

void RouteCache::refresh(ServerId from) {
  auto slots = cluster_.server(from).registry().copy_slots();
  bounds_.clear();
  for (const auto& s : slots) bounds_.emplace_back(s.key_max, s.entry->head().server());
}

BoolResp RouteCache::call(Tag op, Key key) {
  const ServerId entry = guess(key);
  BoolResp r = cluster_.call(entry, op, key);
  if (r.hops > 1) refresh(entry);
  return r;
}

}  // namespace dili
