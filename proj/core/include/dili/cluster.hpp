#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "dili/config.hpp"
#include "dili/loopback.hpp"
#include "dili/server.hpp"
#include "dili/tcp.hpp"

namespace dili {

struct ClusterOptions {
  std::size_t servers = 1;
  // Initial split points are spread evenly over [key_lo, key_hi).
  Key key_lo = 0;
  Key key_hi = 1 << 20;
  // Overrides the even spread when non-empty.
  std::vector<RangeAssignment> partition;
  // Thresholds, capacities and worker counts; ids, peers and the partition
  // are filled in per server.
  ServerConfig base;
  DeliveryPolicy policy;
  FaultInjection faults;
  BackgroundOptions background;
  bool start_balancers = false;
};

// A set of in-process servers plus the client side of the wire.
class Cluster {
 public:
  virtual ~Cluster() = default;

  virtual std::size_t size() const = 0;
  virtual Server& server(std::size_t i) = 0;
  // A client request entering at `entry`.
  virtual BoolResp call(ServerId entry, Tag op, Key key) = 0;
  // Waits for in-flight asynchronous messages and their callbacks.
  virtual void quiesce() = 0;
  virtual void stop() = 0;
  virtual const char* backend() const = 0;

  ServerConfig config_for(std::size_t i) const;

 protected:
  explicit Cluster(const ClusterOptions& o);
  ClusterOptions options_;
};

class LoopbackCluster final : public Cluster {
 public:
  explicit LoopbackCluster(const ClusterOptions& o);
  ~LoopbackCluster() override;

  std::size_t size() const override { return servers_.size(); }
  Server& server(std::size_t i) override { return *servers_.at(i); }
  BoolResp call(ServerId entry, Tag op, Key key) override;
  void quiesce() override { net_.quiesce(); }
  void stop() override;
  const char* backend() const override { return "loopback"; }

  LoopbackNetwork& network() { return net_; }

 private:
  LoopbackNetwork net_;
  std::vector<std::unique_ptr<Server>> servers_;
  bool stopped_ = false;
};

class TcpCluster final : public Cluster {
 public:
  explicit TcpCluster(const ClusterOptions& o);
  ~TcpCluster() override;

  std::size_t size() const override { return servers_.size(); }
  Server& server(std::size_t i) override { return *servers_.at(i); }
  BoolResp call(ServerId entry, Tag op, Key key) override;
  void quiesce() override;
  void stop() override;
  const char* backend() const override { return "tcp"; }

 private:
  std::vector<std::unique_ptr<TcpTransport>> transports_;
  std::vector<std::unique_ptr<Server>> servers_;
  std::vector<std::unique_ptr<TcpConnection>> clients_;
  bool stopped_ = false;
};

std::unique_ptr<Cluster> make_cluster(const std::string& backend, const ClusterOptions& o);

// Client-side guess of each range's owner, refreshed from a server's
// registry whenever a reply shows the guess was stale.
class RouteCache {
 public:
  explicit RouteCache(Cluster& cluster) : cluster_(cluster) { refresh(0); }

  ServerId guess(Key key) const;
  void refresh(ServerId from);
  // Issues the request at the guessed owner and refreshes on a forward.
  BoolResp call(Tag op, Key key);

 private:
  Cluster& cluster_;
  std::vector<std::pair<Key, ServerId>> bounds_;  // (key_max, owner)
};

}  // namespace dili
