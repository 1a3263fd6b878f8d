#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dili/transport.hpp"

namespace dili {

// host:port; an empty host means the loopback interface.
struct NetAddress {
  std::string host;
  std::uint16_t port = 0;
};
NetAddress parse_address(const std::string& addr);

// One multiplexed client connection. Responses are matched to requests by
// request id, so any number of threads may share it.
class TcpConnection {
 public:
  explicit TcpConnection(const std::string& addr);
  ~TcpConnection();

  TcpConnection(const TcpConnection&) = delete;
  TcpConnection& operator=(const TcpConnection&) = delete;

  Message request(Message msg);
  bool alive() const { return alive_.load(); }
  void close();

 private:
  void reader();
  void fail_all(const std::string& why);

  int fd_ = -1;
  std::mutex write_mu_;
  std::mutex pending_mu_;
  std::map<std::uint64_t, std::promise<Message>> pending_;
  std::atomic<std::uint64_t> next_id_{1};
  std::atomic<bool> alive_{false};
  std::thread reader_;
};

struct TcpStats {
  std::atomic<std::uint64_t> frames_in{0};
  std::atomic<std::uint64_t> frames_out{0};
  std::atomic<std::uint64_t> decode_errors{0};
  std::atomic<std::uint64_t> async_sent{0};
  std::atomic<std::uint64_t> async_delivered{0};
  std::atomic<std::uint64_t> redeliveries{0};
};

// Socket backend. Incoming frames are served by a pool that grows while
// every worker is busy, so nested requests cannot exhaust it. Async sends
// go through one sender thread, which keeps them FIFO per destination.
class TcpTransport final : public Transport {
 public:
  TcpTransport(ServerId me, std::map<ServerId, std::string> peers, std::size_t min_workers = 4);
  ~TcpTransport() override;

  // Binds listen_addr (port 0 picks one) and starts accepting.
  void serve(Handler handler, const std::string& listen_addr);
  std::uint16_t port() const { return port_; }
  void set_peer(ServerId id, const std::string& addr);

  ServerId self() const override { return me_; }
  Message request(ServerId dest, Message msg) override;
  void send_async(ServerId dest, Message msg, Callback cb) override;

  // Blocks until no async message or callback is pending.
  void quiesce();
  void shutdown();
  TcpStats& stats() { return stats_; }

 private:
  struct Inbound;
  struct AsyncItem {
    ServerId dest;
    Message msg;
    Callback cb;
    int failures = 0;
    std::chrono::steady_clock::time_point due;
  };

  std::shared_ptr<TcpConnection> connection(ServerId dest);
  void accept_loop();
  void serve_connection(int fd);
  void worker_loop();
  void sender_loop();
  void callback_loop();

  const ServerId me_;
  const std::size_t min_workers_;
  Handler handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};

  std::mutex peers_mu_;
  std::map<ServerId, std::string> peers_;
  std::map<ServerId, std::shared_ptr<TcpConnection>> conns_;

  std::thread acceptor_;
  std::mutex conn_threads_mu_;
  std::vector<std::thread> conn_threads_;
  std::vector<int> conn_fds_;

  std::mutex work_mu_;
  std::condition_variable work_cv_;
  std::deque<std::function<void()>> work_;
  std::size_t idle_ = 0;
  std::vector<std::thread> workers_;

  std::mutex async_mu_;
  std::condition_variable async_cv_;
  std::deque<AsyncItem> async_q_;
  bool async_busy_ = false;
  std::thread sender_;

  std::mutex cb_mu_;
  std::condition_variable cb_cv_;
  std::deque<std::function<void()>> cb_q_;
  bool cb_busy_ = false;
  std::thread callbacks_;

  TcpStats stats_;
};

}  // namespace dili
