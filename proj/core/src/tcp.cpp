#include "dili/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace dili {

namespace {

constexpr std::size_t kMaxWorkers = 256;
constexpr std::chrono::microseconds kNotReadyRetry{200};

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

// nullopt on EOF or a malformed frame; the caller drops the connection.
std::optional<Message> read_frame(int fd, bool* malformed) {
  std::vector<std::uint8_t> buf(kFrameHeader);
  if (!read_all(fd, buf.data(), buf.size())) return std::nullopt;
  auto total = frame_size(buf);
  if (!total || *total == 0) {
    *malformed = true;
    return std::nullopt;
  }
  buf.resize(*total);
  if (!read_all(fd, buf.data() + kFrameHeader, *total - kFrameHeader)) return std::nullopt;
  auto m = decode(buf);
  if (!m) *malformed = true;
  return m;
}

int connect_to(const NetAddress& a) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string host = a.host.empty() ? "127.0.0.1" : a.host;
  if (::getaddrinfo(host.c_str(), std::to_string(a.port).c_str(), &hints, &res) != 0)
    throw TransportError("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + std::to_string(a.port));
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

}  // namespace

NetAddress parse_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw TransportError("address needs host:port: " + addr);
  NetAddress a;
  a.host = addr.substr(0, colon);
  const std::string port = addr.substr(colon + 1);
  auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), a.port);
  if (ec != std::errc{} || p != port.data() + port.size())
    throw TransportError("bad port in " + addr);
  return a;
}

// ---- TcpConnection ----

TcpConnection::TcpConnection(const std::string& addr) {
  fd_ = connect_to(parse_address(addr));
  alive_.store(true);
  reader_ = std::thread([this] { reader(); });
}

TcpConnection::~TcpConnection() {
  close();
  if (reader_.joinable()) reader_.join();
}

void TcpConnection::close() {
  if (alive_.exchange(false)) ::shutdown(fd_, SHUT_RDWR);
}

void TcpConnection::fail_all(const std::string& why) {
  std::lock_guard lock(pending_mu_);
  for (auto& [id, p] : pending_) p.set_exception(std::make_exception_ptr(TransportError(why)));
  pending_.clear();
}

void TcpConnection::reader() {
  for (;;) {
    bool malformed = false;
    auto m = read_frame(fd_, &malformed);
    if (!m) break;
    std::lock_guard lock(pending_mu_);
    auto it = pending_.find(m->request_id);
    if (it == pending_.end()) continue;
    it->second.set_value(std::move(*m));
    pending_.erase(it);
  }
  alive_.store(false);
  fail_all("connection closed");
  ::close(fd_);
}

Message TcpConnection::request(Message msg) {
  if (!alive_.load()) throw TransportError("connection closed");
  msg.request_id = next_id_.fetch_add(1);
  std::future<Message> fut;
  {
    std::lock_guard lock(pending_mu_);
    fut = pending_[msg.request_id].get_future();
  }
  const auto bytes = encode(msg);
  bool ok;
  {
    std::lock_guard lock(write_mu_);
    ok = write_all(fd_, bytes.data(), bytes.size());
  }
  if (!ok) {
    close();
    std::lock_guard lock(pending_mu_);
    pending_.erase(msg.request_id);
    throw TransportError("write failed");
  }
  return fut.get();
}

// ---- TcpTransport ----

TcpTransport::TcpTransport(ServerId me, std::map<ServerId, std::string> peers,
                           std::size_t min_workers)
    : me_(me), min_workers_(std::max<std::size_t>(min_workers, 1)), peers_(std::move(peers)) {
  sender_ = std::thread([this] { sender_loop(); });
  callbacks_ = std::thread([this] { callback_loop(); });
}

TcpTransport::~TcpTransport() { shutdown(); }

void TcpTransport::set_peer(ServerId id, const std::string& addr) {
  std::lock_guard lock(peers_mu_);
  peers_[id] = addr;
  conns_.erase(id);
}

void TcpTransport::serve(Handler handler, const std::string& listen_addr) {
  handler_ = std::move(handler);
  NetAddress a = parse_address(listen_addr);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(a.port);
  const std::string host = a.host.empty() ? "127.0.0.1" : a.host;
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1)
    throw TransportError("listen address must be numeric IPv4: " + host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0)
    throw TransportError("bind failed: " + std::string(std::strerror(errno)));
  if (::listen(listen_fd_, 128) != 0) throw TransportError("listen failed");
  socklen_t len = sizeof sa;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  port_ = ntohs(sa.sin_port);
  {
    std::lock_guard lock(work_mu_);
    for (std::size_t i = 0; i < min_workers_; ++i) workers_.emplace_back([this] { worker_loop(); });
  }
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpTransport::accept_loop() {
  for (;;) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    if (stopping_.load()) {
      ::close(fd);
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conn_threads_mu_);
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpTransport::serve_connection(int fd) {
  auto write_mu = std::make_shared<std::mutex>();
  for (;;) {
    bool malformed = false;
    auto m = read_frame(fd, &malformed);
    if (!m) {
      if (malformed) {
        stats_.decode_errors.fetch_add(1);
        spdlog::warn("event=decode_error server={} action=drop_connection", me_);
      }
      break;
    }
    stats_.frames_in.fetch_add(1);
    auto job = [this, fd, write_mu, req = std::move(*m)] {
      Message r = handler_(req);
      r.request_id = req.request_id;
      const auto bytes = encode(r);
      std::lock_guard lock(*write_mu);
      if (write_all(fd, bytes.data(), bytes.size())) stats_.frames_out.fetch_add(1);
    };
    {
      std::lock_guard lock(work_mu_);
      work_.push_back(std::move(job));
      if (idle_ == 0 && workers_.size() < kMaxWorkers)
        workers_.emplace_back([this] { worker_loop(); });
    }
    work_cv_.notify_one();
  }
  ::shutdown(fd, SHUT_RDWR);
}

void TcpTransport::worker_loop() {
  std::unique_lock lock(work_mu_);
  for (;;) {
    ++idle_;
    work_cv_.wait(lock, [this] { return stopping_.load() || !work_.empty(); });
    --idle_;
    if (work_.empty()) return;
    auto job = std::move(work_.front());
    work_.pop_front();
    lock.unlock();
    job();
    lock.lock();
  }
}

std::shared_ptr<TcpConnection> TcpTransport::connection(ServerId dest) {
  std::lock_guard lock(peers_mu_);
  auto it = conns_.find(dest);
  if (it != conns_.end() && it->second->alive()) return it->second;
  auto addr = peers_.find(dest);
  if (addr == peers_.end()) throw TransportError("unknown peer " + std::to_string(dest));
  auto c = std::make_shared<TcpConnection>(addr->second);
  conns_[dest] = c;
  return c;
}

Message TcpTransport::request(ServerId dest, Message msg) {
  if (stopping_.load()) throw TransportError("shutting down");
  return connection(dest)->request(std::move(msg));
}

void TcpTransport::send_async(ServerId dest, Message msg, Callback cb) {
  stats_.async_sent.fetch_add(1);
  {
    std::lock_guard lock(async_mu_);
    async_q_.push_back({dest, std::move(msg), std::move(cb), 0, std::chrono::steady_clock::now()});
  }
  async_cv_.notify_one();
}

void TcpTransport::sender_loop() {
  std::unique_lock lock(async_mu_);
  for (;;) {
    async_cv_.wait(lock, [this] { return stopping_.load() || !async_q_.empty(); });
    if (stopping_.load()) return;
    AsyncItem item = std::move(async_q_.front());
    async_q_.pop_front();
    async_busy_ = true;
    lock.unlock();

    if (auto wait = item.due - std::chrono::steady_clock::now(); wait.count() > 0)
      std::this_thread::sleep_for(wait);
    std::optional<Message> resp;
    try {
      resp = request(item.dest, item.msg);
    } catch (const TransportError&) {
    }
    bool requeue = false;
    if (resp && response_not_ready(*resp)) {
      stats_.redeliveries.fetch_add(1);
      item.due = std::chrono::steady_clock::now() + kNotReadyRetry;
      requeue = true;
    } else if (!resp && ++item.failures < kAsyncAttempts) {
      item.due = std::chrono::steady_clock::now() +
                 std::chrono::milliseconds(1) * (1 << (item.failures - 1));
      requeue = true;
    }
    if (!requeue) {
      if (resp) stats_.async_delivered.fetch_add(1);
      {
        std::lock_guard cl(cb_mu_);
        cb_q_.push_back([cb = std::move(item.cb), r = std::move(resp)] { cb(r); });
      }
      cb_cv_.notify_one();
    }

    lock.lock();
    if (requeue) async_q_.push_back(std::move(item));
    async_busy_ = false;
  }
}

void TcpTransport::callback_loop() {
  std::unique_lock lock(cb_mu_);
  for (;;) {
    cb_cv_.wait(lock, [this] { return stopping_.load() || !cb_q_.empty(); });
    if (cb_q_.empty()) return;
    auto fn = std::move(cb_q_.front());
    cb_q_.pop_front();
    cb_busy_ = true;
    lock.unlock();
    fn();
    lock.lock();
    cb_busy_ = false;
  }
}

void TcpTransport::quiesce() {
  for (;;) {
    bool idle;
    {
      std::lock_guard a(async_mu_);
      idle = async_q_.empty() && !async_busy_;
    }
    if (idle) {
      std::lock_guard c(cb_mu_);
      idle = cb_q_.empty() && !cb_busy_;
    }
    if (idle) {
      std::lock_guard a(async_mu_);
      if (async_q_.empty() && !async_busy_) return;
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
}

void TcpTransport::shutdown() {
  if (stopping_.exchange(true)) return;
  async_cv_.notify_all();
  cb_cv_.notify_all();
  if (sender_.joinable()) sender_.join();
  if (callbacks_.joinable()) callbacks_.join();
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
  }
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(conn_threads_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  {
    std::lock_guard lock(peers_mu_);
    for (auto& [id, c] : conns_) c->close();
    conns_.clear();
  }
  for (auto& t : conn_threads_) t.join();
  work_cv_.notify_all();
  for (auto& t : workers_) t.join();
  for (int fd : conn_fds_) ::close(fd);
  conn_fds_.clear();
}

}  // namespace dili
