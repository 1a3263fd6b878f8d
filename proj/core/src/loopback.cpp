#include "dili/loopback.hpp"

#include <future>

namespace dili {

namespace {
thread_local bool tl_server_thread = false;

constexpr std::chrono::microseconds kNotReadyRetry{200};
}  // namespace

bool response_not_ready(const Message& m) {
  return std::visit(
      [](const auto& p) {
        if constexpr (requires { p.status; })
          return p.status == Status::not_ready;
        else
          return false;
      },
      m.body);
}

ServerThreadScope::ServerThreadScope() : prev_(tl_server_thread) { tl_server_thread = true; }
ServerThreadScope::~ServerThreadScope() { tl_server_thread = prev_; }
bool ServerThreadScope::active() { return tl_server_thread; }

struct LoopbackNetwork::Job {
  Message msg;
  std::promise<Message> reply;
  std::chrono::microseconds delay;
};

struct LoopbackNetwork::Endpoint {
  ServerId id = 0;
  Handler handler;
  std::atomic<bool> down{false};
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Job*> jobs;
  bool stop = false;
  std::vector<std::thread> workers;
  std::unique_ptr<Port> port;
};

class LoopbackNetwork::Port final : public Transport {
 public:
  Port(LoopbackNetwork& net, ServerId me) : net_(net), me_(me) {}
  ServerId self() const override { return me_; }
  Message request(ServerId dest, Message msg) override {
    return net_.deliver(me_, dest, std::move(msg));
  }
  void send_async(ServerId dest, Message msg, Callback cb) override {
    net_.stats_.async_sent.fetch_add(1);
    net_.enqueue_async(me_, dest, std::move(msg), std::move(cb), 0,
                       std::chrono::microseconds{0});
  }

 private:
  LoopbackNetwork& net_;
  ServerId me_;
};

LoopbackNetwork::LoopbackNetwork(DeliveryPolicy policy)
    : policy_(policy), rng_(policy.seed) {
  dispatcher_ = std::thread([this] { dispatcher_loop(); });
  callbacks_ = std::thread([this] { callback_loop(); });
}

LoopbackNetwork::~LoopbackNetwork() { shutdown(); }

Transport& LoopbackNetwork::attach(ServerId id, Handler handler, std::size_t workers) {
  auto ep = std::make_unique<Endpoint>();
  ep->id = id;
  ep->handler = std::move(handler);
  ep->port = std::make_unique<Port>(*this, id);
  Endpoint* raw = ep.get();
  for (std::size_t i = 0; i < std::max<std::size_t>(workers, 1); ++i)
    raw->workers.emplace_back([this, raw] { worker_loop(raw); });
  std::lock_guard lock(mu_);
  endpoints_[id] = std::move(ep);
  return *raw->port;
}

LoopbackNetwork::Endpoint* LoopbackNetwork::endpoint(ServerId id) {
  std::lock_guard lock(mu_);
  auto it = endpoints_.find(id);
  return it == endpoints_.end() ? nullptr : it->second.get();
}

void LoopbackNetwork::set_down(ServerId id, bool down) {
  if (Endpoint* ep = endpoint(id)) ep->down.store(down);
}

void LoopbackNetwork::set_policy(DeliveryPolicy policy) {
  std::lock_guard lock(mu_);
  policy_ = policy;
  rng_.seed(policy.seed);
}

DeliveryPolicy LoopbackNetwork::policy() const {
  std::lock_guard lock(mu_);
  return policy_;
}

std::chrono::microseconds LoopbackNetwork::draw_delay() {
  std::lock_guard lock(mu_);
  auto lo = policy_.min_delay.count();
  auto hi = std::max(policy_.max_delay.count(), lo);
  if (hi == lo) return std::chrono::microseconds{lo};
  std::uniform_int_distribution<std::int64_t> dist(lo, hi);
  return std::chrono::microseconds{dist(rng_)};
}

Message LoopbackNetwork::deliver(ServerId, ServerId dest, Message msg) {
  Endpoint* ep = endpoint(dest);
  if (!ep || ep->down.load() || stopping_.load())
    throw TransportError("server " + std::to_string(dest) + " unreachable");
  msg.request_id = next_request_id_.fetch_add(1);
  stats_.requests.fetch_add(1);
  auto delay = draw_delay();
  if (ServerThreadScope::active()) {
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    Message r = ep->handler(msg);
    r.request_id = msg.request_id;
    return r;
  }
  Job job{std::move(msg), {}, delay};
  auto fut = job.reply.get_future();
  {
    std::lock_guard lock(ep->mu);
    if (ep->stop) throw TransportError("server shutting down");
    ep->jobs.push_back(&job);
  }
  ep->cv.notify_one();
  return fut.get();
}

void LoopbackNetwork::worker_loop(Endpoint* ep) {
  ServerThreadScope scope;
  for (;;) {
    Job* job;
    {
      std::unique_lock lock(ep->mu);
      ep->cv.wait(lock, [ep] { return ep->stop || !ep->jobs.empty(); });
      if (ep->jobs.empty()) return;
      job = ep->jobs.front();
      ep->jobs.pop_front();
    }
    if (job->delay.count() > 0) std::this_thread::sleep_for(job->delay);
    try {
      Message r = ep->handler(job->msg);
      r.request_id = job->msg.request_id;
      job->reply.set_value(std::move(r));
    } catch (...) {
      job->reply.set_exception(std::current_exception());
    }
  }
}

void LoopbackNetwork::enqueue_async(ServerId src, ServerId dest, Message msg, Callback cb,
                                    int failures, std::chrono::microseconds extra) {
  auto delay = draw_delay() + extra;
  {
    std::lock_guard lock(async_mu_);
    auto base = held_ ? hold_base_ : std::chrono::steady_clock::now();
    auto due = base + delay;
    if (!policy().reorder) {
      auto& last = last_due_[{src, dest}];
      if (due < last) due = last;
      last = due;
    }
    async_q_.push(Pending{due, seq_++, src, dest, std::move(msg), std::move(cb), failures});
  }
  async_cv_.notify_one();
}

void LoopbackNetwork::hold() {
  std::lock_guard lock(async_mu_);
  held_ = true;
  hold_base_ = std::chrono::steady_clock::now();
}

void LoopbackNetwork::release() {
  {
    std::lock_guard lock(async_mu_);
    held_ = false;
  }
  async_cv_.notify_all();
}

void LoopbackNetwork::duplicate_next_async() {
  std::lock_guard lock(async_mu_);
  duplicate_next_ = true;
}

void LoopbackNetwork::dispatcher_loop() {
  ServerThreadScope scope;
  std::unique_lock lock(async_mu_);
  while (!stopping_.load()) {
    if (held_ || async_q_.empty()) {
      async_cv_.wait(lock);
      continue;
    }
    auto due = async_q_.top().due;
    if (due > std::chrono::steady_clock::now()) {
      async_cv_.wait_until(lock, due);
      continue;
    }
    Pending p = async_q_.top();
    async_q_.pop();
    bool dup = std::exchange(duplicate_next_, false);
    ++in_delivery_;
    lock.unlock();

    auto post = [this](Callback cb, std::optional<Message> r) {
      {
        std::lock_guard cl(cb_mu_);
        cb_q_.push_back([cb = std::move(cb), r = std::move(r)] { cb(r); });
      }
      cb_cv_.notify_one();
    };

    Endpoint* ep = endpoint(p.dest);
    if (!ep || ep->down.load()) {
      stats_.failures.fetch_add(1);
      if (p.failures + 1 >= kAsyncAttempts) {
        post(std::move(p.cb), std::nullopt);
      } else {
        enqueue_async(p.src, p.dest, std::move(p.msg), std::move(p.cb), p.failures + 1,
                      std::chrono::microseconds{1000} * (1 << p.failures));
      }
    } else {
      if (p.msg.request_id == 0) p.msg.request_id = next_request_id_.fetch_add(1);
      Message r = ep->handler(p.msg);
      if (dup) ep->handler(p.msg);
      r.request_id = p.msg.request_id;
      if (response_not_ready(r)) {
        stats_.redeliveries.fetch_add(1);
        enqueue_async(p.src, p.dest, std::move(p.msg), std::move(p.cb), p.failures,
                      kNotReadyRetry);
      } else {
        stats_.async_delivered.fetch_add(1);
        post(std::move(p.cb), std::move(r));
      }
    }

    lock.lock();
    --in_delivery_;
  }
}

void LoopbackNetwork::callback_loop() {
  ServerThreadScope scope;
  std::unique_lock lock(cb_mu_);
  for (;;) {
    cb_cv_.wait(lock, [this] { return stopping_.load() || !cb_q_.empty(); });
    if (cb_q_.empty()) return;
    auto fn = std::move(cb_q_.front());
    cb_q_.pop_front();
    ++cb_running_;
    lock.unlock();
    fn();
    stats_.callbacks.fetch_add(1);
    lock.lock();
    --cb_running_;
  }
}

void LoopbackNetwork::quiesce() {
  for (;;) {
    bool idle;
    {
      std::lock_guard a(async_mu_);
      idle = async_q_.empty() && in_delivery_ == 0;
    }
    if (idle) {
      std::lock_guard c(cb_mu_);
      idle = cb_q_.empty() && cb_running_ == 0;
    }
    if (idle) {
      std::lock_guard a(async_mu_);
      if (async_q_.empty() && in_delivery_ == 0) return;
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
}

void LoopbackNetwork::shutdown() {
  if (stopping_.exchange(true)) return;
  {
    std::lock_guard a(async_mu_);
  }
  async_cv_.notify_all();
  {
    std::lock_guard c(cb_mu_);
  }
  cb_cv_.notify_all();
  if (dispatcher_.joinable()) dispatcher_.join();
  if (callbacks_.joinable()) callbacks_.join();

  {
    std::lock_guard lock(mu_);
    for (auto& [id, ep] : endpoints_) {
      std::lock_guard el(ep->mu);
      ep->stop = true;
    }
  }
  for (auto& [id, ep] : endpoints_) {
    ep->cv.notify_all();
    for (auto& t : ep->workers) t.join();
    for (Job* j : ep->jobs)
      j->reply.set_exception(std::make_exception_ptr(TransportError("shutdown")));
    ep->jobs.clear();
  }
}

}  // namespace dili
