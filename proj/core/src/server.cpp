#include "dili/server.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "dili/loopback.hpp"

namespace dili {

namespace {

thread_local bool tl_client_path = false;

struct ClientPathScope {
  bool prev = tl_client_path;
  ClientPathScope() { tl_client_path = true; }
  ~ClientPathScope() { tl_client_path = prev; }
};

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Gossip rides on ACK: value carries load in the high bits, sender in the
// low 16.
std::int64_t pack_load(ServerId who, std::int64_t load) {
  return (std::max<std::int64_t>(load, 0) << 16) | who;
}
std::pair<ServerId, std::int64_t> unpack_load(std::int64_t v) {
  return {static_cast<ServerId>(v & 0xFFFF), v >> 16};
}

}  // namespace

std::vector<std::uint64_t> ServerStats::hop_histogram() const {
  std::vector<std::uint64_t> out;
  for (const auto& h : hops) out.push_back(h.load());
  return out;
}

MaintenanceExecutor::MaintenanceExecutor() : thread_([this] { loop(); }) {}

MaintenanceExecutor::~MaintenanceExecutor() { stop(); }

std::future<void> MaintenanceExecutor::submit(std::function<void()> task) {
  std::packaged_task<void()> pt(std::move(task));
  auto fut = pt.get_future();
  {
    std::lock_guard lock(mu_);
    if (stop_) {
      std::promise<void> p;
      p.set_exception(std::make_exception_ptr(ShutdownInProgress()));
      return p.get_future();
    }
    tasks_.push_back(std::move(pt));
  }
  cv_.notify_one();
  return fut;
}

void MaintenanceExecutor::stop() {
  {
    std::lock_guard lock(mu_);
    if (stop_) return;
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  // Dropping an unrun packaged_task breaks its promise for any waiter.
  tasks_.clear();
}

void MaintenanceExecutor::loop() {
  ServerThreadScope scope;
  for (;;) {
    std::packaged_task<void()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stop_ || !tasks_.empty(); });
      if (stop_) return;
      task = std::move(tasks_.front());
      tasks_.pop_front();
    }
    task();
  }
}

Server::Server(ServerConfig config, FaultInjection faults, BackgroundOptions background)
    : config_(std::move(config)),
      faults_(faults),
      background_options_(background),
      store_(config_.server_id, config_.arena_capacity),
      registry_(config_.max_sublists),
      sublist_(store_, registry_, clock_, faults_) {
  if (auto errs = validate(config_); !errs.empty()) throw ConfigError(errs.front());
}

Server::~Server() { stop(); }

bool Server::in_client_path() { return tl_client_path; }

void Server::attach(Transport& transport) {
  transport_ = &transport;
  background_ = std::make_unique<Background>(
      ServerParts{config_.server_id, store_, registry_, clock_, counters_, sublist_}, transport,
      config_.server_ids(), background_options_);
  sublist_.set_sink(background_.get());
  bootstrap();
}

// Range i is owned by partition[i].owner, which allocates its subhead and
// subtail at slots 2k+1 and 2k+2 where k counts that owner's earlier ranges.
// Every server can therefore name every subhead without talking to anyone.
void Server::bootstrap() {
  const auto& part = config_.partition;
  std::map<ServerId, std::uint64_t> seen;
  std::vector<NodeRef> heads;
  for (const auto& r : part) {
    const std::uint64_t k = seen[r.owner]++;
    heads.push_back(NodeRef::pack(r.owner, 2 * k + 1));
  }
  Key key_min = kSubheadKey;
  for (std::size_t i = 0; i < part.size(); ++i) {
    const auto& r = part[i];
    std::shared_ptr<Entry> entry;
    if (r.owner == config_.server_id) {
      Counters* cells = counters_.make();
      auto sh = store_.alloc({kSubheadKey, kUnsetKeyMax, clock_.next(), config_.server_id,
                              kNullRef, cells, kNullRef});
      const NodeRef next = i + 1 < part.size() ? heads[i + 1] : kNullRef;
      auto st = store_.alloc(
          {kSubtailKey, r.key_max, clock_.next(), config_.server_id, next, cells, kNullRef});
      if (!sh || !st || *sh != heads[i] || st->slot() != heads[i].slot() + 1)
        throw ConfigError("bootstrap allocation out of order");
      store_.get(*sh).next.store(*st);
      entry = std::make_shared<Entry>(key_min, r.key_max, *sh, *st, cells, 0);
    } else {
      entry = std::make_shared<Entry>(key_min, r.key_max, heads[i]);
    }
    if (registry_.add_entry(entry) != RegistryStatus::ok)
      throw ConfigError("registry capacity below partition size");
    key_min = r.key_max;
  }
  spdlog::debug("event=bootstrap server={} ranges={} partition={}", config_.server_id, part.size(),
               format_partition(part));
}

NodeRef Server::usable_hint(Key key, NodeRef ref) const {
  if (!ref || !store_.is_local(ref)) return kNullRef;
  return background_->staged_covers(key, ref) ? ref : kNullRef;
}

void Server::bump_size(Key key, std::int64_t delta) {
  Guard g;
  Entry* e = registry_.get_by_key(key);
  if (e == nullptr || e->routing_only()) return;
  const std::int64_t n = e->size_estimate.fetch_add(delta) + delta;
  // Only the insert that crosses the threshold wakes the balancer; the
  // periodic tick covers anything this misses.
  if (delta > 0 && n == config_.split_threshold + 1) {
    split_wanted_.store(true);
    balancer_cv_.notify_one();
  }
}

BoolResp Server::handle_client(Tag op, const ClientOp& req) {
  const std::uint8_t hops = req.delegated ? req.hops : 1;
  if (hops > kMaxHops) {
    stats_.hop_violations.fetch_add(1);
    spdlog::error("event=hop_limit server={} key={} hops={}", config_.server_id, req.key, hops);
    return {Status::hop_limit, false, hops};
  }
  if (!is_client_key(req.key)) return {Status::error, false, hops};
  ClientPathScope scope;
  stats_.client_ops.fetch_add(1, std::memory_order_relaxed);

  const NodeRef hint = req.delegated ? usable_hint(req.key, req.ref) : kNullRef;
  OpResult r;
  switch (op) {
    case Tag::find:
      r = sublist_.find(req.key, hint);
      break;
    case Tag::insert:
      r = sublist_.insert(req.key, hint);
      break;
    case Tag::remove:
    case Tag::delete_at:  // a node ref may be stale by now; the key is not
      r = sublist_.remove(req.key, hint);
      break;
    default:
      return {Status::error, false, hops};
  }

  if (auto* d = std::get_if<Done>(&r)) {
    stats_.hops[std::min<std::size_t>(hops, ServerStats::kHopBuckets - 1)].fetch_add(
        1, std::memory_order_relaxed);
    if (d->success && op == Tag::insert) bump_size(req.key, 1);
    if (d->success && op != Tag::insert && op != Tag::find) bump_size(req.key, -1);
    return {Status::ok, d->success, hops};
  }
  if (std::holds_alternative<ResourceExhausted>(r)) return {Status::resource, false, hops};

  const auto& del = std::get<Delegate>(r);
  stats_.forwarded.fetch_add(1, std::memory_order_relaxed);
  const Tag fwd_tag = del.at_node ? Tag::delete_at : op;
  try {
    Message resp = transport_->request(
        del.target_server,
        Message{fwd_tag, 0,
                ClientOp{req.key, del.ref, static_cast<std::uint8_t>(hops + 1), true}});
    if (auto* b = std::get_if<BoolResp>(&resp.body)) return *b;
  } catch (const TransportError& e) {
    spdlog::warn("event=forward_failed server={} dest={} what={}", config_.server_id,
                 del.target_server, e.what());
  }
  return {Status::error, false, hops};
}

Message Server::handle(const Message& m) {
  auto ack = [&](bool ok) { return Message{Tag::ack, m.request_id, AckMsg{ok ? Status::ok : Status::nack, 0}}; };
  if (!background_) return Message{Tag::ack, m.request_id, AckMsg{Status::error, 0}};
  try {
    switch (m.tag) {
      case Tag::find:
      case Tag::insert:
      case Tag::remove:
      case Tag::delete_at:
        return {Tag::bool_resp, m.request_id, handle_client(m.tag, std::get<ClientOp>(m.body))};
      case Tag::move_sh:
        return {Tag::ref_resp, m.request_id, background_->move_sh_recv(std::get<MoveShMsg>(m.body))};
      case Tag::move_item:
        return {Tag::ref_resp, m.request_id,
                background_->move_item_recv(std::get<MoveItemMsg>(m.body))};
      case Tag::rep_insert:
        return {Tag::replay_resp_insert, m.request_id,
                background_->rep_insert_recv(std::get<RepInsertMsg>(m.body))};
      case Tag::rep_delete:
        return {Tag::replay_resp_delete, m.request_id,
                background_->rep_delete_recv(std::get<RepDeleteMsg>(m.body))};
      case Tag::register_sublist: {
        const auto& b = std::get<KeyRefMsg>(m.body);
        return ack(background_->register_sublist_recv(b.key, b.ref));
      }
      case Tag::switch_st: {
        const auto& b = std::get<KeyRefMsg>(m.body);
        return {Tag::ref_resp, m.request_id, background_->switch_st_recv(b.key, b.ref)};
      }
      case Tag::switch_server: {
        const auto& b = std::get<KeyRefMsg>(m.body);
        return ack(background_->switch_server_recv(b.key, b.ref));
      }
      case Tag::register_merged:
        return ack(background_->register_merged_recv(std::get<KeyMsg>(m.body).key));
      case Tag::ack: {
        const auto& a = std::get<AckMsg>(m.body);
        if (a.status != Status::gossip) break;
        auto [who, load] = unpack_load(a.value);
        {
          std::lock_guard lock(loads_mu_);
          peer_loads_[who] = load;
        }
        return {Tag::ack, m.request_id, AckMsg{Status::gossip, pack_load(id(), this->load())}};
      }
      default:
        break;
    }
  } catch (const std::bad_variant_access&) {
  }
  return Message{Tag::ack, m.request_id, AckMsg{Status::error, 0}};
}

std::vector<std::shared_ptr<Entry>> Server::owned_entries() const {
  Guard g;
  std::vector<std::shared_ptr<Entry>> out;
  for (const auto& s : registry_.snapshot().slots) {
    const Entry& e = *s.entry;
    if (e.routing_only() || !store_.is_local(e.head())) continue;
    Counters* c = e.counters.load();
    if (c != nullptr && c->start.load() >= 0) out.push_back(s.entry);
  }
  return out;
}

std::int64_t Server::count_items(const Entry& e) const {
  Guard g;
  const NodeRef tail = e.tail();
  std::int64_t n = 0;
  for (NodeRef c = store_.get(e.head()).next.load().unmarked(); c != tail && store_.is_local(c);) {
    const Node& nd = store_.get(c);
    NodeRef nx = nd.next.load();
    if (!nx.marked() && is_client_key(nd.key.load())) ++n;
    c = nx.unmarked();
  }
  return n;
}

std::int64_t Server::load() const {
  std::int64_t total = 0;
  for (const auto& e : owned_entries()) total += std::max<std::int64_t>(0, e->size_estimate.load());
  return total;
}

std::map<ServerId, std::int64_t> Server::peer_loads() const {
  std::lock_guard lock(loads_mu_);
  return peer_loads_;
}

std::optional<std::shared_ptr<Entry>> Server::split_midpoint(Entry& e, std::int64_t items,
                                                             BalancerReport& rep) {
  Guard g;
  const std::int64_t target = (items + 1) / 2;
  const NodeRef tail = e.tail();
  NodeRef before;
  NodeRef chosen;
  std::int64_t seen = 0;
  for (NodeRef c = store_.get(e.head()).next.load().unmarked(); c != tail;) {
    const Node& nd = store_.get(c);
    NodeRef nx = nd.next.load();
    if (!nx.marked() && is_client_key(nd.key.load())) {
      if (++seen == target) {
        chosen = c;
        break;
      }
      before = c;
    }
    c = nx.unmarked();
  }
  if (!chosen) return std::nullopt;
  for (NodeRef pick : {chosen, before}) {
    if (!pick) break;
    SplitOutcome out = background_->split(e, pick);
    if (auto* ne = std::get_if<NewEntry>(&out)) {
      ++rep.splits;
      stats_.balancer_splits.fetch_add(1);
      return ne->entry;
    }
    ++rep.split_failures;
    if (std::get<SplitFailed>(out).reason != SplitFailure::item_deleted) break;
  }
  return std::nullopt;
}

void Server::gossip() {
  const Message msg{Tag::ack, 0, AckMsg{Status::gossip, pack_load(id(), load())}};
  for (ServerId p : config_.server_ids()) {
    if (p == id()) continue;
    try {
      Message r = transport_->request(p, msg);
      if (auto* a = std::get_if<AckMsg>(&r.body); a && a->status == Status::gossip) {
        auto [who, l] = unpack_load(a->value);
        std::lock_guard lock(loads_mu_);
        peer_loads_[who] = l;
      }
    } catch (const TransportError&) {
    }
  }
}

bool Server::maybe_move(BalancerReport& rep) {
  const auto ids = config_.server_ids();
  if (ids.size() < 2) return false;
  const std::int64_t own = load();
  auto loads = peer_loads();
  std::int64_t total = own;
  ServerId target = id();
  std::int64_t target_load = 0;
  for (ServerId p : ids) {
    if (p == id()) continue;
    const std::int64_t l = loads.count(p) ? loads[p] : 0;
    total += l;
    if (target == id() || l < target_load) {
      target = p;
      target_load = l;
    }
  }
  rep.load = own;
  rep.fair_share = static_cast<double>(total) / static_cast<double>(ids.size());
  if (static_cast<double>(own) <= config_.move_trigger_ratio * rep.fair_share) return false;

  // Prefer the largest sublist that does not overshoot the fair share; only
  // move when the receiver ends up strictly lighter than we were.
  const std::int64_t excess = own - static_cast<std::int64_t>(std::ceil(rep.fair_share));
  const std::int64_t cooldown_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(config_.move_cooldown).count();
  const std::int64_t now = now_ns();
  std::shared_ptr<Entry> best;
  std::shared_ptr<Entry> smallest;
  for (const auto& e : owned_entries()) {
    const std::int64_t s = e->size_estimate.load();
    const std::int64_t acquired = e->acquired_at_ns.load();
    if (s <= 0 || target_load + s >= own) continue;
    if (acquired != 0 && now - acquired < cooldown_ns) continue;
    if (s <= excess && (!best || s > best->size_estimate.load())) best = e;
    if (!smallest || s < smallest->size_estimate.load()) smallest = e;
  }
  if (!best) best = smallest;
  if (!best) return false;
  if (background_->move(*best, target) != MoveResult::moved) return false;
  ++rep.moves;
  stats_.balancer_moves.fetch_add(1);
  {
    std::lock_guard lock(loads_mu_);
    peer_loads_[target] = target_load + best->size_estimate.load();
  }
  return true;
}

BalancerReport Server::balancer_tick() {
  BalancerReport rep;
  stats_.balancer_ticks.fetch_add(1);
  std::vector<std::shared_ptr<Entry>> work = owned_entries();
  while (!work.empty()) {
    auto e = work.back();
    work.pop_back();
    if (e->routing_only()) continue;
    const std::int64_t n = count_items(*e);
    e->size_estimate.store(n);
    if (n <= config_.split_threshold) continue;
    if (auto fresh = split_midpoint(*e, n, rep)) {
      work.push_back(e);
      work.push_back(*fresh);
    }
  }
  gossip();
  maybe_move(rep);
  background_->reclaim();
  return rep;
}

void Server::balancer_loop() {
  std::unique_lock lock(balancer_mu_);
  while (!balancer_stop_) {
    balancer_cv_.wait_for(lock, config_.balancer_period,
                          [this] { return balancer_stop_ || split_wanted_.load(); });
    if (balancer_stop_) break;
    split_wanted_.store(false);
    lock.unlock();
    try {
      executor_.submit([this] { balancer_tick(); }).get();
    } catch (const ShutdownInProgress&) {
    } catch (const std::future_error&) {
    }
    lock.lock();
  }
}

void Server::start_balancer() {
  if (config_.balancer_period.count() <= 0 || balancer_.joinable()) return;
  {
    std::lock_guard lock(balancer_mu_);
    balancer_stop_ = false;
  }
  balancer_ = std::thread([this] { balancer_loop(); });
}

void Server::stop_balancer() {
  {
    std::lock_guard lock(balancer_mu_);
    balancer_stop_ = true;
  }
  balancer_cv_.notify_all();
  if (balancer_.joinable()) balancer_.join();
}

void Server::stop() {
  stop_balancer();
  if (background_) background_->stop();
  executor_.stop();
}

}  // namespace dili
