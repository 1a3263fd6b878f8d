#include "dili/background.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <thread>

#include "dili/chaos.hpp"

namespace dili {

namespace {

using SteadyClock = std::chrono::steady_clock;

double millis_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - t0).count();
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             SteadyClock::now().time_since_epoch())
      .count();
}

bool acked(const Message& m) {
  auto* a = std::get_if<AckMsg>(&m.body);
  return a != nullptr && a->status == Status::ok;
}

}  // namespace

void BackgroundStats::record(BackgroundKind kind, double millis, std::int64_t items) {
  std::lock_guard lock(mu_);
  samples_.push_back({kind, millis, items});
}

std::vector<OpSample> BackgroundStats::samples() const {
  std::lock_guard lock(mu_);
  return samples_;
}

// Exponential sleep between retries. Sleeping rather than yielding keeps a
// spinning owner from starving the threads it is waiting on.
class Background::Backoff {
 public:
  Backoff(const BackgroundOptions& o, const std::atomic<bool>& stopping)
      : cur_(o.backoff_min), max_(o.backoff_max), stopping_(stopping) {}

  void pause() {
    if (stopping_.load()) throw ShutdownInProgress();
    std::this_thread::sleep_for(cur_);
    cur_ = std::min(cur_ * 2, max_);
  }

 private:
  std::chrono::microseconds cur_;
  const std::chrono::microseconds max_;
  const std::atomic<bool>& stopping_;
};

Background::Background(ServerParts parts, Transport& transport,
                       std::vector<ServerId> peers, BackgroundOptions options)
    : parts_(parts), transport_(transport), peers_(std::move(peers)), options_(options) {}

Background::~Background() {
  moved_copies_.drain([](auto&) {});
}

bool Background::owned(const Entry& e) const {
  if (e.routing_only() || !local(e.head()) || !local(e.tail())) return false;
  Counters* c = e.counters.load();
  return c != nullptr && c->start.load() >= 0;
}

std::size_t Background::staged() const {
  std::lock_guard lock(staged_mu_);
  return staged_.size();
}

bool Background::staged_covers(Key key, NodeRef head) const {
  std::lock_guard lock(staged_mu_);
  auto it = staged_.lower_bound(key);
  return it != staged_.end() && it->second.subhead == head && it->second.key_min < key;
}

Message Background::call(ServerId dest, Tag tag, Payload body) {
  return transport_.request(dest, Message{tag, 0, std::move(body)});
}

NodeRef Background::move_item_sync(ServerId dest, const MoveItemMsg& m) {
  Backoff b(options_, stopping_);
  for (;;) {
    try {
      Message r = call(dest, Tag::move_item, m);
      auto* rr = std::get_if<RefResp>(&r.body);
      if (rr && rr->status == Status::ok && rr->ref) return rr->ref;
    } catch (const TransportError& e) {
      spdlog::debug("event=move_item_retry dest={} what={}", dest, e.what());
    }
    b.pause();
  }
}

void Background::rep_delete_sync(ServerId dest, const RepDeleteMsg& m) {
  Backoff b(options_, stopping_);
  for (;;) {
    try {
      Message r = call(dest, Tag::rep_delete, m);
      auto* rr = std::get_if<ReplayDeleteResp>(&r.body);
      if (rr && rr->status == Status::ok) return;
    } catch (const TransportError& e) {
      spdlog::debug("event=rep_delete_retry dest={} what={}", dest, e.what());
    }
    b.pause();
  }
}

void Background::broadcast(Tag tag, Payload body, std::optional<ServerId> last) {
  auto send = [&](ServerId p) {
    Backoff b(options_, stopping_);
    for (int i = 0; i < options_.broadcast_attempts; ++i) {
      try {
        if (acked(call(p, tag, body))) return;
      } catch (const TransportError&) {
      }
      b.pause();
    }
    spdlog::warn("event=broadcast_gave_up server={} peer={} tag={}", parts_.me, p,
                 tag_name(tag));
  };
  for (ServerId p : peers_)
    if (p != parts_.me && p != last) send(p);
  if (last && *last != parts_.me) send(*last);
}

std::pair<std::int64_t, std::int64_t> Background::wait_conserved(Counters* a, Counters* b,
                                                                 std::int64_t total) {
  Backoff bo(options_, stopping_);
  for (;;) {
    const std::int64_t a1 = a->in_flight();
    const std::int64_t a2 = b->in_flight();
    if (a1 + a2 == total) return {a1, a2};
    stats_.spin_rounds.fetch_add(1, std::memory_order_relaxed);
    bo.pause();
  }
}

// ---- Split ----

SplitOutcome Background::split(Entry& e, NodeRef s) {
  if (!owned(e) || !local(s)) return SplitFailed{SplitFailure::precondition};
  const auto t0 = SteadyClock::now();
  Guard g;
  Node& sn = node(s);
  const Key sk = sn.key.load();
  if (!is_client_key(sk) || !(e.key_min < sk && sk < e.key_max.load()))
    return SplitFailed{SplitFailure::precondition};
  auto fail = [&](SplitFailure why) {
    stats_.split_failures.fetch_add(1, std::memory_order_relaxed);
    return SplitFailed{why};
  };
  if (sn.next.load().marked()) return fail(SplitFailure::item_deleted);
  if (!parts_.registry.reserve()) return fail(SplitFailure::capacity);

  Counters* fresh = parts_.counters.make();
  Counters* old = e.counters.load();
  auto sh = parts_.store.alloc({kSubheadKey, kUnsetKeyMax, 0, parts_.me, kNullRef, fresh, kNullRef});
  std::optional<NodeRef> st;
  if (sh) st = parts_.store.alloc({kSubtailKey, sk, 0, parts_.me, *sh, old, kNullRef});
  if (!st) {
    if (sh) parts_.store.discard(*sh);
    parts_.registry.unreserve();
    return fail(SplitFailure::capacity);
  }
  Node& hn = node(*sh);
  Node& tn = node(*st);
  for (;;) {
    NodeRef temp = sn.next.load();
    if (temp.marked()) {
      parts_.store.discard(*sh);
      parts_.store.discard(*st);
      parts_.registry.unreserve();
      return fail(SplitFailure::item_deleted);
    }
    hn.next.store(temp);
    tn.ts.store(parts_.clock.next());
    hn.ts.store(parts_.clock.next());
    NodeRef expected = temp;
    if (sn.next.cas(expected, *st)) break;
  }

  // Nodes from the new subhead to the old subtail switch to the fresh pair;
  // in-flight operations finish on whichever pair their node now holds.
  const NodeRef old_tail = e.tail();
  std::int64_t moved = 0;
  for (NodeRef c = *sh;;) {
    chaos::point();
    Node& n = node(c);
    n.counters.store(fresh);
    if (c == old_tail) break;
    NodeRef nx = n.next.load();
    if (is_client_key(n.key.load()) && !nx.marked()) ++moved;
    c = nx.unmarked();
  }
  auto [a1, a2] = wait_conserved(fresh, old, e.offset.load());

  auto ne = std::make_shared<Entry>(sk, e.key_max.load(), *sh, old_tail, fresh, a1);
  ne->size_estimate.store(moved);
  // Requests routed by the old extent may still be in flight, so both
  // halves restart their cooldown before either can move.
  const std::int64_t changed = now_ns();
  ne->acquired_at_ns.store(changed);
  {
    std::lock_guard lock(recv_mu_);
    parts_.registry.add_entry(ne, true);
    EntryUpdate u;
    u.subtail = *st;
    u.offset = a2;
    parts_.registry.update_entry_fields(&e, u);
  }
  e.acquired_at_ns.store(changed);
  e.size_estimate.store(std::max<std::int64_t>(0, e.size_estimate.load() - moved));
  broadcast(Tag::register_sublist, KeyRefMsg{sk, *sh}, std::nullopt);

  stats_.splits.fetch_add(1, std::memory_order_relaxed);
  const double ms = millis_since(t0);
  stats_.record(BackgroundKind::split, ms, moved);
  spdlog::debug("event=split server={} key={} moved={} ms={:.3f}", parts_.me, sk, moved, ms);
  return NewEntry{ne};
}

// ---- Move ----

MoveResult Background::move(Entry& e, ServerId dest) {
  if (dest == parts_.me || !owned(e) ||
      std::find(peers_.begin(), peers_.end(), dest) == peers_.end())
    return MoveResult::precondition;
  const auto t0 = SteadyClock::now();
  Guard g;
  const NodeRef sh = e.head();
  const NodeRef st = e.tail();
  Node& hn = node(sh);

  NodeRef sh_star;
  {
    Backoff b(options_, stopping_);
    MoveShMsg m{hn.id(), e.key_min, e.key_max.load(), e.size_estimate.load()};
    for (int i = 0; i < options_.move_sh_attempts && !sh_star; ++i) {
      try {
        Message r = call(dest, Tag::move_sh, m);
        auto* rr = std::get_if<RefResp>(&r.body);
        if (rr && rr->status == Status::ok) sh_star = rr->ref;
      } catch (const TransportError&) {
      }
      if (!sh_star) b.pause();
    }
  }
  if (!sh_star) {
    stats_.moves_abandoned.fetch_add(1, std::memory_order_relaxed);
    spdlog::warn("event=move_abandoned server={} dest={} key_min={}", parts_.me, dest,
                 e.key_min);
    return MoveResult::abandoned;
  }
  hn.new_loc.store(sh_star.raw());

  // Copy every node in order. A node whose forward an inserter already
  // claimed is being replicated asynchronously; its claim value is the copy
  // of its predecessor, which is where the next copy chains from.
  NodeRef start = sh_star;
  ItemId prev_id = hn.id();
  std::int64_t copied = 0;
  for (NodeRef c = hn.next.load().unmarked(); c != st;) {
    chaos::point();
    Node& n = node(c);
    if (n.claim_forward(kNullRef, kPendingRef)) {
      const bool m1 = n.next.load().marked();
      NodeRef copy = move_item_sync(dest, {start, prev_id, n.key.load(), n.id(), m1, kNullRef});
      n.new_loc.store(copy.raw());
      if (n.next.load().marked() != m1) rep_delete_sync(dest, {copy, n.id(), c});
      start = copy;
      ++copied;
    } else {
      NodeRef f = n.forward();
      if (f && !f.is_pending()) start = f;
    }
    prev_id = n.id();
    c = n.next.load().unmarked();
  }

  Node& tn = node(st);
  const NodeRef st_star =
      move_item_sync(dest, {start, prev_id, kSubtailKey, tn.id(), false, tn.next.load()});
  tn.new_loc.store(st_star.raw());

  hooks::fire(hooks::move_pre_freeze);
  Counters* cells = e.counters.load();
  std::int64_t end_seen = 0;
  {
    Backoff b(options_, stopping_);
    for (;;) {
      end_seen = cells->end.load();
      if (cells->start.freeze(end_seen + e.offset.load())) break;
      stats_.spin_rounds.fetch_add(1, std::memory_order_relaxed);
      b.pause();
    }
  }
  // The subtail's successor may have been re-aimed while we walked.
  move_item_sync(dest, {st_star, prev_id, kSubtailKey, tn.id(), false, tn.next.load()});

  switch_over(e, dest, sh_star);
  if (cells->end.load() != end_seen) {
    stats_.freeze_quiescence_breaches.fetch_add(1, std::memory_order_relaxed);
    spdlog::error("event=freeze_breach server={} key_min={}", parts_.me, e.key_min);
  }
  if (!options_.retain_moved_copy) retire_copy(sh, st);

  stats_.moves.fetch_add(1, std::memory_order_relaxed);
  const double ms = millis_since(t0);
  stats_.record(BackgroundKind::move, ms, copied);
  spdlog::debug("event=move server={} dest={} key_min={} copied={} ms={:.3f}", parts_.me, dest,
               e.key_min, copied, ms);
  return MoveResult::moved;
}

void Background::switch_over(Entry& e, ServerId dest, NodeRef new_sh) {
  if (e.key_min != kSubheadKey) {
    Backoff b(options_, stopping_);
    NodeRef target;  // null: start with our own registry
    for (;;) {
      RefResp r{Status::not_ready, target};
      if (!target || local(target)) {
        r = switch_st_recv(e.key_min, new_sh);
      } else {
        try {
          Message m = call(target.server(), Tag::switch_st, KeyRefMsg{e.key_min, new_sh});
          if (auto* rr = std::get_if<RefResp>(&m.body)) r = *rr;
        } catch (const TransportError&) {
        }
      }
      if (r.status == Status::ok && !r.ref) break;
      if (r.status == Status::ok) {
        target = r.ref;
        continue;
      }
      b.pause();
    }
  }
  {
    std::lock_guard lock(recv_mu_);
    EntryUpdate u;
    u.subhead = new_sh;
    u.subtail = kNullRef;
    u.counters = nullptr;
    u.offset = 0;
    parts_.registry.update_entry_fields(&e, u);
  }
  broadcast(Tag::switch_server, KeyRefMsg{e.key_max.load(), new_sh}, dest);
}

bool Background::switch_next_st(NodeRef left_st, NodeRef new_sh) {
  Guard g;
  Node& t = node(left_st);
  auto [cells, v] = acquire_start(t);
  (void)cells;
  if (v < 0) return false;
  t.next.store(new_sh);
  t.counters.load()->end.increment();
  return true;
}

void Background::retire_copy(NodeRef sh, NodeRef st) {
  moved_copies_.retire({sh, st});
  reclaim();
}

void Background::reclaim() {
  moved_copies_.collect([this](const std::pair<NodeRef, NodeRef>& copy) {
    auto [sh, st] = copy;
    NodeRef c = sh;
    while (c != st) {
      NodeRef nx = node(c).next.load().unmarked();
      parts_.store.discard(c);
      c = nx;
    }
    parts_.store.discard(st);
  });
  parts_.store.reclaim();
}

// ---- Merge ----

std::shared_ptr<Entry> Background::merge(Entry& left, Entry& right) {
  if (!owned(left) || !owned(right) || left.key_max.load() != right.key_min) return nullptr;
  const auto t0 = SteadyClock::now();
  Guard g;
  std::shared_ptr<Entry> left_ptr;
  {
    const auto& snap = parts_.registry.snapshot();
    auto it = std::find_if(snap.slots.begin(), snap.slots.end(),
                           [&](const RegistrySlot& s) { return s.entry.get() == &left; });
    if (it == snap.slots.end() || it + 1 == snap.slots.end() || (it + 1)->entry.get() != &right)
      return nullptr;
    left_ptr = it->entry;
  }
  Counters* lc = left.counters.load();
  Counters* rc = right.counters.load();
  const NodeRef lst = left.tail();
  const NodeRef rsh = right.head();
  const NodeRef rst = right.tail();
  const Key mid = right.key_min;
  const std::int64_t total = left.offset.load() + right.offset.load();

  {
    std::lock_guard lock(recv_mu_);
    left.subtail.store(rst.raw());
    parts_.registry.remove_entry(&right, true);
  }
  left.size_estimate.fetch_add(right.size_estimate.load());
  left.acquired_at_ns.store(now_ns());

  for (NodeRef c = rsh;;) {
    Node& n = node(c);
    n.counters.store(lc);
    if (c == rst) break;
    c = n.next.load().unmarked();
  }

  // Sealing the right subhead's link pins the first right node; the swing
  // below only lands while that seal is in place.
  Node& rh = node(rsh);
  NodeRef first;
  for (;;) {
    NodeRef v = rh.next.load();
    if (v.marked()) {
      first = v.unmarked();
      break;
    }
    NodeRef expected = v;
    if (rh.next.cas(expected, v.with_mark(true))) {
      first = v;
      break;
    }
  }

  Backoff b(options_, stopping_);
  for (;;) {
    NodeRef prev = left.head();
    NodeRef link = node(prev).next.load();
    bool reachable = false;
    for (;;) {
      NodeRef c = link.unmarked();
      if (c == lst) {
        reachable = true;
        break;
      }
      if (c == rst || !local(c)) break;
      prev = c;
      link = node(c).next.load();
    }
    if (!reachable) break;
    if (!link.marked() &&
        rdcss(node(prev).next.word(), lst, rh.next.word(), first.with_mark(true), first))
      break;
    // prev is being deleted; a search through it finishes the delink.
    parts_.sublist.search(mid, left.head());
    b.pause();
  }

  auto [a1, a2] = wait_conserved(lc, rc, total);
  left.offset.store(a1);
  right.offset.store(a2);
  broadcast(Tag::register_merged, KeyMsg{mid}, std::nullopt);

  stats_.merges.fetch_add(1, std::memory_order_relaxed);
  const double ms = millis_since(t0);
  stats_.record(BackgroundKind::merge, ms, 0);
  spdlog::debug("event=merge server={} mid={} ms={:.3f}", parts_.me, mid, ms);
  return left_ptr;
}

// ---- Receive side ----

NodeRef Background::replay(NodeRef prev, Key key, ItemId item, bool marked) {
  parts_.clock.observe(item.ts);
  NodeRef left = prev;
  for (;;) {
    NodeRef link = node(left).next.load();
    NodeRef c = link.unmarked();
    Node& n = node(c);
    if (n.id() == item) return c;
    const Key nk = n.key.load();
    const bool before = nk < key || (nk == key && n.ts.load() < item.ts);
    if (nk != kSubtailKey && before) {
      left = c;
      continue;
    }
    Counters* cells = node(left).counters.load();
    auto fresh = parts_.store.alloc({key, kUnsetKeyMax, item.ts, item.sid,
                                     marked ? c.with_mark(true) : c, cells, kNullRef});
    if (!fresh) return kNullRef;
    // Writers to a staged chain are serialized, so a marked predecessor can
    // still be re-aimed as long as its mark is carried over.
    NodeRef expected = link;
    if (node(left).next.cas(expected, link.marked() ? fresh->with_mark(true) : *fresh))
      return *fresh;
    parts_.store.discard(*fresh);
  }
}

std::optional<NodeRef> Background::locate(NodeRef start, ItemId id) const {
  for (NodeRef c = start; local(c);) {
    Node& n = node(c);
    if (n.id() == id) return c;
    if (n.key.load() == kSubtailKey) break;
    c = n.next.load().unmarked();
  }
  return std::nullopt;
}

RefResp Background::move_sh_recv(const MoveShMsg& m) {
  Guard g;
  parts_.clock.observe(m.subhead.ts);
  Counters* cells = parts_.counters.make();
  auto st = parts_.store.alloc({kSubtailKey, m.key_max, 0, parts_.me, kNullRef, cells, kNullRef});
  if (!st) return {Status::resource, kNullRef};
  auto sh = parts_.store.alloc(
      {kSubheadKey, kUnsetKeyMax, m.subhead.ts, m.subhead.sid, *st, cells, kNullRef});
  if (!sh) {
    parts_.store.discard(*st);
    return {Status::resource, kNullRef};
  }
  std::lock_guard lock(staged_mu_);
  staged_[m.key_max] = Staged{m.key_min, m.key_max, *sh, *st, cells, m.size_estimate};
  return {Status::ok, *sh};
}

RefResp Background::move_item_recv(const MoveItemMsg& m) {
  Guard g;
  if (!local(m.start)) return {Status::error, kNullRef};
  std::lock_guard lock(recv_mu_);
  if (m.key == kSubtailKey) {
    NodeRef c = m.start;
    while (node(c).key.load() != kSubtailKey) c = node(c).next.load().unmarked();
    // The copy carries the source subtail's identity, like the subhead does.
    parts_.clock.observe(m.item.ts);
    node(c).sid.store(m.item.sid);
    node(c).ts.store(m.item.ts);
    node(c).next.store(m.link);
    return {Status::ok, c};
  }
  auto prev = locate(m.start, m.prev);
  if (!prev) return {Status::not_ready, kNullRef};
  NodeRef r = replay(*prev, m.key, m.item, m.marked);
  if (!r) return {Status::resource, kNullRef};
  return {Status::ok, r};
}

ReplayInsertResp Background::rep_insert_recv(const RepInsertMsg& m) {
  Guard g;
  if (!local(m.start)) return {Status::error, m.old_location, kNullRef};
  std::lock_guard lock(recv_mu_);
  auto prev = locate(m.start, m.prev);
  if (!prev) return {Status::not_ready, m.old_location, kNullRef};
  NodeRef r = replay(*prev, m.key, m.item, false);
  if (!r) return {Status::resource, m.old_location, kNullRef};
  return {Status::ok, m.old_location, r};
}

ReplayDeleteResp Background::rep_delete_recv(const RepDeleteMsg& m) {
  Guard g;
  if (!local(m.start)) return {Status::error, m.old_location};
  std::lock_guard lock(recv_mu_);
  auto target = locate(m.start, m.item);
  if (!target) return {Status::not_ready, m.old_location};
  Node& n = node(*target);
  for (NodeRef v = n.next.load(); !v.marked();) {
    if (n.next.cas(v, v.with_mark(true))) break;
  }
  return {Status::ok, m.old_location};
}

void Background::replicate_insert(const InsertReplicate& r) {
  Message msg{Tag::rep_insert, 0, RepInsertMsg{r.start, r.prev, r.key, r.item, r.old_location}};
  transport_.send_async(r.start.server(), std::move(msg), [this, r](std::optional<Message> resp) {
    if (!resp) {
      // The freeze will never see this operation end; the move stalls
      // rather than losing the item.
      stats_.replicate_failures.fetch_add(1, std::memory_order_relaxed);
      spdlog::error("event=replicate_failed server={} key={}", parts_.me, r.key);
      return;
    }
    auto* body = std::get_if<ReplayInsertResp>(&resp->body);
    if (body && body->status == Status::ok && body->new_ref) {
      Guard g;
      Node& n = node(r.old_location);
      if (n.id() == r.item && n.key.load() == r.key) n.claim_forward(r.start, body->new_ref);
    }
    r.cells->end.increment();
  });
}

void Background::replicate_delete(const DeleteReplicate& r) {
  Message msg{Tag::rep_delete, 0, RepDeleteMsg{r.start, r.item, r.old_location}};
  transport_.send_async(r.start.server(), std::move(msg), [this, r](std::optional<Message> resp) {
    if (!resp) {
      stats_.replicate_failures.fetch_add(1, std::memory_order_relaxed);
      spdlog::error("event=replicate_failed server={} op=delete", parts_.me);
      return;
    }
    r.cells->end.increment();
  });
}

bool Background::register_sublist_recv(Key key_min, NodeRef subhead) {
  Guard g;
  std::lock_guard lock(recv_mu_);
  const auto& snap = parts_.registry.snapshot();
  auto idx = snap.locate(key_min);
  if (!idx) return false;
  const RegistrySlot& cover = snap.slots[*idx];
  if (cover.key_max == key_min)  // already split here
    return *idx + 1 < snap.slots.size() && snap.slots[*idx + 1].key_min == key_min;
  auto status = parts_.registry.add_entry(std::make_shared<Entry>(key_min, cover.key_max, subhead));
  if (status != RegistryStatus::ok)
    spdlog::warn("event=routing_entry_dropped server={} key_min={}", parts_.me, key_min);
  return true;
}

RefResp Background::switch_st_recv(Key key_min, NodeRef new_sh) {
  Guard g;
  std::lock_guard lock(recv_mu_);
  const auto& snap = parts_.registry.snapshot();
  auto idx = snap.locate(key_min);
  if (!idx) return {Status::error, kNullRef};
  const RegistrySlot& slot = snap.slots[*idx];
  // Our view still has the range inside its left neighbor: not announced yet.
  if (slot.key_max != key_min) return {Status::not_ready, kNullRef};
  Entry& left = *slot.entry;
  if (left.routing_only() || !local(left.tail())) return {Status::ok, left.head()};
  if (switch_next_st(left.tail(), new_sh)) return {Status::ok, kNullRef};
  return {Status::not_ready, kNullRef};
}

bool Background::switch_server_recv(Key key_max, NodeRef new_sh) {
  Guard g;
  std::lock_guard lock(recv_mu_);
  std::optional<Staged> st;
  {
    std::lock_guard sl(staged_mu_);
    auto it = staged_.find(key_max);
    if (it != staged_.end() && it->second.subhead == new_sh) st = it->second;
  }
  Entry* e = parts_.registry.get_by_key(key_max);
  if (e == nullptr || e->key_max.load() != key_max) return false;
  if (st) {
    if (st->key_min != e->key_min)
      spdlog::warn("event=staged_range_mismatch server={} staged_min={} entry_min={}", parts_.me,
                   st->key_min, e->key_min);
    EntryUpdate u;
    u.subhead = st->subhead;
    u.subtail = st->subtail;
    u.counters = st->counters;
    u.offset = 0;
    parts_.registry.update_entry_fields(e, u);
    e->size_estimate.store(st->size_estimate);
    e->acquired_at_ns.store(now_ns());
    // Unstaged only once the registry routes here, so a forwarded request
    // always finds either the staged head or the owned entry.
    std::lock_guard sl(staged_mu_);
    staged_.erase(key_max);
  } else {
    e->subhead.store(new_sh.raw());
  }
  return true;
}

bool Background::register_merged_recv(Key mid) {
  Guard g;
  std::lock_guard lock(recv_mu_);
  const auto& snap = parts_.registry.snapshot();
  auto idx = snap.locate(mid);
  if (!idx) return false;
  if (snap.slots[*idx].key_max != mid) return true;  // already merged here
  if (*idx + 1 >= snap.slots.size() || snap.slots[*idx + 1].key_min != mid) return false;
  return parts_.registry.remove_entry(snap.slots[*idx + 1].entry.get(), true) ==
         RegistryStatus::ok;
}

}  // namespace dili
