#include "dili/sublist.hpp"

#include <cassert>

namespace dili {

std::pair<Counters*, std::int64_t> acquire_start(Node& n) {
  for (;;) {
    Counters* c = n.counters.load();
    std::int64_t v = c->start.increment();
    if (n.counters.load() == c) return {c, v};
    c->end.increment();  // retargeted underneath us; balance and retry
  }
}

NodeRef Sublist::resolve(Key key) const {
  Entry* e = registry_.get_by_key(key);
  assert(e && "registry must cover every client key");
  return e ? e->head() : kNullRef;
}

// A live starting point for key: the hint if usable, else the registry's.
NodeRef Sublist::pick_head(Key key, NodeRef hint, bool honor_freeze) const {
  if (hint && (!local(hint) || !honor_freeze || !node(hint).frozen())) return hint;
  return reroute(key);
}

NodeRef Sublist::reroute(Key key) const {
  NodeRef head = resolve(key);
  if (local(head) && node(head).frozen()) {
    NodeRef f = node(head).forward();
    if (f && !f.is_pending()) return f;
  }
  return head;
}

SearchOutcome Sublist::search(Key key, NodeRef head, bool honor_freeze) {
  for (;;) {
    if (!local(head)) return Forward{head};
    Node& h = node(head);
    if (honor_freeze && h.frozen()) {
      NodeRef f = h.forward();
      if (f && !f.is_pending()) return Forward{f};
    }
    NodeRef first = h.next.load();
    if (first.marked()) {  // sealed subhead of a merged-away sublist
      head = resolve(key);
      continue;
    }

    NodeRef prev = head;
    NodeRef curr = first;
    bool restart = false;
    while (!restart) {
      chaos::point();
      Node& c = node(curr);
      NodeRef succ = c.next.load();
      if (honor_freeze && c.frozen()) {
        NodeRef r = resolve(key);
        if (!local(r)) return Forward{r};
        if (node(r).frozen()) {
          NodeRef f = node(r).forward();
          if (f && !f.is_pending()) return Forward{f};
        }
        head = r;
        restart = true;
        break;
      }
      const Key ck = c.key.load();
      if (ck == kSubtailKey) {
        if (key <= c.key_max.load()) return NotFound{prev};
        if (!local(succ)) return Forward{succ};
        NodeRef beyond = node(succ).next.load();
        if (beyond.marked()) {
          // Dead subtail/subhead pair from a merge: help unlink it.
          NodeRef expected = curr;
          if (node(prev).next.cas(expected, beyond.unmarked())) {
            curr = beyond.unmarked();
            continue;
          }
          stats_.restarts.fetch_add(1, std::memory_order_relaxed);
          restart = true;
          break;
        }
        head = succ;
        restart = true;
        break;
      }
      if (succ.marked()) {
        if (delink(prev, curr)) continue;
        stats_.restarts.fetch_add(1, std::memory_order_relaxed);
        restart = true;
        break;
      }
      if (ck >= key) {
        if (ck == key) return Found{curr, prev};
        return NotFound{prev};
      }
      prev = curr;
      curr = succ;
    }
  }
}

bool Sublist::delink(NodeRef prev, NodeRef& curr) {
  NodeRef last = node(curr).next.load().unmarked();
  for (;;) {
    Node& x = node(last);
    if (x.key.load() == kSubtailKey) break;
    NodeRef xs = x.next.load();
    if (!xs.marked()) break;
    last = xs.unmarked();
  }
  chaos::point();
  NodeRef expected = curr.unmarked();
  if (!node(prev).next.cas(expected, last)) return false;
  for (NodeRef r = curr.unmarked(); r != last;) {
    NodeRef nx = node(r).next.load().unmarked();
    store_.retire(r);
    stats_.delinked.fetch_add(1, std::memory_order_relaxed);
    r = nx;
  }
  curr = last;
  return true;
}

OpResult Sublist::find(Key key, NodeRef subhead) {
  Guard g;
  NodeRef head = pick_head(key, subhead, true);
  for (;;) {
    if (!local(head)) return Delegate{head.server(), head};
    SearchOutcome out = search(key, head, true);
    if (std::holds_alternative<Found>(out)) return Done{true};
    if (std::holds_alternative<NotFound>(out)) return Done{false};
    head = std::get<Forward>(out).target;
  }
}

OpResult Sublist::remove(Key key, NodeRef subhead) {
  Guard g;
  NodeRef head = pick_head(key, subhead, true);
  for (;;) {
    if (!local(head)) return Delegate{head.server(), head};
    SearchOutcome out = search(key, head, true);
    if (auto* f = std::get_if<Found>(&out)) return erase(f->node, key);
    if (std::holds_alternative<NotFound>(out)) return Done{false};
    head = std::get<Forward>(out).target;
  }
}

OpResult Sublist::erase(NodeRef nref, Key key) {
  Guard g;
  if (!local(nref)) return Delegate{nref.server(), nref, true};
  if (node(nref).key.load() != key) return remove(key);
  Node& n = node(nref);
  const bool check = !faults_.skip_delete_mark_check;
  if (check && n.next.load().marked()) return Done{false};

  auto [cells, v] = acquire_start(n);
  (void)cells;
  if (v < 0) {
    // Nothing observable has happened yet, so a fresh remove by key stands
    // in for this one. Routing by key avoids holding node refs across moves.
    // A frozen pair's end cell is never touched again.
    return remove(key);
  }

  hooks::fire(hooks::remove_counted);
  chaos::point();
  bool result = false;
  NodeRef seen = n.next.load();
  for (;;) {
    if (check && seen.marked()) {
      n.counters.load()->end.increment();
      break;
    }
    NodeRef expected = seen;
    if (n.next.cas(expected, seen.with_mark(true))) {
      result = true;
      NodeRef loc = n.forward();
      if (loc && !loc.is_pending() && sink_) {
        stats_.replicates.fetch_add(1, std::memory_order_relaxed);
        sink_->replicate_delete({loc, n.id(), nref, cells});
      } else {
        n.counters.load()->end.increment();
      }
      break;
    }
    seen = expected;
  }
  cleanup(key);
  return Done{result};
}

void Sublist::cleanup(Key key) {
  NodeRef head = resolve(key);
  if (local(head) && !node(head).frozen()) search(key, head, true);
}

OpResult Sublist::insert(Key key, NodeRef subhead) {
  Guard g;
  const bool honor = !faults_.skip_insert_freeze_check;
  NodeRef head = pick_head(key, subhead, honor);
  for (;;) {
    chaos::point();
    if (!local(head)) return Delegate{head.server(), head};
    SearchOutcome out = search(key, head, honor);
    if (auto* fw = std::get_if<Forward>(&out)) {
      head = fw->target;
      continue;
    }
    if (std::holds_alternative<Found>(out)) return Done{false};

    const NodeRef left = std::get<NotFound>(out).left;
    Node& l = node(left);
    const NodeRef temp = l.next.load();
    if (temp.marked()) {
      stats_.restarts.fetch_add(1, std::memory_order_relaxed);
      continue;
    }
    Node& t = node(temp);
    const Key tk = t.key.load();
    if (tk == kSubtailKey) {
      if (key > t.key_max.load()) {  // a split landed right after left
        head = t.next.load();
        continue;
      }
    } else if (tk <= key) {
      stats_.restarts.fetch_add(1, std::memory_order_relaxed);
      continue;
    }

    chaos::point();  // a freeze landing here must be seen by the count below
    auto [cells, v] = acquire_start(l);
    if (v < 0 && honor) {
      head = reroute(key);
      continue;
    }
    hooks::fire(hooks::insert_counted);
    chaos::point();

    auto fresh = store_.alloc({key, kUnsetKeyMax, clock_.next(), store_.id(), temp,
                               l.counters.load(), kNullRef});
    if (!fresh) {
      l.counters.load()->end.increment();
      return ResourceExhausted{};
    }
    NodeRef expected = temp;
    if (!l.next.cas(expected, *fresh)) {
      store_.discard(*fresh);
      l.counters.load()->end.increment();
      stats_.restarts.fetch_add(1, std::memory_order_relaxed);
      continue;
    }

    Node& n = node(*fresh);
    // A concurrent retarget may have passed left before we linked in.
    for (Counters* c = l.counters.load(); n.counters.load() != c; c = l.counters.load())
      n.counters.store(c);
    if (cells->start.load() < 0)
      stats_.sign_violations.fetch_add(1, std::memory_order_relaxed);

    NodeRef loc = l.forward();
    if (loc && !loc.is_pending() && sink_ && n.claim_forward(kNullRef, loc)) {
      stats_.replicates.fetch_add(1, std::memory_order_relaxed);
      sink_->replicate_insert({loc, l.id(), key, n.id(), *fresh, cells});
    } else {
      l.counters.load()->end.increment();
    }
    return Done{true};
  }
}

}  // namespace dili
