#include "dili/verify/inspect.hpp"

#include <map>
#include <unordered_set>

namespace dili::verify {

namespace {

WalkedNode snapshot(Cluster& c, NodeRef r) {
  Node& n = node_at(c, r);
  return {r, n.key.load(), n.key_max.load(), n.id(), n.next.load().marked(), n.frozen()};
}

std::string ref_str(NodeRef r) {
  return std::to_string(r.server()) + ":" + std::to_string(r.slot());
}

}  // namespace

Node& node_at(Cluster& c, NodeRef r) { return c.server(r.server()).store().get(r); }

GlobalWalk walk_list(Cluster& c, std::size_t max_steps) {
  GlobalWalk w;
  Guard g;
  NodeRef head;
  for (std::size_t i = 0; i < c.size() && !head; ++i) {
    for (const auto& e : c.server(i).owned_entries()) {
      if (e->key_min == kSubheadKey) {
        head = e->head();
        break;
      }
    }
  }
  if (!head) {
    w.error = "no server owns the first range";
    return w;
  }
  for (NodeRef r = head; r;) {
    if (r.server() >= c.size()) {
      w.error = "link to unknown server " + ref_str(r);
      return w;
    }
    if (w.nodes.size() >= max_steps) {
      w.error = "walk exceeded step bound (cycle?)";
      return w;
    }
    w.nodes.push_back(snapshot(c, r));
    r = node_at(c, r).next.load().unmarked();
  }
  w.complete = true;
  return w;
}

std::vector<WalkedNode> walk_sublist(Cluster& c, NodeRef head) {
  Guard g;
  std::vector<WalkedNode> out;
  for (NodeRef r = head; r;) {
    out.push_back(snapshot(c, r));
    if (out.back().key == kSubtailKey) break;
    r = node_at(c, r).next.load().unmarked();
  }
  return out;
}

std::set<Key> key_set(Cluster& c) {
  std::set<Key> keys;
  for (const auto& n : walk_list(c).nodes)
    if (is_client_key(n.key) && !n.marked) keys.insert(n.key);
  return keys;
}

StructureReport check_structure(Cluster& c) {
  StructureReport rep;
  auto fail = [&](const std::string& why) {
    if (rep.ok) rep.detail = why;
    rep.ok = false;
  };
  GlobalWalk w = walk_list(c);
  if (!w.complete) {
    fail(w.error);
    return rep;
  }
  rep.nodes = w.nodes.size();

  Key lower = kSubheadKey;  // keys in the current sublist must exceed this
  std::optional<Key> last_key;
  std::unordered_set<NodeRef> heads;
  bool in_sublist = false;
  for (const auto& n : w.nodes) {
    if (n.frozen) fail("frozen node reachable at " + ref_str(n.ref));
    if (n.key == kSubheadKey) {
      if (in_sublist) fail("subhead inside a sublist at " + ref_str(n.ref));
      in_sublist = true;
      heads.insert(n.ref);
      ++rep.sublists;
      continue;
    }
    if (n.key == kSubtailKey) {
      if (!in_sublist) fail("subtail without subhead at " + ref_str(n.ref));
      if (n.key_max < lower && n.key_max != kSubtailKey)
        fail("subtail bounds out of order at " + ref_str(n.ref));
      lower = n.key_max;
      in_sublist = false;
      continue;
    }
    if (!in_sublist) fail("client node outside any sublist at " + ref_str(n.ref));
    if (n.marked) continue;
    ++rep.keys;
    if (last_key && n.key <= *last_key)
      fail("keys out of order: " + std::to_string(*last_key) + " then " + std::to_string(n.key));
    if (n.key <= lower) fail("key " + std::to_string(n.key) + " below its sublist range");
    last_key = n.key;
  }
  if (in_sublist) fail("list does not end with a subtail");
  if (!w.nodes.empty() && w.nodes.back().key_max != kSubtailKey)
    fail("final subtail does not cover +inf");

  std::size_t owned = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    Server& s = c.server(i);
    {
      Guard g;
      if (!s.registry().snapshot().tiles())
        fail("registry of server " + std::to_string(i) + " does not tile");
    }
    for (const auto& e : s.owned_entries()) {
      ++owned;
      if (!heads.count(e->head()))
        fail("owned entry of server " + std::to_string(i) + " unreachable, key_min " +
             std::to_string(e->key_min));
    }
  }
  if (owned != heads.size())
    fail("walk saw " + std::to_string(heads.size()) + " subheads but " + std::to_string(owned) +
         " entries are owned");
  return rep;
}

SubheadSample sample_active_subheads(Cluster& c) {
  SubheadSample out;
  struct Ref {
    std::size_t server;
    NodeRef head;
  };
  std::vector<Ref> refs;
  {
    Guard g;
    for (std::size_t i = 0; i < c.size(); ++i) {
      Server& s = c.server(i);
      for (const auto& slot : s.registry().snapshot().slots) {
        NodeRef h = slot.entry->head();
        if (s.store().is_local(h)) refs.push_back({i, h});
      }
    }
  }
  // Second pass: identities and freeze states, read after all references.
  std::map<ItemId, std::unordered_set<NodeRef>> live;
  std::set<ItemId> ids;
  Guard g;
  for (const auto& r : refs) {
    Node& n = node_at(c, r.head);
    if (n.key.load() != kSubheadKey) continue;  // reclaimed since it was read
    ItemId id = n.id();
    ids.insert(id);
    if (!n.frozen()) live[id].insert(r.head);
  }
  out.identities = ids.size();
  for (const auto& [id, heads] : live) {
    if (heads.size() <= 1) continue;
    ++out.violations;
    if (out.detail.empty()) {
      out.detail = "subhead " + std::to_string(id.sid) + "/" + std::to_string(id.ts) + " live at";
      for (NodeRef h : heads) out.detail += " " + ref_str(h);
    }
  }
  return out;
}

std::vector<std::int64_t> sublist_sizes(Cluster& c) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (const auto& e : c.server(i).owned_entries()) out.push_back(c.server(i).count_items(*e));
  return out;
}

OffsetReport check_offsets(Cluster& c) {
  OffsetReport rep;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (const auto& e : c.server(i).owned_entries()) {
      ++rep.entries;
      Counters* cells = e->counters.load();
      const std::int64_t diff = cells->in_flight();
      if (diff != e->offset.load()) {
        ++rep.mismatches;
        if (rep.detail.empty())
          rep.detail = "server " + std::to_string(i) + " key_min " + std::to_string(e->key_min) +
                       ": counters differ by " + std::to_string(diff) + ", offset " +
                       std::to_string(e->offset.load());
      }
    }
  }
  return rep;
}

}  // namespace dili::verify
