#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dili/clock.hpp"
#include "dili/counter.hpp"
#include "dili/epoch.hpp"
#include "dili/message.hpp"
#include "dili/node.hpp"
#include "dili/registry.hpp"
#include "dili/sublist.hpp"
#include "dili/transport.hpp"

namespace dili {

struct NewEntry {
  std::shared_ptr<Entry> entry;
};
enum class SplitFailure { item_deleted, capacity, precondition };
struct SplitFailed {
  SplitFailure reason;
};
using SplitOutcome = std::variant<NewEntry, SplitFailed>;

enum class MoveResult { moved, abandoned, precondition };

struct BackgroundOptions {
  std::chrono::microseconds backoff_min{20};
  std::chrono::microseconds backoff_max{2000};
  int move_sh_attempts = 5;
  int broadcast_attempts = 50;
  // Keep the frozen source copy's nodes instead of reclaiming them.
  bool retain_moved_copy = false;
};

enum class BackgroundKind { split, move, merge };

struct OpSample {
  BackgroundKind kind;
  double millis;
  std::int64_t items;
};

struct BackgroundStats {
  std::atomic<std::uint64_t> splits{0};
  std::atomic<std::uint64_t> split_failures{0};
  std::atomic<std::uint64_t> moves{0};
  std::atomic<std::uint64_t> moves_abandoned{0};
  std::atomic<std::uint64_t> merges{0};
  std::atomic<std::uint64_t> spin_rounds{0};
  std::atomic<std::uint64_t> replicate_failures{0};
  std::atomic<std::uint64_t> freeze_quiescence_breaches{0};

  void record(BackgroundKind kind, double millis, std::int64_t items);
  std::vector<OpSample> samples() const;

 private:
  mutable std::mutex mu_;
  std::vector<OpSample> samples_;
};

class ShutdownInProgress : public std::runtime_error {
 public:
  ShutdownInProgress() : std::runtime_error("shutdown in progress") {}
};

struct ServerParts {
  ServerId me;
  NodeStore& store;
  Registry& registry;
  Clock& clock;
  CounterPool& counters;
  Sublist& sublist;
};

// Split, Move, Switch, Merge on the owning server plus the handlers peers
// invoke while those run. Owner-side operations are not reentrant: the
// runtime drives them from a single maintenance thread.
class Background final : public ReplicationSink {
 public:
  Background(ServerParts parts, Transport& transport, std::vector<ServerId> peers,
             BackgroundOptions options = {});
  ~Background() override;

  SplitOutcome split(Entry& entry, NodeRef split_node);
  MoveResult move(Entry& entry, ServerId dest);
  std::shared_ptr<Entry> merge(Entry& left, Entry& right);

  bool switch_next_st(NodeRef left_subtail, NodeRef new_subhead);
  // Links a copy of `item` after `prev` in key order, skipping older copies
  // of the same key. Returns the existing copy if one is already present.
  NodeRef replay(NodeRef prev, Key key, ItemId item, bool marked);

  RefResp move_sh_recv(const MoveShMsg& m);
  RefResp move_item_recv(const MoveItemMsg& m);
  ReplayInsertResp rep_insert_recv(const RepInsertMsg& m);
  ReplayDeleteResp rep_delete_recv(const RepDeleteMsg& m);
  bool register_sublist_recv(Key key_min, NodeRef subhead);
  // ok + null: patched; ok + ref: continue at ref; not_ready: retry.
  RefResp switch_st_recv(Key key_min, NodeRef new_subhead);
  bool switch_server_recv(Key key_max, NodeRef new_subhead);
  bool register_merged_recv(Key key_mid);

  void replicate_insert(const InsertReplicate& r) override;
  void replicate_delete(const DeleteReplicate& r) override;

  // Frees frozen source copies whose grace period has elapsed.
  void reclaim();
  void stop() { stopping_.store(true); }

  BackgroundStats& stats() { return stats_; }
  const std::vector<ServerId>& peers() const { return peers_; }
  std::size_t staged() const;
  // True when `head` is a staged (not yet attached) subhead whose range
  // holds `key`.
  bool staged_covers(Key key, NodeRef head) const;

 private:
  struct Staged {
    Key key_min;
    Key key_max;
    NodeRef subhead;
    NodeRef subtail;
    Counters* counters;
    std::int64_t size_estimate;
  };

  class Backoff;

  Node& node(NodeRef r) const { return parts_.store.get(r); }
  bool local(NodeRef r) const { return parts_.store.is_local(r); }
  bool owned(const Entry& e) const;

  Message call(ServerId dest, Tag tag, Payload body);
  NodeRef move_item_sync(ServerId dest, const MoveItemMsg& m);
  void rep_delete_sync(ServerId dest, const RepDeleteMsg& m);
  void broadcast(Tag tag, Payload body, std::optional<ServerId> last);
  void switch_over(Entry& entry, ServerId dest, NodeRef new_subhead);
  std::optional<NodeRef> locate(NodeRef start, ItemId id) const;
  std::pair<std::int64_t, std::int64_t> wait_conserved(Counters* a, Counters* b,
                                                      std::int64_t total);
  void retire_copy(NodeRef subhead, NodeRef subtail);

  ServerParts parts_;
  Transport& transport_;
  std::vector<ServerId> peers_;
  BackgroundOptions options_;
  BackgroundStats stats_;
  std::atomic<bool> stopping_{false};

  // Serializes read-modify-write registry updates requested by peers with
  // the owner's own registry publications.
  std::mutex recv_mu_;
  mutable std::mutex staged_mu_;
  std::map<Key, Staged> staged_;  // by key_max
  Limbo<std::pair<NodeRef, NodeRef>> moved_copies_;
};

}  // namespace dili
