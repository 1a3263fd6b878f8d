#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "dili/node_ref.hpp"

namespace dili {

enum class Tag : std::uint8_t {
  find = 1,
  insert = 2,
  remove = 3,
  delete_at = 4,
  move_sh = 5,
  move_item = 6,
  rep_insert = 7,
  rep_delete = 8,
  replay_resp_insert = 9,
  replay_resp_delete = 10,
  register_sublist = 11,
  switch_st = 12,
  switch_server = 13,
  register_merged = 14,
  ack = 15,
  bool_resp = 16,
  ref_resp = 17,
};

std::string_view tag_name(Tag t);

enum class Status : std::uint8_t {
  ok = 0,
  nack = 1,
  not_ready = 2,
  error = 3,
  hop_limit = 4,
  resource = 5,
  gossip = 6,
};

// FIND/INSERT/REMOVE from a client carry only the key. Delegated forms and
// DELETE_AT add the target ref and the hop count so far.
struct ClientOp {
  Key key = 0;
  NodeRef ref;
  std::uint8_t hops = 0;
  bool delegated = false;
  friend bool operator==(const ClientOp&, const ClientOp&) = default;
};

struct MoveShMsg {
  ItemId subhead;
  Key key_min = 0;
  Key key_max = 0;
  std::int64_t size_estimate = 0;
  friend bool operator==(const MoveShMsg&, const MoveShMsg&) = default;
};

// key == kSubtailKey copies the subtail's link word instead of an item.
struct MoveItemMsg {
  NodeRef start;
  ItemId prev;
  Key key = 0;
  ItemId item;
  bool marked = false;
  NodeRef link;
  friend bool operator==(const MoveItemMsg&, const MoveItemMsg&) = default;
};

struct RepInsertMsg {
  NodeRef start;
  ItemId prev;
  Key key = 0;
  ItemId item;
  NodeRef old_location;
  friend bool operator==(const RepInsertMsg&, const RepInsertMsg&) = default;
};

struct RepDeleteMsg {
  NodeRef start;
  ItemId item;
  NodeRef old_location;
  friend bool operator==(const RepDeleteMsg&, const RepDeleteMsg&) = default;
};

struct ReplayInsertResp {
  Status status = Status::ok;
  NodeRef old_location;
  NodeRef new_ref;
  friend bool operator==(const ReplayInsertResp&, const ReplayInsertResp&) = default;
};

struct ReplayDeleteResp {
  Status status = Status::ok;
  NodeRef old_location;
  friend bool operator==(const ReplayDeleteResp&, const ReplayDeleteResp&) = default;
};

// REGISTER_SUBLIST, SWITCH_ST, SWITCH_SERVER.
struct KeyRefMsg {
  Key key = 0;
  NodeRef ref;
  friend bool operator==(const KeyRefMsg&, const KeyRefMsg&) = default;
};

// REGISTER_MERGED.
struct KeyMsg {
  Key key = 0;
  friend bool operator==(const KeyMsg&, const KeyMsg&) = default;
};

struct AckMsg {
  Status status = Status::ok;
  std::int64_t value = 0;
  friend bool operator==(const AckMsg&, const AckMsg&) = default;
};

struct BoolResp {
  Status status = Status::ok;
  bool value = false;
  std::uint8_t hops = 0;
  friend bool operator==(const BoolResp&, const BoolResp&) = default;
};

struct RefResp {
  Status status = Status::ok;
  NodeRef ref;
  friend bool operator==(const RefResp&, const RefResp&) = default;
};

using Payload = std::variant<ClientOp, MoveShMsg, MoveItemMsg, RepInsertMsg, RepDeleteMsg,
                             ReplayInsertResp, ReplayDeleteResp, KeyRefMsg, KeyMsg, AckMsg,
                             BoolResp, RefResp>;

struct Message {
  Tag tag = Tag::ack;
  std::uint64_t request_id = 0;
  Payload body;
  friend bool operator==(const Message&, const Message&) = default;
};

inline constexpr std::size_t kFrameHeader = 4;       // length prefix
inline constexpr std::size_t kMessageHeader = 1 + 8;  // tag + request id
inline constexpr std::size_t kMaxFrame = 1 << 16;

// Whether body holds the alternative the tag requires.
bool well_formed(const Message& m);

// [u32 LE length of what follows][u8 tag][u64 request id][payload].
std::vector<std::uint8_t> encode(const Message& m);
void encode_into(const Message& m, std::vector<std::uint8_t>& out);

// Rejects bad tags, wrong payload sizes, and truncation.
std::optional<Message> decode(std::span<const std::uint8_t> frame);

// Total frame size if the length prefix is available and sane; 0 when more
// bytes are needed; nullopt for an oversize or undersize length.
std::optional<std::size_t> frame_size(std::span<const std::uint8_t> bytes);

}  // namespace dili
