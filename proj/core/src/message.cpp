#include "dili/message.hpp"

#include <type_traits>

namespace dili {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <class T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void put(bool b) { put<std::uint8_t>(b ? 1 : 0); }
  void put(Status s) { put(static_cast<std::uint8_t>(s)); }
  void put(NodeRef r) { put(r.raw()); }
  void put(ItemId id) {
    put(id.sid);
    put(id.ts);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <class T>
  bool get(T& v) {
    using U = std::make_unsigned_t<T>;
    if (in_.size() - pos_ < sizeof(T)) return false;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(U{in_[pos_ + i]} << (8 * i));
    pos_ += sizeof(T);
    v = static_cast<T>(u);
    return true;
  }
  bool get(bool& b) {
    std::uint8_t v;
    if (!get(v) || v > 1) return false;
    b = v == 1;
    return true;
  }
  bool get(Status& s) {
    std::uint8_t v;
    if (!get(v) || v > static_cast<std::uint8_t>(Status::gossip)) return false;
    s = static_cast<Status>(v);
    return true;
  }
  bool get(NodeRef& r) {
    std::uint64_t raw;
    if (!get(raw)) return false;
    r = NodeRef::from_raw(raw);
    return true;
  }
  bool get(ItemId& id) { return get(id.sid) && get(id.ts); }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <class T>
constexpr bool tag_holds(Tag t) {
  switch (t) {
    case Tag::find:
    case Tag::insert:
    case Tag::remove:
    case Tag::delete_at:
      return std::is_same_v<T, ClientOp>;
    case Tag::move_sh:
      return std::is_same_v<T, MoveShMsg>;
    case Tag::move_item:
      return std::is_same_v<T, MoveItemMsg>;
    case Tag::rep_insert:
      return std::is_same_v<T, RepInsertMsg>;
    case Tag::rep_delete:
      return std::is_same_v<T, RepDeleteMsg>;
    case Tag::replay_resp_insert:
      return std::is_same_v<T, ReplayInsertResp>;
    case Tag::replay_resp_delete:
      return std::is_same_v<T, ReplayDeleteResp>;
    case Tag::register_sublist:
    case Tag::switch_st:
    case Tag::switch_server:
      return std::is_same_v<T, KeyRefMsg>;
    case Tag::register_merged:
      return std::is_same_v<T, KeyMsg>;
    case Tag::ack:
      return std::is_same_v<T, AckMsg>;
    case Tag::bool_resp:
      return std::is_same_v<T, BoolResp>;
    case Tag::ref_resp:
      return std::is_same_v<T, RefResp>;
  }
  return false;
}

bool valid_tag(std::uint8_t t) { return t >= 1 && t <= 17; }

void write_body(Writer& w, Tag tag, const Payload& body) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ClientOp>) {
          w.put(p.key);
          if (p.delegated || tag == Tag::delete_at) {
            w.put(p.ref);
            w.put(p.hops);
          }
        } else if constexpr (std::is_same_v<T, MoveShMsg>) {
          w.put(p.subhead);
          w.put(p.key_min);
          w.put(p.key_max);
          w.put(p.size_estimate);
        } else if constexpr (std::is_same_v<T, MoveItemMsg>) {
          w.put(p.start);
          w.put(p.prev);
          w.put(p.key);
          w.put(p.item);
          w.put(p.marked);
          w.put(p.link);
        } else if constexpr (std::is_same_v<T, RepInsertMsg>) {
          w.put(p.start);
          w.put(p.prev);
          w.put(p.key);
          w.put(p.item);
          w.put(p.old_location);
        } else if constexpr (std::is_same_v<T, RepDeleteMsg>) {
          w.put(p.start);
          w.put(p.item);
          w.put(p.old_location);
        } else if constexpr (std::is_same_v<T, ReplayInsertResp>) {
          w.put(p.status);
          w.put(p.old_location);
          w.put(p.new_ref);
        } else if constexpr (std::is_same_v<T, ReplayDeleteResp>) {
          w.put(p.status);
          w.put(p.old_location);
        } else if constexpr (std::is_same_v<T, KeyRefMsg>) {
          w.put(p.key);
          w.put(p.ref);
        } else if constexpr (std::is_same_v<T, KeyMsg>) {
          w.put(p.key);
        } else if constexpr (std::is_same_v<T, AckMsg>) {
          w.put(p.status);
          w.put(p.value);
        } else if constexpr (std::is_same_v<T, BoolResp>) {
          w.put(p.status);
          w.put(p.value);
          w.put(p.hops);
        } else if constexpr (std::is_same_v<T, RefResp>) {
          w.put(p.status);
          w.put(p.ref);
        }
      },
      body);
}

template <class T>
std::optional<Payload> read_fixed(Reader& r, T p, bool ok) {
  if (!ok || r.remaining() != 0) return std::nullopt;
  return Payload{p};
}

std::optional<Payload> read_body(Reader& r, Tag tag) {
  switch (tag) {
    case Tag::find:
    case Tag::insert:
    case Tag::remove:
    case Tag::delete_at: {
      ClientOp p;
      if (!r.get(p.key)) return std::nullopt;
      if (r.remaining() == 0 && tag != Tag::delete_at) return Payload{p};
      p.delegated = true;
      return read_fixed(r, p, r.get(p.ref) && r.get(p.hops));
    }
    case Tag::move_sh: {
      MoveShMsg p;
      bool ok = r.get(p.subhead) && r.get(p.key_min) && r.get(p.key_max) && r.get(p.size_estimate);
      return read_fixed(r, p, ok);
    }
    case Tag::move_item: {
      MoveItemMsg p;
      bool ok = r.get(p.start) && r.get(p.prev) && r.get(p.key) && r.get(p.item) &&
                r.get(p.marked) && r.get(p.link);
      return read_fixed(r, p, ok);
    }
    case Tag::rep_insert: {
      RepInsertMsg p;
      bool ok = r.get(p.start) && r.get(p.prev) && r.get(p.key) && r.get(p.item) &&
                r.get(p.old_location);
      return read_fixed(r, p, ok);
    }
    case Tag::rep_delete: {
      RepDeleteMsg p;
      bool ok = r.get(p.start) && r.get(p.item) && r.get(p.old_location);
      return read_fixed(r, p, ok);
    }
    case Tag::replay_resp_insert: {
      ReplayInsertResp p;
      bool ok = r.get(p.status) && r.get(p.old_location) && r.get(p.new_ref);
      return read_fixed(r, p, ok);
    }
    case Tag::replay_resp_delete: {
      ReplayDeleteResp p;
      bool ok = r.get(p.status) && r.get(p.old_location);
      return read_fixed(r, p, ok);
    }
    case Tag::register_sublist:
    case Tag::switch_st:
    case Tag::switch_server: {
      KeyRefMsg p;
      bool ok = r.get(p.key) && r.get(p.ref);
      return read_fixed(r, p, ok);
    }
    case Tag::register_merged: {
      KeyMsg p;
      return read_fixed(r, p, r.get(p.key));
    }
    case Tag::ack: {
      AckMsg p;
      return read_fixed(r, p, r.get(p.status) && r.get(p.value));
    }
    case Tag::bool_resp: {
      BoolResp p;
      return read_fixed(r, p, r.get(p.status) && r.get(p.value) && r.get(p.hops));
    }
    case Tag::ref_resp: {
      RefResp p;
      return read_fixed(r, p, r.get(p.status) && r.get(p.ref));
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view tag_name(Tag t) {
  switch (t) {
    case Tag::find: return "FIND";
    case Tag::insert: return "INSERT";
    case Tag::remove: return "REMOVE";
    case Tag::delete_at: return "DELETE_AT";
    case Tag::move_sh: return "MOVE_SH";
    case Tag::move_item: return "MOVE_ITEM";
    case Tag::rep_insert: return "REP_INSERT";
    case Tag::rep_delete: return "REP_DELETE";
    case Tag::replay_resp_insert: return "REPLAY_RESP_INSERT";
    case Tag::replay_resp_delete: return "REPLAY_RESP_DELETE";
    case Tag::register_sublist: return "REGISTER_SUBLIST";
    case Tag::switch_st: return "SWITCH_ST";
    case Tag::switch_server: return "SWITCH_SERVER";
    case Tag::register_merged: return "REGISTER_MERGED";
    case Tag::ack: return "ACK";
    case Tag::bool_resp: return "BOOL_RESP";
    case Tag::ref_resp: return "REF_RESP";
  }
  return "UNKNOWN";
}

bool well_formed(const Message& m) {
  return std::visit([&](const auto& p) { return tag_holds<std::decay_t<decltype(p)>>(m.tag); },
                    m.body);
}

void encode_into(const Message& m, std::vector<std::uint8_t>& out) {
  const std::size_t base = out.size();
  Writer w(out);
  w.put(std::uint32_t{0});
  w.put(static_cast<std::uint8_t>(m.tag));
  w.put(m.request_id);
  write_body(w, m.tag, m.body);
  auto len = static_cast<std::uint32_t>(out.size() - base - kFrameHeader);
  for (std::size_t i = 0; i < 4; ++i) out[base + i] = static_cast<std::uint8_t>(len >> (8 * i));
}

std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  out.reserve(64);
  encode_into(m, out);
  return out;
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeader) return 0;
  std::uint32_t len = 0;
  for (std::size_t i = 0; i < 4; ++i) len |= std::uint32_t{bytes[i]} << (8 * i);
  if (len < kMessageHeader || len > kMaxFrame) return std::nullopt;
  return kFrameHeader + len;
}

std::optional<Message> decode(std::span<const std::uint8_t> frame) {
  auto total = frame_size(frame);
  if (!total || *total == 0 || *total != frame.size()) return std::nullopt;
  Reader r(frame.subspan(kFrameHeader));
  std::uint8_t tag;
  Message m;
  if (!r.get(tag) || !valid_tag(tag) || !r.get(m.request_id)) return std::nullopt;
  m.tag = static_cast<Tag>(tag);
  auto body = read_body(r, m.tag);
  if (!body) return std::nullopt;
  m.body = std::move(*body);
  return m;
}

}  // namespace dili
