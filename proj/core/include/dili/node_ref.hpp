#pragma once

#include <cassert>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>

namespace dili {

using ServerId = std::uint16_t;
using Key = std::int64_t;
using Timestamp = std::uint64_t;

inline constexpr Key kSubheadKey = std::numeric_limits<Key>::min();
inline constexpr Key kSubtailKey = std::numeric_limits<Key>::max();
// Unset keyMax on non-subtail nodes.
inline constexpr Key kUnsetKeyMax = kSubheadKey;

inline constexpr bool is_client_key(Key k) noexcept {
  return k != kSubheadKey && k != kSubtailKey;
}

// Server ids at or above this value are reserved tags, never real servers.
inline constexpr ServerId kMaxServerId = 0xFFFD;
inline constexpr ServerId kPendingServer = 0xFFFE;
inline constexpr ServerId kDescriptorServer = 0xFFFF;

// server_id in bits 63-48, arena slot in bits 47-1, mark in bit 0.
class NodeRef {
 public:
  static constexpr unsigned kServerShift = 48;
  static constexpr std::uint64_t kMaxSlot = (std::uint64_t{1} << 47) - 1;

  constexpr NodeRef() noexcept = default;

  static constexpr NodeRef from_raw(std::uint64_t raw) noexcept {
    NodeRef r;
    r.raw_ = raw;
    return r;
  }

  static constexpr NodeRef pack(ServerId server, std::uint64_t slot,
                                bool mark = false) noexcept {
    assert(slot <= kMaxSlot);
    return from_raw((std::uint64_t{server} << kServerShift) | (slot << 1) |
                    (mark ? 1u : 0u));
  }

  constexpr std::uint64_t raw() const noexcept { return raw_; }
  constexpr ServerId server() const noexcept {
    return static_cast<ServerId>(raw_ >> kServerShift);
  }
  constexpr std::uint64_t slot() const noexcept {
    return (raw_ >> 1) & kMaxSlot;
  }
  constexpr bool marked() const noexcept { return (raw_ & 1u) != 0; }
  constexpr bool is_null() const noexcept { return (raw_ & ~std::uint64_t{1}) == 0; }
  explicit constexpr operator bool() const noexcept { return !is_null(); }

  constexpr NodeRef with_mark(bool m) const noexcept {
    return from_raw(m ? (raw_ | 1u) : (raw_ & ~std::uint64_t{1}));
  }
  constexpr NodeRef unmarked() const noexcept { return with_mark(false); }

  constexpr bool is_descriptor() const noexcept {
    return server() == kDescriptorServer;
  }
  constexpr bool is_pending() const noexcept {
    return server() == kPendingServer;
  }

  friend constexpr bool operator==(NodeRef, NodeRef) noexcept = default;

 private:
  std::uint64_t raw_ = 0;
};

inline constexpr NodeRef kNullRef{};
// Placeholder stored into newLoc while a copy request is outstanding.
inline constexpr NodeRef kPendingRef = NodeRef::pack(kPendingServer, 1);

// Global identity of a list item; ordered by timestamp first.
struct ItemId {
  ServerId sid = 0;
  Timestamp ts = 0;

  friend constexpr bool operator==(const ItemId&, const ItemId&) = default;
  friend constexpr std::strong_ordering operator<=>(const ItemId& a,
                                                    const ItemId& b) {
    if (auto c = a.ts <=> b.ts; c != 0) return c;
    return a.sid <=> b.sid;
  }
};

}  // namespace dili

template <>
struct std::hash<dili::NodeRef> {
  std::size_t operator()(dili::NodeRef r) const noexcept {
    return std::hash<std::uint64_t>{}(r.raw());
  }
};
