#pragma once

#include <atomic>
#include <cassert>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>

namespace dili {

// Fixed-capacity slab of T indexed by slot. Slot 0 is never handed out.
// Chunks are allocated lazily and never moved, so a slot's address is
// stable for the arena's lifetime. Freed slots go onto a Treiber stack
// whose head carries an ABA tag.
template <class T, unsigned kChunkBits = 12>
class SlabArena {
 public:
  static constexpr std::uint64_t kChunkSize = std::uint64_t{1} << kChunkBits;
  static constexpr std::uint64_t kMaxCapacity = (std::uint64_t{1} << 40) - 1;

  explicit SlabArena(std::uint64_t capacity)
      : capacity_(capacity),
        chunk_count_(capacity / kChunkSize + 1),
        chunks_(new std::atomic<Chunk*>[chunk_count_]) {
    assert(capacity <= kMaxCapacity);
    for (std::uint64_t i = 0; i < chunk_count_; ++i) chunks_[i].store(nullptr);
  }

  ~SlabArena() {
    for (std::uint64_t i = 0; i < chunk_count_; ++i) delete chunks_[i].load();
  }

  SlabArena(const SlabArena&) = delete;
  SlabArena& operator=(const SlabArena&) = delete;

  std::optional<std::uint64_t> allocate() {
    std::uint64_t head = free_head_.load();
    while (head_slot(head) != 0) {
      std::uint64_t s = head_slot(head);
      std::uint64_t next = chunk_of(s).free_next[s & kMask].load();
      if (free_head_.compare_exchange_weak(head, make_head(next, head_tag(head) + 1))) {
        live_.fetch_add(1);
        return s;
      }
    }
    std::uint64_t s = bump_.fetch_add(1);
    if (s > capacity_) return std::nullopt;
    ensure_chunk(s >> kChunkBits);
    live_.fetch_add(1);
    return s;
  }

  // Caller guarantees no reader can still reach the slot.
  void release(std::uint64_t s) {
    assert(s != 0 && s <= capacity_);
    std::uint64_t head = free_head_.load();
    do {
      chunk_of(s).free_next[s & kMask].store(head_slot(head));
    } while (!free_head_.compare_exchange_weak(head, make_head(s, head_tag(head) + 1)));
    live_.fetch_sub(1);
  }

  T& at(std::uint64_t s) const {
    assert(s != 0 && s <= capacity_);
    return chunk_of(s).items[s & kMask];
  }

  bool valid(std::uint64_t s) const {
    return s != 0 && s <= capacity_ && s < bump_.load() &&
           chunks_[s >> kChunkBits].load() != nullptr;
  }

  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t live() const { return live_.load(); }

 private:
  static constexpr std::uint64_t kMask = kChunkSize - 1;
  static constexpr std::uint64_t kSlotBits = 40;
  static constexpr std::uint64_t kSlotMask = (std::uint64_t{1} << kSlotBits) - 1;

  struct Chunk {
    T items[kChunkSize];
    std::atomic<std::uint64_t> free_next[kChunkSize];
  };

  static std::uint64_t head_slot(std::uint64_t h) { return h & kSlotMask; }
  static std::uint64_t head_tag(std::uint64_t h) { return h >> kSlotBits; }
  static std::uint64_t make_head(std::uint64_t s, std::uint64_t tag) {
    return (tag << kSlotBits) | s;
  }

  Chunk& chunk_of(std::uint64_t s) const {
    Chunk* c = chunks_[s >> kChunkBits].load();
    assert(c);
    return *c;
  }

  void ensure_chunk(std::uint64_t idx) {
    if (chunks_[idx].load()) return;
    std::lock_guard lock(grow_mu_);
    if (!chunks_[idx].load()) chunks_[idx].store(new Chunk());
  }

  const std::uint64_t capacity_;
  const std::uint64_t chunk_count_;
  std::unique_ptr<std::atomic<Chunk*>[]> chunks_;
  std::atomic<std::uint64_t> bump_{1};
  std::atomic<std::uint64_t> free_head_{0};
  std::atomic<std::uint64_t> live_{0};
  std::mutex grow_mu_;
};

}  // namespace dili
