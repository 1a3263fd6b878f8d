#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <utility>
#include <vector>

namespace dili {

// Process-wide epoch tracker. Readers pin the current epoch for the
// duration of a Guard; an object retired at epoch e may be freed once the
// global epoch reaches e + 2. Guards nest.
class EpochDomain {
 public:
  static constexpr std::uint64_t kIdle = ~std::uint64_t{0};

  class Guard {
   public:
    Guard() : domain_(&EpochDomain::instance()) { domain_->enter(); }
    ~Guard() {
      if (domain_) domain_->exit();
    }
    Guard(Guard&& o) noexcept : domain_(std::exchange(o.domain_, nullptr)) {}
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;
    Guard& operator=(Guard&&) = delete;

   private:
    EpochDomain* domain_;
  };

  static EpochDomain& instance();

  std::uint64_t current() const noexcept { return global_.load(); }

  // Advances the global epoch if every pinned thread has observed it.
  bool try_advance();

  // Epochs retired at or below this value are unreachable.
  std::uint64_t safe_epoch() const noexcept {
    std::uint64_t e = global_.load();
    return e >= 2 ? e - 2 : 0;
  }

  bool pinned_by_caller() const;

 private:
  struct Record {
    std::atomic<std::uint64_t> epoch{kIdle};
    std::atomic<bool> in_use{false};
    Record* next = nullptr;
    int nesting = 0;
  };

  EpochDomain() = default;
  Record* local();
  void enter();
  void exit();

  std::atomic<std::uint64_t> global_{2};
  std::atomic<Record*> records_{nullptr};

  friend struct RecordHolder;
};

using Guard = EpochDomain::Guard;

// Deferred-free list owned by one data structure. Thread-safe.
template <class T>
class Limbo {
 public:
  void retire(T item) {
    auto& d = EpochDomain::instance();
    std::lock_guard lock(mu_);
    items_.emplace_back(d.current(), std::move(item));
  }

  // Hands every reclaimable item to `release`.
  template <class F>
  std::size_t collect(F&& release) {
    auto& d = EpochDomain::instance();
    d.try_advance();
    std::vector<T> ready;
    {
      std::lock_guard lock(mu_);
      std::uint64_t safe = d.safe_epoch();
      std::size_t keep = 0;
      for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].first <= safe)
          ready.push_back(std::move(items_[i].second));
        else if (keep++ != i)
          items_[keep - 1] = std::move(items_[i]);
      }
      items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(keep),
                   items_.end());
    }
    for (auto& item : ready) release(item);
    return ready.size();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

  // Unconditional; only valid once no reader can exist.
  template <class F>
  void drain(F&& release) {
    std::lock_guard lock(mu_);
    for (auto& [epoch, item] : items_) release(item);
    items_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::pair<std::uint64_t, T>> items_;
};

}  // namespace dili
