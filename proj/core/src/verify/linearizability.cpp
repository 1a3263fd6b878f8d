#include "dili/verify/linearizability.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

namespace dili::verify {

namespace {

struct StateHash {
  std::size_t operator()(const std::vector<std::uint64_t>& v) const {
    std::size_t h = 1469598103934665603ull;
    for (auto w : v) h = (h ^ w) * 1099511628211ull;
    return h;
  }
};

class KeySearch {
 public:
  KeySearch(std::vector<HistoryEvent> ev, std::size_t max_states)
      : ev_(std::move(ev)), words_((ev_.size() + 64) / 64 + 1), max_states_(max_states) {
    std::sort(ev_.begin(), ev_.end(),
              [](const auto& a, const auto& b) { return a.invoke < b.invoke; });
  }

  std::optional<bool> run(bool present) {
    std::vector<std::uint64_t> done(words_, 0);
    bool ok = dfs(done, present, 0);
    if (exhausted_) return std::nullopt;
    return ok;
  }

 private:
  static bool test(const std::vector<std::uint64_t>& b, std::size_t i) {
    return (b[i / 64] >> (i % 64)) & 1u;
  }
  static void flip(std::vector<std::uint64_t>& b, std::size_t i) { b[i / 64] ^= 1ull << (i % 64); }

  // Outcome of applying ev to the abstract state, or nullopt if the
  // recorded result is impossible there.
  static std::optional<bool> apply(const HistoryEvent& e, bool present) {
    switch (e.op) {
      case OpKind::find:
        if (e.result != present) return std::nullopt;
        return present;
      case OpKind::insert:
        if (e.result == present) return std::nullopt;
        return true;
      case OpKind::remove:
        if (e.result != present) return std::nullopt;
        return false;
    }
    return std::nullopt;
  }

  bool dfs(std::vector<std::uint64_t>& done, bool present, std::size_t count) {
    if (count == ev_.size()) return true;
    if (exhausted_) return false;
    // The last word records the abstract state alongside the linearized set.
    done.back() = present;
    if (!seen_.insert(done).second) return false;
    if (seen_.size() > max_states_) {
      exhausted_ = true;
      return false;
    }
    std::uint64_t horizon = UINT64_MAX;
    for (std::size_t i = 0; i < ev_.size(); ++i)
      if (!test(done, i)) horizon = std::min(horizon, ev_[i].response);
    // A candidate that leaves the state unchanged can always go first: any
    // valid order stays valid with it moved to the front. No branching.
    for (std::size_t i = 0; i < ev_.size() && ev_[i].invoke < horizon; ++i) {
      if (test(done, i)) continue;
      auto next = apply(ev_[i], present);
      if (!next || *next != present) continue;
      flip(done, i);
      bool ok = dfs(done, present, count + 1);
      flip(done, i);
      return ok;
    }
    for (std::size_t i = 0; i < ev_.size() && ev_[i].invoke < horizon; ++i) {
      if (test(done, i)) continue;
      auto next = apply(ev_[i], present);
      if (!next) continue;
      flip(done, i);
      bool ok = dfs(done, *next, count + 1);
      flip(done, i);
      if (ok) return true;
      if (exhausted_) return false;
    }
    return false;
  }

  std::vector<HistoryEvent> ev_;
  std::size_t words_;
  std::size_t max_states_;
  std::unordered_set<std::vector<std::uint64_t>, StateHash> seen_;
  bool exhausted_ = false;
};

}  // namespace

const char* verdict_name(VerdictKind k) {
  switch (k) {
    case VerdictKind::ok:
      return "ok";
    case VerdictKind::violation:
      return "violation";
    case VerdictKind::unchecked:
      return "unchecked";
  }
  return "?";
}

std::optional<bool> linearizable_key(const std::vector<HistoryEvent>& events,
                                     bool initially_present, std::size_t max_states) {
  return KeySearch(events, max_states).run(initially_present);
}

Verdict check_linearizable(const std::vector<HistoryEvent>& history, const CheckOptions& opts) {
  Verdict v;
  std::map<Key, std::vector<HistoryEvent>> by_key;
  for (const auto& e : history) {
    if (e.invoke >= e.response) {
      v.kind = VerdictKind::unchecked;
      v.detail = "malformed event: " + to_string(e);
      return v;
    }
    by_key[e.key].push_back(e);
  }
  const std::set<Key> initial(opts.initially_present.begin(), opts.initially_present.end());
  v.keys = by_key.size();
  std::size_t oversized = 0;
  for (auto& [key, events] : by_key) {
    if (events.size() > opts.max_ops_per_key) {
      ++v.unchecked_keys;
      ++oversized;
      continue;
    }
    const bool present = initial.count(key) > 0;
    auto r = linearizable_key(events, present, opts.max_states);
    if (!r) {
      ++v.unchecked_keys;
      continue;
    }
    if (*r) continue;

    // Greedy shrink to a 1-minimal violating window.
    std::vector<HistoryEvent> window = events;
    for (std::size_t i = 0; i < window.size();) {
      auto trial = window;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
      auto t = linearizable_key(trial, present, opts.max_states);
      if (t && !*t)
        window = std::move(trial);
      else
        ++i;
    }
    std::sort(window.begin(), window.end(),
              [](const auto& a, const auto& b) { return a.invoke < b.invoke; });
    v.kind = VerdictKind::violation;
    v.key = key;
    v.window = std::move(window);
    v.detail = "key " + std::to_string(key) + " has no linearization (" +
               std::to_string(events.size()) + " events, initially " +
               (present ? "present" : "absent") + ")";
    return v;
  }
  if (v.unchecked_keys > 0) {
    v.kind = VerdictKind::unchecked;
    v.detail = std::to_string(oversized) + " key partitions over the size limit, " +
               std::to_string(v.unchecked_keys - oversized) + " over the search budget";
  }
  return v;
}

}  // namespace dili::verify
