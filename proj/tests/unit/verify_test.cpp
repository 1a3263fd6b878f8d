#include <gtest/gtest.h>

#include <map>
#include <thread>

#include "dili/verify/history.hpp"
#include "dili/verify/linearizability.hpp"
#include "dili/verify/rdcss_model.hpp"
#include "dili/verify/workload.hpp"

namespace dili::verify {
namespace {

HistoryEvent ev(std::uint32_t client, OpKind op, Key key, std::uint64_t inv, std::uint64_t resp,
                bool result) {
  return {client, op, key, inv, resp, result};
}

TEST(Checker, SequentialHistoryIsLinearizable) {
  const std::vector<HistoryEvent> h = {
      ev(0, OpKind::insert, 5, 1, 2, true),
      ev(0, OpKind::find, 5, 3, 4, true),
      ev(0, OpKind::remove, 5, 5, 6, true),
      ev(0, OpKind::find, 5, 7, 8, false),
  };
  EXPECT_EQ(check_linearizable(h).kind, VerdictKind::ok);
}

TEST(Checker, TwoOverlappingTrueInsertsAreAViolation) {
  const std::vector<HistoryEvent> h = {
      ev(0, OpKind::insert, 5, 1, 4, true),
      ev(1, OpKind::insert, 5, 2, 3, true),
  };
  const Verdict v = check_linearizable(h);
  EXPECT_EQ(v.kind, VerdictKind::violation);
  EXPECT_EQ(v.key, std::optional<Key>(5));
  EXPECT_FALSE(v.window.empty());
}

TEST(Checker, OverlapAllowsEitherOrder) {
  // find(5)=true overlapping the insert may take effect after it.
  const std::vector<HistoryEvent> h = {
      ev(0, OpKind::insert, 5, 1, 4, true),
      ev(1, OpKind::find, 5, 2, 3, true),
      ev(1, OpKind::find, 5, 5, 6, true),
  };
  EXPECT_EQ(check_linearizable(h).kind, VerdictKind::ok);
  // ...but not once the insert has responded and nothing removed it.
  const std::vector<HistoryEvent> stale = {
      ev(0, OpKind::insert, 5, 1, 2, true),
      ev(1, OpKind::find, 5, 3, 4, false),
  };
  EXPECT_EQ(check_linearizable(stale).kind, VerdictKind::violation);
}

TEST(Checker, InitialStateIsHonored) {
  const std::vector<HistoryEvent> h = {ev(0, OpKind::remove, 9, 1, 2, true)};
  EXPECT_EQ(check_linearizable(h).kind, VerdictKind::violation);
  CheckOptions o;
  o.initially_present = {9};
  EXPECT_EQ(check_linearizable(h, o).kind, VerdictKind::ok);
}

TEST(Checker, KeysArePartitioned) {
  const std::vector<HistoryEvent> h = {
      ev(0, OpKind::insert, 1, 1, 2, true),
      ev(1, OpKind::insert, 2, 1, 2, true),
      ev(0, OpKind::find, 2, 3, 4, true),
  };
  const Verdict v = check_linearizable(h);
  EXPECT_EQ(v.kind, VerdictKind::ok);
  EXPECT_EQ(v.keys, 2u);
}

TEST(Checker, OversizedPartitionIsUncheckedNotOk) {
  std::vector<HistoryEvent> h;
  for (std::uint64_t i = 0; i < 40; ++i) h.push_back(ev(static_cast<std::uint32_t>(i), OpKind::find, 1, 1, 100, false));
  CheckOptions o;
  o.max_ops_per_key = 16;
  const Verdict v = check_linearizable(h, o);
  EXPECT_EQ(v.kind, VerdictKind::unchecked);
  EXPECT_EQ(v.unchecked_keys, 1u);
}

// Brute force over all orders consistent with real time, for tiny histories.
bool brute_force(std::vector<HistoryEvent> h, bool present) {
  std::sort(h.begin(), h.end(), [](auto& a, auto& b) { return a.invoke < b.invoke; });
  std::vector<std::size_t> idx(h.size());
  std::iota(idx.begin(), idx.end(), 0);
  do {
    bool ok = true;
    for (std::size_t i = 0; i < idx.size() && ok; ++i)
      for (std::size_t j = i + 1; j < idx.size() && ok; ++j)
        if (h[idx[j]].response < h[idx[i]].invoke) ok = false;
    bool s = present;
    for (std::size_t i = 0; i < idx.size() && ok; ++i) {
      const auto& e = h[idx[i]];
      const bool want = e.op == OpKind::find ? s : e.op == OpKind::insert ? !s : s;
      if (e.result != want) ok = false;
      if (e.op == OpKind::insert && e.result) s = true;
      if (e.op == OpKind::remove && e.result) s = false;
    }
    if (ok) return true;
  } while (std::next_permutation(idx.begin(), idx.end()));
  return false;
}

TEST(Checker, AgreesWithBruteForceOnRandomTinyHistories) {
  std::mt19937_64 rng(21);
  int violations = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::vector<HistoryEvent> h;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      const std::uint64_t a = rng() % 20;
      const std::uint64_t b = a + 1 + rng() % 6;
      h.push_back(ev(static_cast<std::uint32_t>(i), static_cast<OpKind>(rng() % 3), 3, a * 2, b * 2 + 1,
                     rng() % 2 == 1));
    }
    const bool present = rng() % 2;
    const auto got = linearizable_key(h, present, 1u << 20);
    ASSERT_TRUE(got.has_value());
    ASSERT_EQ(*got, brute_force(h, present)) << "trial " << trial;
    violations += !*got;
  }
  EXPECT_GT(violations, 100);
}

TEST(RdcssModel, TwoRdcssOnOneWordAllSchedulesPass) {
  using K = ModelOpKind;
  ModelProgram p;
  p.initial = {2, 0, 10};
  p.threads = {
      {ModelOp{K::rdcss, 0, 2, 10, 4}},
      {ModelOp{K::rdcss, 0, 2, 10, 6}, ModelOp{K::read, 0, 0, 0, 0}},
      {ModelOp{K::cas, 2, 10, 0, 12}},
  };
  const ModelReport r = check_rdcss_model(p);
  EXPECT_TRUE(r.exhaustive);
  EXPECT_GT(r.schedules, 10u);
  EXPECT_EQ(r.failures, 0u) << r.detail;
}

TEST(RdcssModel, GeneratedProgramsStayWithinThreeByTwo) {
  for (const auto& p : rdcss_model_programs(5, 20)) {
    ASSERT_LE(p.threads.size(), 3u) << describe(p);
    for (const auto& t : p.threads) ASSERT_LE(t.size(), 2u) << describe(p);
  }
}

TEST(Workload, SameSeedSameStreams) {
  WorkloadSpec s;
  s.keys = 1000;
  s.ops = 4000;
  s.seed = 7;
  EXPECT_EQ(load_keys(s), load_keys(s));
  for (std::size_t t = 0; t < s.threads; ++t) {
    const auto a = thread_ops(s, t);
    const auto b = thread_ops(s, t);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_EQ(a[i].op, b[i].op);
      ASSERT_EQ(a[i].key, b[i].key);
    }
  }
  WorkloadSpec other = s;
  other.seed = 8;
  EXPECT_NE(load_keys(s), load_keys(other));
}

TEST(Workload, LoadKeysAreDistinctEvens) {
  WorkloadSpec s;
  s.keys = 5000;
  auto keys = load_keys(s);
  std::set<Key> uniq(keys.begin(), keys.end());
  EXPECT_EQ(uniq.size(), keys.size());
  for (Key k : keys) ASSERT_EQ(k % 2, 0);
}

TEST(Workload, OpMixFollowsReadFraction) {
  WorkloadSpec s;
  s.ops = 40'000;
  s.read_fraction = 0.9;
  std::map<OpKind, std::size_t> counts;
  std::size_t total = 0;
  for (std::size_t t = 0; t < s.threads; ++t)
    for (const auto& op : thread_ops(s, t)) {
      ++counts[op.op];
      ++total;
    }
  EXPECT_EQ(total, s.ops);
  EXPECT_NEAR(static_cast<double>(counts[OpKind::find]) / static_cast<double>(total), 0.9, 0.01);
  EXPECT_NEAR(static_cast<double>(counts[OpKind::insert]) / static_cast<double>(total), 0.05, 0.01);
}

TEST(Zipfian, SkewConcentratesOnLowRanks) {
  Zipfian z(10'000, 0.99);
  std::mt19937_64 rng(1);
  std::size_t rank0 = 0;
  std::size_t top10 = 0;
  constexpr int kDraws = 100'000;
  for (int i = 0; i < kDraws; ++i) {
    const auto r = z(rng);
    ASSERT_LT(r, 10'000u);
    rank0 += r == 0;
    top10 += r < 10;
  }
  // Rank 0 carries 1/zeta(n) of the mass, about 10% for these parameters.
  EXPECT_NEAR(static_cast<double>(rank0) / kDraws, 0.1, 0.02);
  EXPECT_GT(top10, static_cast<std::size_t>(kDraws / 4));
}

TEST(HistoryRecorder, ConcurrentAppendsKeepEverythingUpToCapacity) {
  HistoryRecorder rec(4000);
  std::vector<std::thread> pool;
  for (std::uint32_t t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (int i = 0; i < 1500; ++i) {
        HistoryEvent e;
        e.client = t;
        e.invoke = rec.tick();
        e.response = rec.tick();
        rec.append(e);
      }
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(rec.events().size(), 4000u);
  EXPECT_EQ(rec.dropped(), 2000u);
}

}  // namespace
}  // namespace dili::verify
