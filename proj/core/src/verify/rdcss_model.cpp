#include "dili/verify/rdcss_model.hpp"

#include <boost/context/fiber.hpp>
#include <boost/context/fixedsize_stack.hpp>

#include <atomic>
#include <cmath>
#include <memory>
#include <random>

#include "dili/rdcss.hpp"

namespace dili::verify {

namespace ctx = boost::context;

namespace {

struct OpRecord {
  std::uint64_t result = 0;
  std::uint64_t start = 0;
  std::uint64_t end = 0;
};

class Execution;

// Every shared access first hands control back to the scheduler, which
// decides who performs the next access.
struct ModelMem {
  Execution* ex;
  std::uint64_t load(const std::atomic<std::uint64_t>& w);
  bool cas(std::atomic<std::uint64_t>& w, std::uint64_t& expected, std::uint64_t desired);
  std::uint8_t decide(std::atomic<std::uint8_t>& status, std::uint8_t decision);
  RdcssDescriptor& descriptor(std::uint64_t word);
  std::uint64_t make_descriptor(std::atomic<std::uint64_t>* data, std::uint64_t expected_data,
                                const std::atomic<std::uint64_t>* control,
                                std::uint64_t expected_control, std::uint64_t new_data);
  void retire_descriptor(std::uint64_t) {}
  void discard_descriptor(std::uint64_t) {}
};

using ModelRdcss = Rdcss<ModelMem>;

class Execution {
 public:
  explicit Execution(const ModelProgram& p) : prog_(p), threads_(p.threads.size()) {
    for (int i = 0; i < kModelWords; ++i) words[i].store(p.initial[i]);
    records.resize(p.threads.size());
    for (std::size_t t = 0; t < threads_.size(); ++t) start(static_cast<int>(t));
  }

  bool done(int t) const { return threads_[t].done; }
  bool all_done() const {
    for (const auto& t : threads_)
      if (!t.done) return false;
    return true;
  }

  void step(int t) {
    ++clock_;
    current_ = t;
    threads_[t].fiber = std::move(threads_[t].fiber).resume();
  }

  void yield() {
    auto& t = threads_[current_];
    t.back = std::move(t.back).resume();
  }

  std::array<std::atomic<std::uint64_t>, kModelWords> words;
  std::vector<std::unique_ptr<RdcssDescriptor>> descriptors;
  std::vector<std::vector<OpRecord>> records;

 private:
  struct Thread {
    ctx::fiber fiber;
    ctx::fiber back;
    bool done = false;
  };

  void start(int t) {
    threads_[t].fiber = ctx::fiber(std::allocator_arg, ctx::fixedsize_stack(64 * 1024),
                                   [this, t](ctx::fiber&& caller) {
                                     threads_[t].back = std::move(caller);
                                     body(t);
                                     threads_[t].done = true;
                                     return std::move(threads_[t].back);
                                   });
    current_ = t;
    threads_[t].fiber = std::move(threads_[t].fiber).resume();
  }

  void body(int t) {
    ModelMem m{this};
    for (const ModelOp& op : prog_.threads[t]) {
      OpRecord r;
      r.start = clock_;
      auto& w = words[op.word];
      switch (op.kind) {
        case ModelOpKind::read:
          r.result = ModelRdcss::read(m, w);
          break;
        case ModelOpKind::cas: {
          std::uint64_t e = op.expected;
          r.result = ModelRdcss::cas(m, w, e, op.desired);
          break;
        }
        case ModelOpKind::rdcss:
          r.result = ModelRdcss::rdcss(m, w, op.expected, words[kControlWord],
                                       op.expected_control, op.desired);
          break;
      }
      r.end = clock_;
      records[t].push_back(r);
    }
  }

  const ModelProgram& prog_;
  std::vector<Thread> threads_;
  int current_ = -1;
  std::uint64_t clock_ = 0;
};

std::uint64_t ModelMem::load(const std::atomic<std::uint64_t>& w) {
  ex->yield();
  return w.load();
}

bool ModelMem::cas(std::atomic<std::uint64_t>& w, std::uint64_t& expected, std::uint64_t desired) {
  ex->yield();
  return w.compare_exchange_strong(expected, desired);
}

std::uint8_t ModelMem::decide(std::atomic<std::uint8_t>& status, std::uint8_t decision) {
  ex->yield();
  std::uint8_t expected = kUndecided;
  return status.compare_exchange_strong(expected, decision) ? decision : expected;
}

RdcssDescriptor& ModelMem::descriptor(std::uint64_t word) {
  return *ex->descriptors.at(NodeRef::from_raw(word).slot() - 1);
}

std::uint64_t ModelMem::make_descriptor(std::atomic<std::uint64_t>* data,
                                        std::uint64_t expected_data,
                                        const std::atomic<std::uint64_t>* control,
                                        std::uint64_t expected_control, std::uint64_t new_data) {
  auto d = std::make_unique<RdcssDescriptor>();
  d->data = data;
  d->expected_data = expected_data;
  d->control = control;
  d->expected_control = expected_control;
  d->new_data = new_data;
  ex->descriptors.push_back(std::move(d));
  return NodeRef::pack(kDescriptorServer, ex->descriptors.size()).raw();
}

// Sequential spec: each operation is one atomic step on three words.
std::uint64_t apply_atomic(const ModelOp& op, std::array<std::uint64_t, kModelWords>& mem) {
  switch (op.kind) {
    case ModelOpKind::read:
      return mem[op.word];
    case ModelOpKind::cas:
      if (mem[op.word] != op.expected) return 0;
      mem[op.word] = op.desired;
      return 1;
    case ModelOpKind::rdcss:
      if (mem[op.word] != op.expected || mem[kControlWord] != op.expected_control) return 0;
      mem[op.word] = op.desired;
      return 1;
  }
  return 0;
}

class LinearizationSearch {
 public:
  LinearizationSearch(const ModelProgram& p, const std::vector<std::vector<OpRecord>>& rec,
                      const std::array<std::uint64_t, kModelWords>& final_mem)
      : p_(p), rec_(rec), final_(final_mem), pos_(p.threads.size(), 0) {}

  bool run() { return dfs(p_.initial); }

 private:
  bool ready(std::size_t t) const {
    const auto& me = rec_[t][pos_[t]];
    for (std::size_t u = 0; u < p_.threads.size(); ++u)
      for (std::size_t i = pos_[u]; i < p_.threads[u].size(); ++i)
        if (u != t && rec_[u][i].end < me.start) return false;
    return true;
  }

  bool dfs(std::array<std::uint64_t, kModelWords> mem) {
    bool finished = true;
    for (std::size_t t = 0; t < p_.threads.size(); ++t) {
      if (pos_[t] == p_.threads[t].size()) continue;
      finished = false;
      if (!ready(t)) continue;
      auto next = mem;
      if (apply_atomic(p_.threads[t][pos_[t]], next) != rec_[t][pos_[t]].result) continue;
      ++pos_[t];
      bool ok = dfs(next);
      --pos_[t];
      if (ok) return true;
    }
    return finished && mem == final_;
  }

  const ModelProgram& p_;
  const std::vector<std::vector<OpRecord>>& rec_;
  const std::array<std::uint64_t, kModelWords>& final_;
  std::vector<std::size_t> pos_;
};

std::string op_str(const ModelOp& op) {
  switch (op.kind) {
    case ModelOpKind::read:
      return "read(w" + std::to_string(op.word) + ")";
    case ModelOpKind::cas:
      return "cas(w" + std::to_string(op.word) + "," + std::to_string(op.expected) + "->" +
             std::to_string(op.desired) + ")";
    case ModelOpKind::rdcss:
      return "rdcss(w" + std::to_string(op.word) + "," + std::to_string(op.expected) + "|c==" +
             std::to_string(op.expected_control) + "->" + std::to_string(op.desired) + ")";
  }
  return "?";
}

}  // namespace

std::string describe(const ModelProgram& p) {
  std::string s = "init[";
  for (int i = 0; i < kModelWords; ++i) s += (i ? "," : "") + std::to_string(p.initial[i]);
  s += "]";
  for (std::size_t t = 0; t < p.threads.size(); ++t) {
    s += " T" + std::to_string(t) + ":";
    for (const auto& op : p.threads[t]) s += " " + op_str(op);
  }
  return s;
}

double estimate_schedules(const ModelProgram& p) {
  double total = 0;
  double log_denominator = 0;
  for (const auto& ops : p.threads) {
    double n = 0;
    for (const auto& op : ops) n += op.kind == ModelOpKind::rdcss ? 4 : 1;
    total += n;
    log_denominator += std::lgamma(n + 1);
  }
  return std::exp(std::lgamma(total + 1) - log_denominator);
}

ModelReport check_rdcss_model(const ModelProgram& p, const ModelOptions& opts) {
  ModelReport rep;
  struct Decision {
    std::vector<int> options;
    std::size_t idx = 0;
  };
  std::vector<Decision> stack;
  const int n = static_cast<int>(p.threads.size());
  for (;;) {
    Execution ex(p);
    std::size_t depth = 0;
    int prev = -1;
    int preemptions = 0;
    std::vector<int> schedule;
    while (!ex.all_done()) {
      std::vector<int> options;
      const bool prev_enabled = prev >= 0 && !ex.done(prev);
      if (opts.max_preemptions >= 0 && preemptions >= opts.max_preemptions && prev_enabled) {
        options.push_back(prev);
      } else {
        for (int t = 0; t < n; ++t)
          if (!ex.done(t)) options.push_back(t);
      }
      if (depth == stack.size()) stack.push_back({options, 0});
      const int choice = stack[depth].options[stack[depth].idx];
      if (prev_enabled && choice != prev) ++preemptions;
      ex.step(choice);
      schedule.push_back(choice);
      prev = choice;
      ++depth;
    }
    ++rep.schedules;

    std::array<std::uint64_t, kModelWords> final_mem{};
    bool clean = true;
    for (int i = 0; i < kModelWords; ++i) {
      final_mem[i] = ex.words[i].load();
      if (NodeRef::from_raw(final_mem[i]).is_descriptor()) clean = false;
    }
    if (!clean || !LinearizationSearch(p, ex.records, final_mem).run()) {
      if (rep.failures++ == 0) {
        rep.detail = describe(p) + " schedule=";
        for (int c : schedule) rep.detail += std::to_string(c);
        rep.detail += clean ? " (no matching sequential order)" : " (descriptor left behind)";
      }
    }

    while (!stack.empty() && stack.back().idx + 1 >= stack.back().options.size()) stack.pop_back();
    if (stack.empty()) break;
    ++stack.back().idx;
    if (rep.schedules >= opts.max_schedules) {
      rep.exhaustive = false;
      break;
    }
  }
  return rep;
}

std::vector<ModelProgram> rdcss_model_programs(std::uint64_t seed, std::size_t random_count) {
  using K = ModelOpKind;
  auto rd = [](int w) { return ModelOp{K::read, w, 0, 0, 0}; };
  auto cas = [](int w, std::uint64_t e, std::uint64_t d) { return ModelOp{K::cas, w, e, 0, d}; };
  auto rdcss = [](int w, std::uint64_t e, std::uint64_t ec, std::uint64_t d) {
    return ModelOp{K::rdcss, w, e, ec, d};
  };
  const std::array<std::uint64_t, kModelWords> init{2, 2, 2};
  std::vector<ModelProgram> out;
  // Control changes under an installed descriptor.
  out.push_back({init, {{rdcss(0, 2, 2, 4)}, {cas(kControlWord, 2, 6)}}});
  // Two installers on one word, plus a helping reader.
  out.push_back({init, {{rdcss(0, 2, 2, 4)}, {rdcss(0, 2, 2, 6)}, {rd(0)}}});
  // ABA on the control word.
  out.push_back({init,
                 {{rdcss(0, 2, 2, 4), rdcss(1, 2, 2, 4)},
                  {cas(kControlWord, 2, 6), cas(kControlWord, 6, 2)},
                  {rd(0), rd(1)}}});
  // ABA on the data word.
  out.push_back({init,
                 {{rdcss(0, 2, 2, 4), rd(0)}, {cas(0, 2, 6), cas(0, 6, 2)}, {rdcss(0, 2, 2, 8)}}});
  // Disjoint data words sharing a control word that moves.
  out.push_back({init, {{rdcss(0, 2, 2, 4)}, {rdcss(1, 2, 2, 4)}, {cas(kControlWord, 2, 4), rd(0)}}});
  // Sequential sanity: the second rdcss sees a stale control value.
  out.push_back({init, {{rdcss(0, 2, 2, 4), rdcss(0, 4, 4, 6)}}});

  std::mt19937_64 rng(seed);
  auto pick = [&](std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng); };
  const std::uint64_t values[] = {2, 4, 6};
  for (std::size_t i = 0; i < random_count; ++i) {
    ModelProgram p{init, {}};
    const std::size_t threads = 1 + pick(3);
    for (std::size_t t = 0; t < threads; ++t) {
      std::vector<ModelOp> ops;
      const std::size_t count = 1 + pick(2);
      for (std::size_t k = 0; k < count; ++k) {
        switch (pick(3)) {
          case 0:
            ops.push_back(rd(static_cast<int>(pick(kModelWords))));
            break;
          case 1:
            ops.push_back(cas(static_cast<int>(pick(kModelWords)), values[pick(3)], values[pick(3)]));
            break;
          default:
            ops.push_back(rdcss(static_cast<int>(pick(2)), values[pick(3)], values[pick(3)],
                                values[pick(3)]));
        }
      }
      p.threads.push_back(std::move(ops));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dili::verify
