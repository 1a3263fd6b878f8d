#include "dili/epoch.hpp"

namespace dili {

struct RecordHolder {
  EpochDomain::Record* rec = nullptr;
  ~RecordHolder() {
    if (rec) {
      rec->epoch.store(EpochDomain::kIdle);
      rec->nesting = 0;
      rec->in_use.store(false);
    }
  }
};

namespace {
thread_local RecordHolder tl_record;
}

EpochDomain& EpochDomain::instance() {
  static EpochDomain domain;
  return domain;
}

EpochDomain::Record* EpochDomain::local() {
  if (tl_record.rec) return tl_record.rec;
  for (Record* r = records_.load(); r; r = r->next) {
    bool expected = false;
    if (!r->in_use.load() && r->in_use.compare_exchange_strong(expected, true)) {
      tl_record.rec = r;
      return r;
    }
  }
  auto* r = new Record;  // records live for the process
  r->in_use.store(true);
  Record* head = records_.load();
  do {
    r->next = head;
  } while (!records_.compare_exchange_weak(head, r));
  tl_record.rec = r;
  return r;
}

void EpochDomain::enter() {
  Record* r = local();
  if (r->nesting++ > 0) return;
  std::uint64_t e = global_.load();
  for (;;) {
    r->epoch.store(e);
    std::uint64_t again = global_.load();
    if (again == e) break;
    e = again;
  }
}

void EpochDomain::exit() {
  Record* r = tl_record.rec;
  if (--r->nesting == 0) r->epoch.store(kIdle);
}

bool EpochDomain::pinned_by_caller() const {
  return tl_record.rec && tl_record.rec->nesting > 0;
}

bool EpochDomain::try_advance() {
  std::uint64_t e = global_.load();
  for (Record* r = records_.load(); r; r = r->next) {
    std::uint64_t seen = r->epoch.load();
    if (seen != kIdle && seen != e) return false;
  }
  return global_.compare_exchange_strong(e, e + 1);
}

}  // namespace dili
