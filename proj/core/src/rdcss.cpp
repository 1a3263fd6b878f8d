#include "dili/rdcss.hpp"

#include <stdexcept>

#include "dili/arena.hpp"
#include "dili/epoch.hpp"

namespace dili {

namespace {

class DescriptorPool {
 public:
  static DescriptorPool& instance() {
    static DescriptorPool pool;
    return pool;
  }

  RdcssDescriptor& get(std::uint64_t word) {
    return arena_.at(NodeRef::from_raw(word).slot());
  }

  std::uint64_t acquire() {
    if (limbo_.size() > 64)
      limbo_.collect([this](std::uint64_t s) { arena_.release(s); });
    auto slot = arena_.allocate();
    if (!slot) throw std::runtime_error("rdcss descriptor pool exhausted");
    return NodeRef::pack(kDescriptorServer, *slot).raw();
  }

  void retire(std::uint64_t word) { limbo_.retire(NodeRef::from_raw(word).slot()); }
  void release(std::uint64_t word) { arena_.release(NodeRef::from_raw(word).slot()); }

 private:
  SlabArena<RdcssDescriptor, 8> arena_{std::uint64_t{1} << 20};
  Limbo<std::uint64_t> limbo_;
};

}  // namespace

RdcssDescriptor& AtomicMem::descriptor(std::uint64_t word) {
  return DescriptorPool::instance().get(word);
}

std::uint64_t AtomicMem::make_descriptor(std::atomic<std::uint64_t>* data,
                                         std::uint64_t expected_data,
                                         const std::atomic<std::uint64_t>* control,
                                         std::uint64_t expected_control,
                                         std::uint64_t new_data) {
  auto& pool = DescriptorPool::instance();
  std::uint64_t word = pool.acquire();
  RdcssDescriptor& d = pool.get(word);
  d.data = data;
  d.expected_data = expected_data;
  d.control = control;
  d.expected_control = expected_control;
  d.new_data = new_data;
  d.status.store(kUndecided);
  return word;
}

void AtomicMem::retire_descriptor(std::uint64_t word) {
  DescriptorPool::instance().retire(word);
}

void AtomicMem::discard_descriptor(std::uint64_t word) {
  DescriptorPool::instance().release(word);
}

}  // namespace dili
