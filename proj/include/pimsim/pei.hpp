#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>

#include "pimsim/cache.hpp"
#include "pimsim/machine.hpp"
#include "pimsim/trace.hpp"

namespace pimsim {

// One offloaded instruction: an atomic read-modify-write of a single 8-byte
// word. Construction enforces the single-line rule, so a PeiOp that crosses a
// line boundary cannot exist.
struct PeiOp {
  PeiOpcode opcode;
  Addr vaddr;
  std::int64_t operand;
  std::uint32_t issuing_core;

  static PeiOp make(PeiOpcode op, Addr vaddr, std::int64_t operand, std::uint32_t core,
                    std::uint32_t line_size) {
    if (line_size == 0 || vaddr % line_size + 8 > line_size)
      throw std::invalid_argument("PEI operand must lie within a single cache line");
    return PeiOp{op, vaddr, operand, core};
  }

 private:
  PeiOp(PeiOpcode op, Addr a, std::int64_t v, std::uint32_t c)
      : opcode(op), vaddr(a), operand(v), issuing_core(c) {}
};

struct PeiDispatch {
  bool host = false;          // execute at the CPU-side PCU
  std::uint32_t vault = 0;    // memory-side PCU when !host
};

// Locality-aware dispatch: the management unit sends the PEI to the host-side
// compute unit when the CPU cache holds the target line, otherwise to the
// compute unit of the owning vault.
inline PeiDispatch pmu_dispatch(const CpuCache& cache, Addr paddr, const MachineConfig& cfg) {
  PeiDispatch d;
  if (cache.find(line_of(paddr, cfg)) != nullptr) {
    d.host = true;
  } else {
    d.vault = vault_of(paddr, cfg);
  }
  return d;
}

// 8-byte words addressed by physical address. Separate from the line-token
// model: PEIs are the one place the simulator needs real values.
class PeiMemory {
 public:
  std::int64_t load(Addr paddr) const {
    auto it = words_.find(paddr);
    return it == words_.end() ? 0 : it->second;
  }

  void store(Addr paddr, std::int64_t v) { words_[paddr] = v; }

  // Applies the operation and returns the old value.
  std::int64_t apply(PeiOpcode op, Addr paddr, std::int64_t operand) {
    std::int64_t old = load(paddr);
    switch (op) {
      case PeiOpcode::Add: words_[paddr] = old + operand; break;
      case PeiOpcode::Min: words_[paddr] = std::min(old, operand); break;
      case PeiOpcode::Max: words_[paddr] = std::max(old, operand); break;
    }
    return old;
  }

 private:
  std::map<Addr, std::int64_t> words_;
};

}  // namespace pimsim
