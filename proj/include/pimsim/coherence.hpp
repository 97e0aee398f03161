#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "pimsim/cache.hpp"
#include "pimsim/machine.hpp"
#include "pimsim/signature.hpp"

namespace pimsim {

enum class Mechanism : std::uint8_t { Fg, Cg, Nc, Conda, Ideal };

inline const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::Fg: return "fg";
    case Mechanism::Cg: return "cg";
    case Mechanism::Nc: return "nc";
    case Mechanism::Conda: return "conda";
    case Mechanism::Ideal: return "ideal";
  }
  return "?";
}

inline std::optional<Mechanism> mechanism_from_name(const std::string& s) {
  if (s == "fg") return Mechanism::Fg;
  if (s == "cg") return Mechanism::Cg;
  if (s == "nc") return Mechanism::Nc;
  if (s == "conda") return Mechanism::Conda;
  if (s == "ideal") return Mechanism::Ideal;
  return std::nullopt;
}

enum class Decision : std::uint8_t { Proceed, Stall, Conflict };

struct AccessOutcome {
  Decision decision = Decision::Proceed;
  bool cache_hit = false;
  std::uint32_t dram_line_accesses = 0;  // demand fills and direct accesses
  std::uint32_t writebacks = 0;          // dirty lines pushed back to memory
  std::uint32_t messages = 0;            // coherence messages on the channel
  std::vector<Line> flushed;             // lines flushed by a resolution/acquire
};

enum class EpochStatus : std::uint8_t { Optimistic, Committed, RolledBack };

// Per-epoch speculative state for the optimistic mechanism. Reads and writes
// performed during the epoch are folded into the signatures; writes are held
// in the buffer and reach memory only on commit.
struct CondaEpochState {
  Signature read_sig;
  Signature write_sig;
  std::map<Line, Token> write_buffer;
  EpochStatus status = EpochStatus::Optimistic;

  CondaEpochState(std::uint32_t bits, std::uint32_t hashes)
      : read_sig(bits, hashes), write_sig(bits, hashes) {}
};

inline void conda_record(CondaEpochState& e, Line line, AccessKind kind, Token token) {
  if (e.status != EpochStatus::Optimistic)
    throw std::logic_error("conda_record outside an open epoch");
  if (kind == AccessKind::Read) {
    if (!e.write_buffer.count(line)) e.read_sig.insert(line);
  } else {
    e.write_sig.insert(line);
    e.write_buffer[line] = token;
  }
}

struct ResolveResult {
  bool conflict = false;
  std::vector<Line> conflicting;  // CPU lines implicated, in address order
  std::uint32_t messages = 3;     // two signatures out, one reply back
};

// Resolution at epoch end. A conflict exists when a line the CPU dirtied
// intersects either signature, or a line the CPU read intersects the write
// signature. Signature membership may be a false positive; that only forces a
// spurious re-execution.
inline ResolveResult conda_resolve(const CondaEpochState& e, const std::set<Line>& cpu_dirty,
                                   const std::set<Line>& cpu_read) {
  ResolveResult r;
  for (Line l : cpu_dirty)
    if (e.read_sig.maybe_contains(l) || e.write_sig.maybe_contains(l)) r.conflicting.push_back(l);
  for (Line l : cpu_read)
    if (!cpu_dirty.count(l) && e.write_sig.maybe_contains(l)) r.conflicting.push_back(l);
  r.conflict = !r.conflicting.empty();
  return r;
}

// Shared-memory model: one CPU cache, flat line-token memory, and the
// mechanism-specific rules for what a CPU or PIM access does to both.
class MemorySystem {
 public:
  // region_of maps a physical line to the index of the PIM region containing
  // it, or -1. Used for non-cacheable classification and region locks.
  using RegionOf = std::function<int(Line)>;

  MemorySystem(const MachineConfig& cfg, Mechanism mech, std::size_t n_regions, RegionOf region_of)
      : cfg_(cfg),
        mech_(mech),
        cache_(cfg.cpu_cache_lines),
        region_of_(std::move(region_of)),
        lock_holder_(n_regions) {}

  Mechanism mechanism() const { return mech_; }
  CpuCache& cache() { return cache_; }
  const CpuCache& cache() const { return cache_; }
  const std::map<Line, Token>& memory() const { return memory_; }
  Token memory_value(Line l) const {
    auto it = memory_.find(l);
    return it == memory_.end() ? 0 : it->second;
  }

  // ---- CPU side -----------------------------------------------------------

  AccessOutcome cpu_access(Line line, AccessKind kind, Token store_token) {
    AccessOutcome out;
    const int region = region_of_(line);

    if (mech_ == Mechanism::Nc && region >= 0) {
      // non-cacheable: straight to DRAM over the channel, no cache state
      out.dram_line_accesses = 1;
      if (kind == AccessKind::Write) memory_[line] = store_token;
      return out;
    }

    // region lock held by the PIM: cg proper, or a conda kernel that gave up
    // on speculation. Writes wait for the release; reads stay permissive.
    if (kind == AccessKind::Write && region >= 0 &&
        lock_holder_[static_cast<std::size_t>(region)] == Holder::Pim) {
      out.decision = Decision::Stall;
      return out;
    }

    if (epoch_) {
      if (kind == AccessKind::Read)
        epoch_cpu_read_.insert(line);
      else
        epoch_cpu_dirty_.insert(line);
    }

    CpuCache::Slot* s = cache_.find(line);
    if (s) {
      ++cache_.hits;
      out.cache_hit = true;
      if (kind == AccessKind::Write) {
        s->state = LineState::Modified;  // S/E upgrade is silent: no second cache
        s->token = store_token;
      }
      return out;
    }
    ++cache_.misses;
    out.dram_line_accesses = 1;  // demand fill
    CpuCache::FillResult fr =
        kind == AccessKind::Read ? cache_.fill(line, LineState::Exclusive, memory_value(line))
                                 : cache_.fill(line, LineState::Modified, store_token);
    if (fr.evicted_dirty) {
      memory_[fr.evicted_line] = fr.evicted_token;
      out.writebacks = 1;
    }
    return out;
  }

  // ---- PIM side -----------------------------------------------------------

  AccessOutcome pim_access(Line line, AccessKind kind, Token store_token) {
    switch (mech_) {
      case Mechanism::Fg:
        return fg_access(line, kind, store_token, /*charge=*/true);
      case Mechanism::Ideal:
        return fg_access(line, kind, store_token, /*charge=*/false);
      case Mechanism::Nc:
      case Mechanism::Cg:
        return pim_access_direct(line, kind, store_token);
      case Mechanism::Conda: {
        if (!epoch_) throw std::logic_error("conda PIM access outside an open epoch");
        conda_record(*epoch_, line, kind, store_token);
        AccessOutcome out;
        out.dram_line_accesses = 1;  // buffered writes are charged like local DRAM
        return out;
      }
    }
    return {};
  }

  // Lock-protected or non-cacheable PIM access: plain DRAM, with silent
  // correction of any CPU copy (dirty copies were flushed at acquire time for
  // cg; nc region lines are never cached).
  AccessOutcome pim_access_direct(Line line, AccessKind kind, Token store_token) {
    AccessOutcome out;
    out.dram_line_accesses = 1;
    if (kind == AccessKind::Read) {
      Token wb;
      if (cache_.state_of(line) == LineState::Modified && cache_.downgrade_to_shared(line, &wb)) {
        memory_[line] = wb;
        out.writebacks = 1;
      }
    } else {
      Token wb;
      if (cache_.invalidate(line, &wb)) {
        memory_[line] = wb;
        out.writebacks = 1;
      }
      memory_[line] = store_token;
    }
    return out;
  }

  // MESI over the channel. Any PIM touch of a CPU-held line costs at least one
  // message; Modified lines additionally owe a writeback. `charge` is false
  // for the zero-cost oracle, which performs the same transitions for free.
  AccessOutcome fg_access(Line line, AccessKind kind, Token store_token, bool charge) {
    AccessOutcome out;
    out.dram_line_accesses = 1;
    const LineState st = cache_.state_of(line);
    if (kind == AccessKind::Read) {
      if (st == LineState::Modified) {
        Token wb;
        cache_.downgrade_to_shared(line, &wb);
        memory_[line] = wb;
        if (charge) {
          out.messages = 1;  // writeback request
          out.writebacks = 1;
        }
      } else if (st == LineState::Exclusive) {
        Token wb;
        cache_.downgrade_to_shared(line, &wb);
        if (charge) out.messages = 1;  // downgrade notice
      }
      // Shared or Invalid: memory already has the data
    } else {
      if (st != LineState::Invalid) {
        Token wb;
        bool dirty = cache_.invalidate(line, &wb);
        if (dirty) memory_[line] = wb;
        if (charge) {
          out.messages = 1;  // invalidate
          if (dirty) out.writebacks = 1;
        }
      }
      memory_[line] = store_token;
    }
    if (charge) coherence_messages += out.messages;
    return out;
  }

  // ---- region locks -------------------------------------------------------

  AccessOutcome cg_acquire(Agent agent, std::size_t region) {
    AccessOutcome out;
    Holder& h = lock_holder_.at(region);
    const Holder want = agent == Agent::Cpu ? Holder::Cpu : Holder::Pim;
    if (h != Holder::None && h != want) {
      out.decision = Decision::Stall;
      return out;
    }
    h = want;
    out.messages = 1;  // lock transfer
    coherence_messages += 1;
    if (agent == Agent::Pim) {
      // flush every dirty CPU line that lives in the region
      for (const auto& [l, tok] : cache_.dirty_lines()) {
        if (region_of_(l) != static_cast<int>(region)) continue;
        Token wb;
        cache_.invalidate(l, &wb);
        memory_[l] = wb;
        ++out.writebacks;
        out.flushed.push_back(l);
      }
    }
    return out;
  }

  AccessOutcome cg_release(Agent agent, std::size_t region) {
    AccessOutcome out;
    Holder& h = lock_holder_.at(region);
    const Holder want = agent == Agent::Cpu ? Holder::Cpu : Holder::Pim;
    if (h != want) throw std::logic_error("cg_release by an agent that does not hold the lock");
    h = Holder::None;
    out.messages = 1;
    coherence_messages += 1;
    return out;
  }

  bool cg_held_by_pim(std::size_t region) const {
    return lock_holder_.at(region) == Holder::Pim;
  }

  // ---- optimistic epochs --------------------------------------------------

  void conda_begin_epoch() {
    epoch_.emplace(cfg_.signature_bits, cfg_.signature_hashes);
    epoch_cpu_dirty_.clear();
    epoch_cpu_read_.clear();
    // lines already dirty when the epoch opens can race with epoch reads
    for (const auto& [l, tok] : cache_.dirty_lines()) epoch_cpu_dirty_.insert(l);
  }

  bool epoch_active() const { return epoch_.has_value(); }
  const CondaEpochState& epoch() const { return *epoch_; }

  // Commit or conflict at kernel end. On conflict the implicated dirty lines
  // are flushed and the caller is expected to roll the kernel back.
  AccessOutcome conda_resolve_epoch() {
    if (!epoch_) throw std::logic_error("conda_resolve without an open epoch");
    AccessOutcome out;
    ResolveResult r = conda_resolve(*epoch_, epoch_cpu_dirty_, epoch_cpu_read_);
    out.messages = r.messages;
    coherence_messages += r.messages;
    if (r.conflict) {
      out.decision = Decision::Conflict;
      for (Line l : r.conflicting) {
        Token wb;
        if (cache_.state_of(l) == LineState::Modified && cache_.invalidate(l, &wb)) {
          memory_[l] = wb;
          ++out.writebacks;
          out.flushed.push_back(l);
        }
      }
      epoch_->status = EpochStatus::RolledBack;
      return out;
    }
    // commit: drain the buffer; stale clean CPU copies of committed lines are
    // dropped with the reply (a read during the epoch would have conflicted)
    for (const auto& [l, tok] : epoch_->write_buffer) {
      memory_[l] = tok;
      Token wb;
      cache_.invalidate(l, &wb);
    }
    epoch_->status = EpochStatus::Committed;
    epoch_.reset();
    return out;
  }

  // Discard speculation after a conflict and open a fresh attempt.
  void conda_rollback() {
    if (!epoch_) throw std::logic_error("conda_rollback without an epoch");
    if (epoch_->status != EpochStatus::RolledBack)
      throw std::logic_error("conda_rollback on an epoch that did not conflict");
    ++rollbacks;
    conda_begin_epoch();
  }

  void conda_abandon_epoch() { epoch_.reset(); }

  // ---- end of simulation --------------------------------------------------

  std::uint32_t finalize() {
    std::uint32_t wbs = 0;
    for (const auto& [l, tok] : cache_.dirty_lines()) {
      Token wb;
      cache_.invalidate(l, &wb);
      memory_[l] = wb;
      ++wbs;
    }
    return wbs;
  }

  std::uint64_t coherence_messages = 0;
  std::uint64_t rollbacks = 0;

 private:
  enum class Holder : std::uint8_t { None, Cpu, Pim };

  const MachineConfig& cfg_;
  Mechanism mech_;
  CpuCache cache_;
  RegionOf region_of_;
  std::map<Line, Token> memory_;
  std::vector<Holder> lock_holder_;

  std::optional<CondaEpochState> epoch_;
  std::set<Line> epoch_cpu_dirty_;
  std::set<Line> epoch_cpu_read_;
};

}  // namespace pimsim
