#pragma once

// Randomized small-program trials: build a tiny two-agent trace, run it under
// every mechanism, and check each final memory state against the interleaving
// oracle. Lock-based and optimistic execution must additionally look like the
// PIM kernels ran atomically.

#include <sstream>
#include <string>

#include "interleave_oracle.hpp"
#include "pimsim/engine.hpp"
#include "pimsim/trace_gen.hpp"

namespace trials {

struct TrialResult {
  bool ok = true;
  std::string detail;
};

inline std::string state_str(const oracle::State& s) {
  std::ostringstream o;
  o << "{";
  for (const auto& [l, t] : s) o << l << ":" << std::hex << t << std::dec << " ";
  o << "}";
  return o.str();
}

inline TrialResult check_small_trace_trial(std::uint64_t trial_seed) {
  pimsim::Rng rng(pimsim::splitmix64(trial_seed ^ 0x51a7e5));
  const pimsim::Addr base = 1 << 20;
  const pimsim::Line base_line = base / 64;

  pimsim::Trace t;
  t.regions.push_back({base, base + pimsim::kPageSize});
  t.space_size = base + (1 << 20);

  std::uint64_t na = rng.next_below(7);
  std::uint64_t nb = rng.next_below(std::min<std::uint64_t>(7, 13 - na));
  if (na + nb == 0) na = 1;

  std::vector<oracle::Op> cpu_ops;
  std::uint64_t cpu_seq = 0;
  for (std::uint64_t i = 0; i < na; ++i) {
    oracle::Op op;
    op.line = base_line + rng.next_below(4);
    op.is_store = rng.bernoulli(0.5);
    if (op.is_store) op.token = (1ull << 32) | ++cpu_seq;
    cpu_ops.push_back(op);
    pimsim::Addr va = op.line * 64;
    t.cpu.push_back(op.is_store ? pimsim::TraceEvent::store(va, 8)
                                : pimsim::TraceEvent::load(va, 8));
  }

  std::vector<std::vector<oracle::Op>> atomic_groups, free_groups;
  std::uint64_t pim_seq = 0;
  if (nb > 0) {
    std::uint32_t n_kernels = (nb > 2 && rng.bernoulli(0.5)) ? 2 : 1;
    std::uint64_t split = n_kernels == 2 ? 1 + rng.next_below(nb - 1) : nb;
    std::uint64_t emitted = 0;
    for (std::uint32_t k = 1; k <= n_kernels; ++k) {
      t.kernel_names[k] = "k" + std::to_string(k);
      t.pim.push_back(pimsim::TraceEvent::kernel_begin(k, pimsim::Granularity::BulkOp));
      std::vector<oracle::Op> block;
      std::uint64_t upto = k == 1 ? split : nb;
      for (; emitted < upto; ++emitted) {
        oracle::Op op;
        op.line = base_line + rng.next_below(4);
        op.is_store = rng.bernoulli(0.5);
        if (op.is_store) op.token = (2ull << 32) | ++pim_seq;
        block.push_back(op);
        free_groups.push_back({op});
        pimsim::Addr va = op.line * 64;
        t.pim.push_back(op.is_store ? pimsim::TraceEvent::store(va, 8)
                                    : pimsim::TraceEvent::load(va, 8));
      }
      t.pim.push_back(pimsim::TraceEvent::kernel_end(k));
      atomic_groups.push_back(std::move(block));
    }
  }

  std::set<oracle::State> free_states = oracle::reachable_states(cpu_ops, free_groups);
  std::set<oracle::State> atomic_states = oracle::reachable_states(cpu_ops, atomic_groups);

  pimsim::MachineConfig cfg;
  for (pimsim::Mechanism m :
       {pimsim::Mechanism::Fg, pimsim::Mechanism::Cg, pimsim::Mechanism::Nc,
        pimsim::Mechanism::Conda, pimsim::Mechanism::Ideal}) {
    pimsim::Simulation sim(cfg, t, m, {}, pimsim::PageTableMode::RegionBased, trial_seed);
    sim.run();
    const oracle::State& got = sim.final_memory();
    const bool need_atomic = m == pimsim::Mechanism::Cg || m == pimsim::Mechanism::Conda;
    const std::set<oracle::State>& want = need_atomic ? atomic_states : free_states;
    if (!want.count(got)) {
      TrialResult r;
      r.ok = false;
      std::ostringstream o;
      o << "trial " << trial_seed << " mech " << pimsim::mechanism_name(m) << ": final state "
        << state_str(got) << " not reachable by any " << (need_atomic ? "atomic" : "free")
        << " interleaving (" << want.size() << " states)";
      r.detail = o.str();
      return r;
    }
  }
  return {};
}

}  // namespace trials
