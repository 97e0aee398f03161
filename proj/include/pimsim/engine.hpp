#pragma once

#include <cmath>
#include <deque>
#include <optional>
#include <unordered_map>

#include "pimsim/coherence.hpp"
#include "pimsim/config_io.hpp"
#include "pimsim/metrics.hpp"
#include "pimsim/pei.hpp"
#include "pimsim/trace.hpp"
#include "pimsim/xlat.hpp"

namespace pimsim {

struct SimError : std::runtime_error {
  SimError(const std::string& m, std::uint32_t kernel, Addr a)
      : std::runtime_error(m), kernel_id(kernel), vaddr(a) {}
  std::uint32_t kernel_id;
  Addr vaddr;
};

struct OffloadPlan {
  std::set<std::uint32_t> kernel_ids;

  bool contains(std::uint32_t id) const { return kernel_ids.count(id) != 0; }

  // every kernel whose function label matches one of the names
  static OffloadPlan by_names(const Trace& t, const std::vector<std::string>& names) {
    OffloadPlan p;
    for (const auto& [id, name] : t.kernel_names)
      for (const std::string& n : names)
        if (name == n) p.kernel_ids.insert(id);
    return p;
  }
};

// Deterministic two-agent simulation: the CPU walks its stream in order, the
// PIM logic walks its own stream and then any kernels the CPU dispatched.
// Interleaving is by current agent time with ties broken CPU first, so a
// given (config, trace, plan, seed) always produces the same report.
class Simulation {
 public:
  Simulation(const MachineConfig& cfg, const Trace& trace, Mechanism mech, OffloadPlan plan,
             PageTableMode pim_xlat, std::uint64_t seed, bool cpu_only = false)
      : cfg_(cfg),
        trace_(trace),
        mech_(mech),
        plan_(std::move(plan)),
        seed_(seed),
        cpu_only_(cpu_only),
        cpu_walker_(PageTableMode::Conventional4Level, &region_table_, cfg.tlb_entries),
        pim_walker_(pim_xlat, &region_table_, cfg.tlb_entries) {
    auto violations = validate_config(cfg);
    if (!violations.empty()) {
      std::string m = "invalid machine config:";
      for (const auto& v : violations) m += " [" + v.field + "] " + v.message + ";";
      throw std::invalid_argument(m);
    }
    for (const TraceRegion& r : trace.regions) {
      std::size_t idx = region_table_.register_region(r.base, r.bound, seed);
      for (Addr f : region_table_.entries()[idx].frames)
        frame_region_[f] = static_cast<int>(idx);
    }
    ms_.emplace(cfg_, mech, trace.regions.size(),
                [this](Line l) { return region_index_of_line(l); });

    if (cpu_only_) {
      combined_ = trace.cpu;
      combined_.insert(combined_.end(), trace.pim.begin(), trace.pim.end());
      cpu_.stream = &combined_;
      pim_.stream = &empty_;
    } else {
      cpu_.stream = &trace.cpu;
      pim_.stream = &trace.pim;
    }
    scan_kernel_regions(trace.cpu);
    scan_kernel_regions(trace.pim);
  }

  MetricsReport run() {
    while (true) {
      const bool cpu_can = cpu_.pc < cpu_.stream->size() && !cpu_.blocked;
      const bool pim_can = pim_has_work();
      if (!cpu_can && !pim_can) {
        if (cpu_.pc < cpu_.stream->size())
          throw SimError("deadlock: cpu blocked with no runnable PIM work",
                         cpu_.blocked_join, 0);
        break;
      }
      if (cpu_can && (!pim_can || cpu_.now <= pim_now_for_pick())) {
        step_cpu();
      } else {
        step_pim();
      }
    }
    finish();
    return report_;
  }

  const std::map<Line, Token>& final_memory() const { return ms_->memory(); }
  const MemorySystem& memory_system() const { return *ms_; }
  const PeiMemory& pei_memory() const { return pei_mem_; }

 private:
  struct AgentState {
    const std::vector<TraceEvent>* stream = nullptr;
    std::size_t pc = 0;
    Cycles now = 0;
    bool blocked = false;
    std::uint32_t blocked_join = 0;  // kernel id, when waiting on a dispatched kernel
    int blocked_region = -1;         // region index, when stalled on a lock
    std::vector<std::uint32_t> kstack;
  };

  struct Dispatched {
    std::uint32_t id = 0;
    std::vector<TraceEvent> body;  // includes the KB/KE markers
    Cycles ready = 0;
  };

  struct PimKernelCtx {
    std::uint32_t id = 0;
    std::size_t kb_idx = 0;
    std::uint32_t attempts = 0;
    std::uint32_t depth = 0;    // nested kernel markers inside the body
    std::uint64_t store_seq_at_begin = 0;
    bool fallback = false;      // non-speculative re-execution under region locks
    bool locks_held = false;
    std::optional<std::uint32_t> home_vault;
    std::vector<int> regions;   // region indices this kernel touches
  };

  // ---- shared helpers -----------------------------------------------------

  int region_index_of_vaddr(Addr v) const {
    for (std::size_t i = 0; i < trace_.regions.size(); ++i)
      if (trace_.regions[i].contains(v)) return static_cast<int>(i);
    return -1;
  }

  int region_index_of_line(Line l) const {
    Addr paddr = l * cfg_.line_size;
    auto it = frame_region_.find(page_of(paddr));
    return it == frame_region_.end() ? -1 : it->second;
  }

  void scan_kernel_regions(const std::vector<TraceEvent>& ev) {
    std::vector<std::uint32_t> open;
    for (const TraceEvent& e : ev) {
      if (e.op == TraceOp::KernelBegin) open.push_back(e.kernel_id);
      else if (e.op == TraceOp::KernelEnd) open.pop_back();
      else if ((e.op == TraceOp::Load || e.op == TraceOp::Store) && !open.empty()) {
        int r = region_index_of_vaddr(e.vaddr);
        if (r >= 0)
          for (std::uint32_t k : open) {
            auto& v = kernel_regions_[k];
            if (std::find(v.begin(), v.end(), r) == v.end()) v.push_back(r);
          }
      }
    }
    for (auto& [k, v] : kernel_regions_) std::sort(v.begin(), v.end());
  }

  KernelStats& stats_for(std::uint32_t id, char site) {
    auto it = kernel_stats_.find(id);
    if (it == kernel_stats_.end()) {
      KernelStats ks;
      ks.id = id;
      auto nit = trace_.kernel_names.find(id);
      ks.name = nit == trace_.kernel_names.end() ? "" : nit->second;
      ks.site = site;
      it = kernel_stats_.emplace(id, ks).first;
    }
    return it->second;
  }

  std::uint32_t active_kernel(const AgentState& a) const {
    return a.kstack.empty() ? 0 : a.kstack.back();
  }

  void charge(EventKind kind, std::uint64_t qty, std::uint32_t kernel) {
    account(kind, qty, report_.energy, cfg_);
    if (kernel != 0) account(kind, qty, stats_for(kernel, 'c').energy, cfg_);
    if (kind == EventKind::ChannelTransfer)
      report_.counters.offchip_bytes += qty * cfg_.line_size;
    else if (kind == EventKind::CoherenceMessage)
      report_.counters.offchip_bytes += qty * 8;
  }

  void advance(AgentState& a, Cycles dt, std::uint32_t kernel) {
    a.now += dt;
    if (kernel != 0) stats_for(kernel, 'c').cycles += dt;
  }

  void note_instruction(std::uint32_t kernel) {
    if (kernel != 0) ++stats_for(kernel, 'c').instructions;
  }

  void race_check(Line line, Cycles now) {
    auto it = pei_line_busy_.find(line);
    if (it != pei_line_busy_.end() && it->second > now) ++report_.counters.race_warnings;
  }

  Token next_token(Agent a) {
    return (static_cast<Token>(static_cast<int>(a) + 1) << 32) | ++store_seq_[static_cast<int>(a)];
  }

  // ---- CPU ----------------------------------------------------------------

  void step_cpu() {
    const TraceEvent& e = (*cpu_.stream)[cpu_.pc];
    const std::uint32_t k = active_kernel(cpu_);
    switch (e.op) {
      case TraceOp::Compute:
        charge(EventKind::CpuCompute, e.cycles, k);
        advance(cpu_, e.cycles, k);
        note_instruction(k);
        ++cpu_.pc;
        break;
      case TraceOp::Load:
      case TraceOp::Store: {
        if (!cpu_memory_access(e, k)) return;  // stalled, retry later
        ++cpu_.pc;
        break;
      }
      case TraceOp::KernelBegin: {
        if (!cpu_only_ && plan_.contains(e.kernel_id) && accelerator_accepts(e.granularity)) {
          dispatch_kernel(e.kernel_id);
          return;  // pc advanced past the kernel by dispatch
        }
        if (!cpu_only_ && plan_.contains(e.kernel_id)) ++report_.counters.offload_rejected;
        stats_for(e.kernel_id, 'c');
        cpu_.kstack.push_back(e.kernel_id);
        ++cpu_.pc;
        break;
      }
      case TraceOp::KernelEnd:
        cpu_.kstack.pop_back();
        completion_[e.kernel_id] = cpu_.now;
        ++cpu_.pc;
        break;
      case TraceOp::Pei:
        issue_pei(e, k);
        ++cpu_.pc;
        break;
      case TraceOp::Fence: {
        if (e.kernel_id == 0) {
          Cycles done = pei_fence_target_(0);
          advance(cpu_, (done > cpu_.now ? done - cpu_.now : 0) + 1, k);
          ++cpu_.pc;
        } else if (completion_.count(e.kernel_id)) {
          Cycles done = completion_[e.kernel_id];
          advance(cpu_, (done > cpu_.now ? done - cpu_.now : 0) + 1, k);
          ++cpu_.pc;
        } else if (kernel_pending(e.kernel_id)) {
          cpu_.blocked = true;
          cpu_.blocked_join = e.kernel_id;
        } else {
          advance(cpu_, 1, k);  // join on a kernel that never ran: no-op
          ++cpu_.pc;
        }
        break;
      }
    }
  }

  bool accelerator_accepts(Granularity g) const {
    if (cfg_.pim_core_kind == PimCoreKind::GeneralCore) return true;
    return g == Granularity::Function;  // fixed-function units only run their function
  }

  bool kernel_pending(std::uint32_t id) const {
    if (pim_ctx_ && pim_ctx_->id == id) return true;
    for (const Dispatched& d : queue_)
      if (d.id == id) return true;
    return false;
  }

  // charges one cpu data access end to end; false means the access stalled
  bool cpu_memory_access(const TraceEvent& e, std::uint32_t k) {
    TranslateResult tr = cpu_walker_.translate(e.vaddr);
    const Line line = line_of(tr.paddr, cfg_);
    const AccessKind kind = e.op == TraceOp::Load ? AccessKind::Read : AccessKind::Write;
    Token tok = kind == AccessKind::Write ? next_token(Agent::Cpu) : 0;
    AccessOutcome out = ms_->cpu_access(line, kind, tok);
    if (out.decision == Decision::Stall) {
      // the drawn token was never used; the retry must reuse its number
      if (kind == AccessKind::Write) --store_seq_[static_cast<int>(Agent::Cpu)];
      if (!cpu_.blocked) ++report_.counters.cpu_stall_events;
      cpu_.blocked = true;
      cpu_.blocked_region = region_index_of_line(line);
      return false;
    }
    race_check(line, cpu_.now);
    Cycles lat = tr.walk_accesses * cfg_.lat_dram_local_vault;
    if (tr.walk_accesses) charge(EventKind::DramAccess, tr.walk_accesses, k);
    const bool nc_bypass = mech_ == Mechanism::Nc && region_index_of_line(line) >= 0;
    if (nc_bypass) {
      charge(EventKind::DramAccess, 1, k);
      charge(EventKind::ChannelTransfer, 1, k);
      lat += cfg_.lat_channel_round_trip + cfg_.lat_dram_local_vault;
      if (k != 0) stats_for(k, 'c').dram_misses += 1;
    } else {
      charge(EventKind::CacheAccess, 1, k);
      lat += cfg_.lat_cpu_cache_hit;
      if (!out.cache_hit) {
        charge(EventKind::DramAccess, out.dram_line_accesses, k);
        charge(EventKind::ChannelTransfer, out.dram_line_accesses, k);
        lat += cfg_.lat_channel_round_trip + cfg_.lat_dram_local_vault;
        if (k != 0) stats_for(k, 'c').dram_misses += out.dram_line_accesses;
      }
      if (out.writebacks) {
        charge(EventKind::DramAccess, out.writebacks, k);
        charge(EventKind::ChannelTransfer, out.writebacks, k);
      }
    }
    advance(cpu_, lat, k);
    note_instruction(k);
    return true;
  }

  void dispatch_kernel(std::uint32_t id) {
    // find the matching end marker; traces are validated, so it exists
    std::size_t depth = 0;
    std::size_t i = cpu_.pc;
    for (;; ++i) {
      const TraceEvent& e = (*cpu_.stream)[i];
      if (e.op == TraceOp::KernelBegin) ++depth;
      else if (e.op == TraceOp::KernelEnd && --depth == 0) break;
    }
    Dispatched d;
    d.id = id;
    d.body.assign(cpu_.stream->begin() + static_cast<std::ptrdiff_t>(cpu_.pc),
                  cpu_.stream->begin() + static_cast<std::ptrdiff_t>(i + 1));
    charge(EventKind::CoherenceMessage, 1, active_kernel(cpu_));  // launch command
    advance(cpu_, cfg_.lat_channel_round_trip, active_kernel(cpu_));
    d.ready = cpu_.now;
    queue_.push_back(std::move(d));
    cpu_.pc = i + 1;
  }

  void issue_pei(const TraceEvent& e, std::uint32_t k) {
    PeiOp op = PeiOp::make(e.opcode, e.vaddr, e.operand, 0, cfg_.line_size);
    TranslateResult tr = cpu_walker_.translate(op.vaddr);  // CPU-side translation
    if (tr.walk_accesses) charge(EventKind::DramAccess, tr.walk_accesses, k);
    const Line line = line_of(tr.paddr, cfg_);
    PeiDispatch where = pmu_dispatch(ms_->cache(), tr.paddr, cfg_);
    Cycles start = std::max(cpu_.now + 1, pei_line_busy_.count(line) ? pei_line_busy_[line] : 0);
    Cycles exec;
    if (where.host) {
      exec = cfg_.lat_cpu_cache_hit + 1;
      charge(EventKind::CacheAccess, 1, k);
      charge(EventKind::CpuCompute, 1, k);
      CpuCache::Slot* s = ms_->cache().find(line);
      s->state = LineState::Modified;  // host unit updates the cached copy
      s->token = next_token(Agent::Cpu);
    } else {
      exec = cfg_.lat_channel_round_trip + cfg_.lat_dram_local_vault + 1;
      charge(EventKind::ChannelTransfer, 1, k);
      charge(EventKind::DramAccess, 1, k);
      charge(EventKind::PimCompute, 1, k);
    }
    pei_mem_.apply(op.opcode, tr.paddr, op.operand);
    Cycles done = start + exec;
    pei_line_busy_[line] = done;
    pei_inflight_.push_back(done);
    advance(cpu_, 1 + tr.walk_accesses * cfg_.lat_dram_local_vault, k);  // async issue
    note_instruction(k);
  }

  Cycles pei_fence_target_(std::uint32_t /*core*/) {
    Cycles t = cpu_.now;
    for (Cycles c : pei_inflight_) t = std::max(t, c);
    pei_inflight_.clear();
    return t;
  }

  // ---- PIM ----------------------------------------------------------------

  bool pim_has_work() const {
    return pim_.pc < pim_.stream->size() || !queue_.empty() || pim_body_.has_value();
  }

  Cycles pim_now_for_pick() const {
    if (pim_body_ || pim_.pc < pim_.stream->size()) return pim_.now;
    return std::max(pim_.now, queue_.front().ready);
  }

  const TraceEvent& pim_event(std::size_t idx) const {
    return pim_body_ ? (*pim_body_)[idx] : (*pim_.stream)[idx];
  }

  void step_pim() {
    if (!pim_body_ && pim_.pc >= pim_.stream->size()) {
      // start the next dispatched kernel
      Dispatched d = std::move(queue_.front());
      queue_.pop_front();
      pim_.now = std::max(pim_.now, d.ready);
      pim_body_ = std::move(d.body);
      pim_body_pc_ = 0;
    }
    std::size_t& pc = pim_body_ ? pim_body_pc_ : pim_.pc;
    const TraceEvent& e = pim_event(pc);
    const std::uint32_t k = pim_ctx_ ? pim_ctx_->id : 0;

    switch (e.op) {
      case TraceOp::Compute: {
        double mult = cfg_.pim_cycle_ratio;
        if (cfg_.pim_core_kind == PimCoreKind::FixedAccelerator)
          mult *= cfg_.accel_compute_multiplier;
        Cycles eff = static_cast<Cycles>(std::llround(static_cast<double>(e.cycles) * mult));
        if (e.cycles > 0 && eff == 0) eff = 1;
        charge_pim(EventKind::PimCompute, eff, k);
        advance_pim(eff, k);
        if (k) ++stats_for(k, 'p').instructions;
        ++pc;
        break;
      }
      case TraceOp::Load:
      case TraceOp::Store:
        pim_memory_access(e, k);
        ++pc;
        break;
      case TraceOp::KernelBegin:
        pim_kernel_begin(e, pc);
        ++pc;
        break;
      case TraceOp::KernelEnd: {
        if (!pim_kernel_end(pc)) break;  // rolled back; pc was rewound
        ++pc;
        if (pim_body_ && pim_body_pc_ >= pim_body_->size()) {
          pim_body_.reset();
          pim_body_pc_ = 0;
        }
        break;
      }
      case TraceOp::Pei:
        throw SimError("PEI in the PIM stream is not supported", k, e.vaddr);
      case TraceOp::Fence:
        advance_pim(1, k);
        ++pc;
        break;
    }
  }

  void charge_pim(EventKind kind, std::uint64_t qty, std::uint32_t kernel) {
    account(kind, qty, report_.energy, cfg_);
    if (kernel != 0) account(kind, qty, stats_for(kernel, 'p').energy, cfg_);
    if (kind == EventKind::ChannelTransfer)
      report_.counters.offchip_bytes += qty * cfg_.line_size;
    else if (kind == EventKind::CoherenceMessage)
      report_.counters.offchip_bytes += qty * 8;
  }

  void advance_pim(Cycles dt, std::uint32_t kernel) {
    pim_.now += dt;
    if (kernel != 0) stats_for(kernel, 'p').cycles += dt;
  }

  void pim_kernel_begin(const TraceEvent& e, std::size_t kb_idx) {
    if (pim_ctx_ && kb_idx != pim_ctx_->kb_idx) {
      ++pim_ctx_->depth;  // nested marker, the enclosing kernel stays in charge
      return;
    }
    if (!pim_ctx_) {
      PimKernelCtx c;
      c.id = e.kernel_id;
      c.kb_idx = kb_idx;
      c.store_seq_at_begin = store_seq_[static_cast<int>(Agent::Pim)];
      auto it = kernel_regions_.find(e.kernel_id);
      if (it != kernel_regions_.end()) c.regions = it->second;
      pim_ctx_ = c;
      stats_for(e.kernel_id, 'p').site = 'p';
    }
    pim_stream_buf_.clear();
    if (mech_ == Mechanism::Cg || pim_ctx_->fallback) {
      if (!pim_ctx_->locks_held) {
        for (int r : pim_ctx_->regions) {
          AccessOutcome out = ms_->cg_acquire(Agent::Pim, static_cast<std::size_t>(r));
          charge_pim(EventKind::CoherenceMessage, out.messages, pim_ctx_->id);
          if (out.writebacks) {
            charge_pim(EventKind::DramAccess, out.writebacks, pim_ctx_->id);
            charge_pim(EventKind::ChannelTransfer, out.writebacks, pim_ctx_->id);
          }
          advance_pim(cfg_.lat_channel_round_trip, pim_ctx_->id);
        }
        pim_ctx_->locks_held = true;
      }
    } else if (mech_ == Mechanism::Conda && !ms_->epoch_active()) {
      ms_->conda_begin_epoch();
    }
  }

  // true when the kernel completed (committed or non-speculative)
  bool pim_kernel_end(std::size_t ke_idx) {
    (void)ke_idx;
    if (pim_ctx_->depth > 0) {
      --pim_ctx_->depth;  // closing a nested marker
      return true;
    }
    PimKernelCtx& c = *pim_ctx_;
    if (mech_ == Mechanism::Conda && !c.fallback) {
      AccessOutcome out = ms_->conda_resolve_epoch();
      charge_pim(EventKind::CoherenceMessage, out.messages, c.id);
      report_.counters.offchip_bytes += 2ull * ((cfg_.signature_bits + 7) / 8);
      if (out.writebacks) {
        charge_pim(EventKind::DramAccess, out.writebacks, c.id);
        charge_pim(EventKind::ChannelTransfer, out.writebacks, c.id);
      }
      advance_pim(cfg_.lat_channel_round_trip, c.id);
      if (out.decision == Decision::Conflict) {
        ++c.attempts;
        ms_->conda_rollback();
        if (c.attempts >= cfg_.conda_max_rollbacks) {
          ms_->conda_abandon_epoch();
          c.fallback = true;
          ++report_.counters.cg_fallbacks;
        }
        // rewind to the kernel begin marker and run the attempt again; the
        // replayed stores must carry the tokens of the discarded attempt
        c.depth = 0;
        store_seq_[static_cast<int>(Agent::Pim)] = c.store_seq_at_begin;
        if (pim_body_)
          pim_body_pc_ = c.kb_idx;
        else
          pim_.pc = c.kb_idx;
        pim_stream_buf_.clear();
        pim_kernel_begin(pim_event(c.kb_idx), c.kb_idx);
        if (pim_body_) ++pim_body_pc_; else ++pim_.pc;
        return false;
      }
    }
    if (c.locks_held) {
      for (int r : c.regions) {
        AccessOutcome out = ms_->cg_release(Agent::Pim, static_cast<std::size_t>(r));
        charge_pim(EventKind::CoherenceMessage, out.messages, c.id);
        advance_pim(cfg_.lat_channel_round_trip, c.id);
        if (cpu_.blocked && cpu_.blocked_region == r) {
          cpu_.blocked = false;
          cpu_.blocked_region = -1;
          cpu_.now = std::max(cpu_.now, pim_.now);
        }
      }
      c.locks_held = false;
    }
    completion_[c.id] = pim_.now;
    if (cpu_.blocked && cpu_.blocked_join == c.id) {
      cpu_.blocked = false;
      cpu_.blocked_join = 0;
    }
    pim_ctx_.reset();
    return true;
  }

  void pim_memory_access(const TraceEvent& e, std::uint32_t k) {
    TranslateResult tr;
    try {
      tr = pim_walker_.translate(e.vaddr);
    } catch (const TranslationFault& f) {
      throw SimError("PIM translation fault: vaddr outside every region", k, f.vaddr);
    }
    const Line line = line_of(tr.paddr, cfg_);
    const AccessKind kind = e.op == TraceOp::Load ? AccessKind::Read : AccessKind::Write;
    Token tok = kind == AccessKind::Write ? next_token(Agent::Pim) : 0;

    if (mech_ == Mechanism::Conda && !pim_ctx_)
      throw SimError("PIM access outside a kernel under optimistic coherence", k, e.vaddr);

    AccessOutcome out;
    if (pim_ctx_ && pim_ctx_->fallback)
      out = ms_->pim_access_direct(line, kind, tok);
    else
      out = ms_->pim_access(line, kind, tok);

    race_check(line, pim_.now);

    Cycles lat = tr.walk_accesses * cfg_.lat_dram_local_vault;
    if (tr.walk_accesses) charge_pim(EventKind::DramAccess, tr.walk_accesses, k);

    if (pim_ctx_ && !pim_ctx_->home_vault)
      pim_ctx_->home_vault = vault_of(tr.paddr, cfg_);

    const bool buffered = stream_buf_probe(line);
    const bool fresh = out.messages > 0;  // data crossed the channel this access
    if (buffered && !fresh) {
      lat += 1;
    } else {
      charge_pim(EventKind::DramAccess, 1, k);
      const std::uint32_t v = vault_of(tr.paddr, cfg_);
      const bool local = !pim_ctx_ || !pim_ctx_->home_vault || *pim_ctx_->home_vault == v;
      lat += local ? cfg_.lat_dram_local_vault : cfg_.lat_dram_remote_vault;
      if (k) ++stats_for(k, 'p').dram_misses;
    }
    if (out.messages) {
      charge_pim(EventKind::CoherenceMessage, out.messages, k);
      lat += out.messages * cfg_.lat_channel_round_trip;
    }
    if (out.writebacks) {
      charge_pim(EventKind::DramAccess, out.writebacks, k);
      charge_pim(EventKind::ChannelTransfer, out.writebacks, k);
    }
    advance_pim(lat, k);
    if (k) ++stats_for(k, 'p').instructions;
  }

  bool stream_buf_probe(Line line) {
    auto it = std::find(pim_stream_buf_.begin(), pim_stream_buf_.end(), line);
    if (it != pim_stream_buf_.end()) {
      pim_stream_buf_.erase(it);
      pim_stream_buf_.push_back(line);  // LRU refresh
      return true;
    }
    pim_stream_buf_.push_back(line);
    if (pim_stream_buf_.size() > cfg_.pim_stream_buffers) pim_stream_buf_.erase(pim_stream_buf_.begin());
    return false;
  }

  // ---- wrap-up ------------------------------------------------------------

  void finish() {
    std::uint32_t wbs = ms_->finalize();
    if (wbs) {
      charge(EventKind::DramAccess, wbs, 0);
      charge(EventKind::ChannelTransfer, wbs, 0);
    }
    Cycles pei_done = 0;
    for (const auto& [l, t] : pei_line_busy_) pei_done = std::max(pei_done, t);
    report_.schema = 1;
    report_.mechanism = cpu_only_ ? "cpu-only" : mechanism_name(mech_);
    report_.xlat = page_table_mode_name(pim_walker_.mode());
    report_.seed = seed_;
    report_.config_digest = config_digest(cfg_);
    report_.cpu_cycles = cpu_.now;
    report_.pim_cycles = pim_.now;
    report_.total_cycles = std::max({cpu_.now, pim_.now, pei_done});
    report_.counters.coherence_messages = ms_->coherence_messages;
    report_.counters.rollbacks = ms_->rollbacks;
    report_.counters.page_walk_accesses =
        cpu_walker_.walk_accesses_total() + pim_walker_.walk_accesses_total();
    report_.counters.tlb_misses = cpu_walker_.tlb_misses() + pim_walker_.tlb_misses();
    report_.counters.dram_accesses =
        report_.energy.count[static_cast<std::size_t>(EventKind::DramAccess)];
    report_.counters.cache_hits = ms_->cache().hits;
    report_.counters.cache_misses = ms_->cache().misses;
    for (const auto& [id, ks] : kernel_stats_) report_.kernels.push_back(ks);
  }

  const MachineConfig& cfg_;
  const Trace& trace_;
  Mechanism mech_;
  OffloadPlan plan_;
  std::uint64_t seed_;
  bool cpu_only_;

  RegionTable region_table_;
  std::unordered_map<Addr, int> frame_region_;  // page frame -> region index
  Walker cpu_walker_;
  Walker pim_walker_;
  std::optional<MemorySystem> ms_;

  std::vector<TraceEvent> combined_;
  std::vector<TraceEvent> empty_;
  AgentState cpu_;
  AgentState pim_;

  std::deque<Dispatched> queue_;
  std::optional<std::vector<TraceEvent>> pim_body_;
  std::size_t pim_body_pc_ = 0;
  std::optional<PimKernelCtx> pim_ctx_;
  std::vector<Line> pim_stream_buf_;

  std::map<std::uint32_t, Cycles> completion_;
  std::map<std::uint32_t, std::vector<int>> kernel_regions_;
  std::map<std::uint32_t, KernelStats> kernel_stats_;

  PeiMemory pei_mem_;
  std::map<Line, Cycles> pei_line_busy_;
  std::vector<Cycles> pei_inflight_;
  std::uint64_t store_seq_[2] = {0, 0};

  MetricsReport report_;
};

inline MetricsReport simulate(const MachineConfig& cfg, const Trace& trace, Mechanism mech,
                              const OffloadPlan& plan, PageTableMode pim_xlat, std::uint64_t seed,
                              bool cpu_only = false) {
  Simulation s(cfg, trace, mech, plan, pim_xlat, seed, cpu_only);
  return s.run();
}

// The standard comparison: everything on the CPU, then each mechanism with the
// same offload plan.
inline std::vector<MetricsReport> compare_mechanisms(const MachineConfig& cfg, const Trace& trace,
                                                     const OffloadPlan& plan,
                                                     PageTableMode pim_xlat, std::uint64_t seed) {
  std::vector<MetricsReport> out;
  out.push_back(simulate(cfg, trace, Mechanism::Fg, plan, pim_xlat, seed, /*cpu_only=*/true));
  for (Mechanism m :
       {Mechanism::Fg, Mechanism::Cg, Mechanism::Nc, Mechanism::Conda, Mechanism::Ideal})
    out.push_back(simulate(cfg, trace, m, plan, pim_xlat, seed));
  return out;
}

}  // namespace pimsim
