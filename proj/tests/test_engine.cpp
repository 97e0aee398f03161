#include <catch2/catch_amalgamated.hpp>

#include "pimsim/engine.hpp"
#include "pimsim/trace_gen.hpp"

using namespace pimsim;

namespace {

MetricsReport run(const MachineConfig& cfg, const Trace& t, Mechanism m,
                  const OffloadPlan& plan = {}, PageTableMode x = PageTableMode::RegionBased,
                  std::uint64_t seed = 1, bool cpu_only = false) {
  return simulate(cfg, t, m, plan, x, seed, cpu_only);
}

}  // namespace

TEST_CASE("identical inputs produce byte-identical reports") {
  MachineConfig cfg;
  Trace t = gen_shared_trace(2000, 0.1, 7);
  std::string a = run(cfg, t, Mechanism::Conda).to_json().dump();
  std::string b = run(cfg, t, Mechanism::Conda).to_json().dump();
  REQUIRE(a == b);

  Trace g = gen_gemm_pipeline_trace(2, 1024, 1);
  OffloadPlan plan = OffloadPlan::by_names(g, {"pack", "quantize"});
  std::string c = run(cfg, g, Mechanism::Fg, plan).to_json().dump();
  std::string d = run(cfg, g, Mechanism::Fg, plan).to_json().dump();
  REQUIRE(c == d);
}

TEST_CASE("energy is strictly unit cost times event count") {
  MachineConfig cfg;
  Trace t = gen_shared_trace(2000, 0.1, 7);
  MetricsReport rep = run(cfg, t, Mechanism::Conda);
  for (int k = 0; k < kNumEventKinds; ++k) {
    REQUIRE(rep.energy.energy[k] ==
            static_cast<double>(rep.energy.count[k]) * cfg.energy[k]);
  }
  REQUIRE(rep.energy.total() > 0.0);
  REQUIRE(rep.energy.data_movement() <= rep.energy.total());
}

TEST_CASE("per-mechanism coherence message counts on the handoff workload") {
  MachineConfig cfg;
  // zero sharing: the pool is read once by the CPU and once, in slices, by the
  // PIM kernels, so the message counts collapse to closed forms
  Trace t = gen_shared_trace(2000, 0.0, 3);
  REQUIRE(run(cfg, t, Mechanism::Fg).counters.coherence_messages == 256);
  REQUIRE(run(cfg, t, Mechanism::Conda).counters.coherence_messages == 8 * 3);
  REQUIRE(run(cfg, t, Mechanism::Cg).counters.coherence_messages == 8 * 2);
  REQUIRE(run(cfg, t, Mechanism::Nc).counters.coherence_messages == 0);
  REQUIRE(run(cfg, t, Mechanism::Ideal).counters.coherence_messages == 0);
  REQUIRE(run(cfg, t, Mechanism::Conda).counters.rollbacks == 0);
}

TEST_CASE("optimistic coherence lands between ideal and fine grained") {
  MachineConfig cfg;
  Trace t = gen_shared_trace(5000, 0.05, 5);
  MetricsReport fg = run(cfg, t, Mechanism::Fg);
  MetricsReport conda = run(cfg, t, Mechanism::Conda);
  MetricsReport ideal = run(cfg, t, Mechanism::Ideal);
  REQUIRE(conda.counters.coherence_messages < fg.counters.coherence_messages);
  REQUIRE(ideal.total_cycles <= conda.total_cycles);
  REQUIRE(conda.total_cycles <= fg.total_cycles);
  REQUIRE(conda.counters.rollbacks == 0);  // slices are disjoint by construction
}

TEST_CASE("offloaded kernels run on the PIM site") {
  MachineConfig cfg;
  Trace t = gen_quantize_trace(200, 1);
  OffloadPlan plan = OffloadPlan::by_names(t, {"quantize"});

  MetricsReport host = run(cfg, t, Mechanism::Fg);
  REQUIRE(host.kernels.size() == 1);
  REQUIRE(host.kernels[0].site == 'c');
  REQUIRE(host.kernels[0].instructions == 5 * 200);

  MetricsReport pim = run(cfg, t, Mechanism::Fg, plan);
  REQUIRE(pim.kernels.size() == 1);
  REQUIRE(pim.kernels[0].site == 'p');
  REQUIRE(pim.kernels[0].name == "quantize");
  REQUIRE(pim.kernels[0].instructions == 5 * 200);
  // in-region accesses stop crossing the channel once offloaded
  REQUIRE(pim.counters.offchip_bytes < host.counters.offchip_bytes);
}

TEST_CASE("cpu-only mode runs the pim stream on the host") {
  MachineConfig cfg;
  Trace t = gen_pointer_chase_trace(512, 4);
  MetricsReport host = run(cfg, t, Mechanism::Fg, {}, PageTableMode::RegionBased, 1, true);
  MetricsReport near = run(cfg, t, Mechanism::Fg);
  REQUIRE(host.mechanism == "cpu-only");
  REQUIRE(host.kernels[0].site == 'c');
  REQUIRE(near.kernels[0].site == 'p');
  // dependent misses pay the channel on the host and the vault latency in the stack
  REQUIRE(near.total_cycles < host.total_cycles);
  REQUIRE(near.counters.offchip_bytes < host.counters.offchip_bytes);
}

TEST_CASE("fixed accelerators only accept their own function granularity") {
  MachineConfig cfg;
  cfg.pim_core_kind = PimCoreKind::FixedAccelerator;

  Trace t;
  t.space_size = 4 << 20;
  t.regions.push_back({1 << 20, (1 << 20) + kPageSize});
  t.kernel_names[1] = "bulk";
  t.cpu.push_back(TraceEvent::kernel_begin(1, Granularity::BulkOp));
  t.cpu.push_back(TraceEvent::compute(1000));
  t.cpu.push_back(TraceEvent::kernel_end(1));

  OffloadPlan plan;
  plan.kernel_ids.insert(1);
  MetricsReport rep = run(cfg, t, Mechanism::Fg, plan);
  REQUIRE(rep.counters.offload_rejected == 1);
  REQUIRE(rep.kernels[0].site == 'c');

  Trace u = t;
  u.cpu[0] = TraceEvent::kernel_begin(1, Granularity::Function);
  MetricsReport rep2 = run(cfg, u, Mechanism::Fg, plan);
  REQUIRE(rep2.counters.offload_rejected == 0);
  REQUIRE(rep2.kernels[0].site == 'p');
  // the fixed-function unit retires compute at half the general core's cost
  REQUIRE(rep2.energy.count[static_cast<int>(EventKind::PimCompute)] == 500);
}

TEST_CASE("region translation faults surface as simulation errors") {
  Trace t;
  t.space_size = 4 << 20;
  t.regions.push_back({1 << 20, (1 << 20) + kPageSize});
  t.kernel_names[1] = "stray";
  t.pim.push_back(TraceEvent::kernel_begin(1, Granularity::Function));
  t.pim.push_back(TraceEvent::load(0x100, 8));  // outside the region
  t.pim.push_back(TraceEvent::kernel_end(1));

  MachineConfig cfg;
  Simulation bad(cfg, t, Mechanism::Fg, {}, PageTableMode::RegionBased, 1);
  try {
    bad.run();
    FAIL("expected SimError");
  } catch (const SimError& e) {
    REQUIRE(e.vaddr == 0x100);
    REQUIRE(e.kernel_id == 1);
  }

  // the conventional walker translates anything
  Simulation ok(cfg, t, Mechanism::Fg, {}, PageTableMode::Conventional4Level, 1);
  REQUIRE_NOTHROW(ok.run());
}

TEST_CASE("invalid machine configs are rejected at construction") {
  Trace t = gen_quantize_trace(1, 1);
  MachineConfig cfg;
  cfg.pim_cycle_ratio = 0.0;
  REQUIRE_THROWS_AS(Simulation(cfg, t, Mechanism::Fg, {}, PageTableMode::RegionBased, 1),
                    std::invalid_argument);
}

TEST_CASE("a cold load pins the exact accounting chain") {
  Trace t;
  t.space_size = 1 << 20;
  t.cpu.push_back(TraceEvent::load(0x40, 8));
  MachineConfig cfg;
  MetricsReport rep = run(cfg, t, Mechanism::Fg);
  REQUIRE(rep.counters.dram_accesses == 5);  // 4 walk reads plus the fill
  REQUIRE(rep.counters.cache_misses == 1);
  REQUIRE(rep.counters.cache_hits == 0);
  REQUIRE(rep.counters.offchip_bytes == 64);  // one line over the channel
  REQUIRE(rep.counters.tlb_misses == 1);
  REQUIRE(rep.cpu_cycles == 4 * 50 + 1 + 100 + 50);
}

TEST_CASE("non-cacheable region reads pay the channel every time") {
  Trace t;
  t.space_size = 4 << 20;
  t.regions.push_back({1 << 20, (1 << 20) + kPageSize});
  for (int i = 0; i < 3; ++i) t.cpu.push_back(TraceEvent::load(1 << 20, 8));
  MachineConfig cfg;
  MetricsReport rep = run(cfg, t, Mechanism::Nc);
  REQUIRE(rep.counters.cache_hits == 0);
  REQUIRE(rep.counters.cache_misses == 0);
  REQUIRE(rep.energy.count[static_cast<int>(EventKind::CacheAccess)] == 0);
  REQUIRE(rep.counters.dram_accesses == 4 + 3);
  REQUIRE(rep.counters.offchip_bytes == 3 * 64);
  REQUIRE(rep.cpu_cycles == 4 * 50 + 3 * (100 + 50));
}

TEST_CASE("launch cost scales with the channel round trip") {
  Trace t = gen_quantize_trace(100, 1);
  OffloadPlan plan = OffloadPlan::by_names(t, {"quantize"});
  MachineConfig slow;
  slow.lat_channel_round_trip = 300;
  MachineConfig fast;
  MetricsReport a = run(fast, t, Mechanism::Fg, plan);
  MetricsReport b = run(slow, t, Mechanism::Fg, plan);
  // the launch command is the only channel crossing in this run
  REQUIRE(b.total_cycles == a.total_cycles + 200);
}

TEST_CASE("coarse grained locks stall racing cpu writes until release") {
  Trace t;
  t.space_size = 8 << 20;
  const Addr base = 1 << 20;
  t.regions.push_back({base, base + 32 * kPageSize});
  t.kernel_names[1] = "scan";
  t.cpu.push_back(TraceEvent::compute(60000));
  t.cpu.push_back(TraceEvent::store(base, 8));
  t.pim.push_back(TraceEvent::kernel_begin(1, Granularity::Function));
  for (int i = 0; i < 2000; ++i) t.pim.push_back(TraceEvent::load(base + 64ull * i, 8));
  t.pim.push_back(TraceEvent::kernel_end(1));

  MachineConfig cfg;
  Simulation sim(cfg, t, Mechanism::Cg, {}, PageTableMode::RegionBased, 1);
  MetricsReport rep = sim.run();
  REQUIRE(rep.counters.cpu_stall_events == 1);
  REQUIRE(rep.counters.coherence_messages == 2);  // acquire and release
  // the stalled write went through after the release and survives finalize
  REQUIRE(sim.final_memory().size() == 1);
  REQUIRE(sim.final_memory().begin()->second == ((Token(1) << 32) | 1));
  REQUIRE(rep.cpu_cycles > 60000);
}

TEST_CASE("persistent conflicts roll back and then fall back to locking") {
  Trace t;
  t.space_size = 8 << 20;
  const Addr x = 1 << 20;
  t.regions.push_back({x, x + kPageSize});
  t.kernel_names[1] = "hot";
  for (int i = 0; i < 2000; ++i) {
    t.cpu.push_back(TraceEvent::store(x, 8));
    t.cpu.push_back(TraceEvent::compute(100));
  }
  t.pim.push_back(TraceEvent::compute(50));
  t.pim.push_back(TraceEvent::kernel_begin(1, Granularity::Function));
  t.pim.push_back(TraceEvent::load(x, 8));
  t.pim.push_back(TraceEvent::compute(20000));
  t.pim.push_back(TraceEvent::kernel_end(1));

  MachineConfig cfg;
  Simulation sim(cfg, t, Mechanism::Conda, {}, PageTableMode::RegionBased, 1);
  MetricsReport rep = sim.run();
  REQUIRE(rep.counters.rollbacks == cfg.conda_max_rollbacks);
  REQUIRE(rep.counters.cg_fallbacks == 1);
  REQUIRE(rep.counters.cpu_stall_events >= 1);  // stores stall under the fallback lock
  // the cpu keeps storing after the kernel ends, so its 2000th token is last
  REQUIRE(sim.final_memory().size() == 1);
  REQUIRE(sim.final_memory().begin()->second == ((Token(1) << 32) | 2000));
  REQUIRE(rep.kernels[0].site == 'p');
}

TEST_CASE("joins on kernels that never dispatch are cheap no-ops") {
  Trace t;
  t.space_size = 1 << 20;
  t.cpu.push_back(TraceEvent::compute(5));
  t.cpu.push_back(TraceEvent::fence(99));
  MachineConfig cfg;
  MetricsReport rep = run(cfg, t, Mechanism::Fg);
  REQUIRE(rep.cpu_cycles == 6);
}

TEST_CASE("dispatch joins wait for kernel completion") {
  Trace t = gen_quantize_trace(500, 1);
  t.cpu.push_back(TraceEvent::fence(1));
  t.cpu.push_back(TraceEvent::compute(3));
  OffloadPlan plan = OffloadPlan::by_names(t, {"quantize"});
  MachineConfig cfg;
  MetricsReport rep = run(cfg, t, Mechanism::Fg, plan);
  // the cpu slept through the kernel, so its clock ends after the pim clock
  REQUIRE(rep.cpu_cycles >= rep.pim_cycles);
  REQUIRE(rep.kernels[0].site == 'p');
}

TEST_CASE("the comparison sweep covers the host baseline and all mechanisms") {
  MachineConfig cfg;
  Trace t = gen_shared_trace(1000, 0.1, 2);
  std::vector<MetricsReport> rows =
      compare_mechanisms(cfg, t, {}, PageTableMode::RegionBased, 2);
  REQUIRE(rows.size() == 6);
  REQUIRE(rows[0].mechanism == "cpu-only");
  REQUIRE(rows[1].mechanism == "fg");
  REQUIRE(rows[2].mechanism == "cg");
  REQUIRE(rows[3].mechanism == "nc");
  REQUIRE(rows[4].mechanism == "conda");
  REQUIRE(rows[5].mechanism == "ideal");
  for (const MetricsReport& r : rows) REQUIRE(r.total_cycles > 0);
}

TEST_CASE("gemm pipeline kernels report in id order with their labels") {
  MachineConfig cfg;
  Trace t = gen_gemm_pipeline_trace(1, 256, 1);
  MetricsReport rep = run(cfg, t, Mechanism::Fg);
  REQUIRE(rep.kernels.size() == 4);
  REQUIRE(rep.kernels[0].name == "pack");
  REQUIRE(rep.kernels[1].name == "quantize");
  REQUIRE(rep.kernels[2].name == "gemm");
  REQUIRE(rep.kernels[3].name == "unpack");
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(rep.kernels[i].id == i + 1);
}

TEST_CASE("final memory reflects the last writer") {
  Trace t;
  t.space_size = 1 << 20;
  t.cpu.push_back(TraceEvent::store(0x40, 8));
  t.cpu.push_back(TraceEvent::store(0x40, 8));
  t.cpu.push_back(TraceEvent::store(0x80, 8));
  MachineConfig cfg;
  Simulation sim(cfg, t, Mechanism::Fg, {}, PageTableMode::RegionBased, 1);
  sim.run();
  // tokens encode agent and issue order; the second store to the line wins
  REQUIRE(sim.final_memory().at(1) == ((Token(1) << 32) | 2));
  REQUIRE(sim.final_memory().at(2) == ((Token(1) << 32) | 3));
}
