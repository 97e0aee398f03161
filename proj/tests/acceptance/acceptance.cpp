// End-to-end acceptance checks. Each criterion prints exactly one PASS or
// FAIL line; the exit status is nonzero if any criterion failed. Tolerances
// are stated in the line itself where a criterion is statistical.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "pimsim/analyzer.hpp"
#include "pimsim/coherence.hpp"
#include "pimsim/engine.hpp"
#include "pimsim/rng.hpp"
#include "pimsim/signature.hpp"
#include "pimsim/trace_gen.hpp"
#include "pimsim/xlat.hpp"

#include "interleave_oracle.hpp"
#include "random_trials.hpp"

using namespace pimsim;

namespace {

int failures = 0;

void report(int idx, bool ok, const std::string& desc, const std::string& detail = "") {
  if (ok) {
    std::printf("PASS [%d] %s\n", idx, desc.c_str());
  } else {
    std::string suffix = detail.empty() ? "" : " -- " + detail;
    std::printf("FAIL [%d] %s%s\n", idx, desc.c_str(), suffix.c_str());
    ++failures;
  }
  std::fflush(stdout);
}

// ---- [1] region translation does half the walk work ------------------------

void criterion_translation() {
  RegionTable rt;
  const Addr base = 1ull << 20;
  const std::size_t pages = 1000;
  rt.register_region(base, base + pages * kPageSize, 42);
  Walker conv(PageTableMode::Conventional4Level, &rt, 2048);
  Walker regw(PageTableMode::RegionBased, &rt, 2048);
  bool same_paddr = true;
  for (std::size_t i = 0; i < pages; ++i) {
    Addr a = base + i * kPageSize + 17;
    same_paddr &= conv.translate(a).paddr == regw.translate(a).paddr;
  }
  bool ok = conv.walk_accesses_total() == 4000 && regw.walk_accesses_total() == 2000 &&
            conv.tlb_misses() == 1000 && regw.tlb_misses() == 1000 && same_paddr;
  char detail[160];
  std::snprintf(detail, sizeof detail, "conv walks %llu, region walks %llu, same paddr %d",
                (unsigned long long)conv.walk_accesses_total(),
                (unsigned long long)regw.walk_accesses_total(), (int)same_paddr);
  report(1, ok,
         "region translation: 2 table accesses per miss vs 4 conventional over 1000 pages, "
         "identical physical addresses",
         detail);
}

// ---- [2] final memory is always brute-force reachable ----------------------

void criterion_interleaving_oracle() {
  const int trials_n = 10000;
  int bad = 0;
  std::string first_detail;
  for (int s = 0; s < trials_n; ++s) {
    trials::TrialResult r = trials::check_small_trace_trial(static_cast<std::uint64_t>(s));
    if (!r.ok) {
      if (bad == 0) first_detail = "seed " + std::to_string(s) + ": " + r.detail;
      ++bad;
    }
  }
  report(2, bad == 0,
         "10000 randomized traces: every mechanism's final memory lies in the brute-force "
         "interleaving set",
         bad ? first_detail + " (" + std::to_string(bad) + " bad)" : "");
}

// ---- [3] epoch conflict detection has no false negatives -------------------

void criterion_epochs() {
  MachineConfig cfg;
  Rng rng(0xacce97a);
  auto region_of = [](Line) { return -1; };

  int conflicts = 0;
  const int overlap_trials = 10000;
  for (int t = 0; t < overlap_trials; ++t) {
    MemorySystem ms(cfg, Mechanism::Conda, 0, region_of);
    ms.conda_begin_epoch();
    Line hot = 4096 + rng.next_below(1024);
    for (int j = 0; j < 8; ++j)
      ms.pim_access(rng.next_below(65536), j % 2 ? AccessKind::Read : AccessKind::Write,
                    (Token(2) << 32) | (j + 1));
    int kind = t % 3;
    ms.pim_access(hot, kind == 1 ? AccessKind::Read : AccessKind::Write, (Token(2) << 32) | 99);
    ms.cpu_access(hot, kind == 0 ? AccessKind::Read : AccessKind::Write, (Token(1) << 32) | 1);
    conflicts += ms.conda_resolve_epoch().decision == Decision::Conflict;
  }

  int commits = 0;
  const int disjoint_trials = 10000;
  for (int t = 0; t < disjoint_trials; ++t) {
    MemorySystem ms(cfg, Mechanism::Conda, 0, region_of);
    ms.conda_begin_epoch();
    for (int j = 0; j < 16; ++j)
      ms.pim_access(rng.next_below(65536), j % 2 ? AccessKind::Read : AccessKind::Write,
                    (Token(2) << 32) | (j + 1));
    for (int j = 0; j < 16; ++j)
      ms.cpu_access((1u << 20) + rng.next_below(65536),
                    j % 3 ? AccessKind::Read : AccessKind::Write, (Token(1) << 32) | (j + 1));
    commits += ms.conda_resolve_epoch().decision == Decision::Proceed;
  }

  bool ok = conflicts == overlap_trials && commits >= disjoint_trials * 99 / 100;
  char detail[120];
  std::snprintf(detail, sizeof detail, "overlap conflicts %d/%d, disjoint commits %d/%d",
                conflicts, overlap_trials, commits, disjoint_trials);
  report(3, ok,
         "10000 overlapping epochs all conflict; disjoint epochs commit in at least 99 "
         "percent of 10000 trials",
         detail);
}

// ---- [4] signature false positive rate matches the analytic rate -----------

void criterion_signature_fpr() {
  struct Point {
    std::uint32_t members;
    double lo, hi;  // allowed ratio of measured to analytic
  };
  // At the operating fill the measured rate tracks the per-instance analytic
  // rate (popcount over size, to the number of hashes) within a percent or
  // two. Sparse fills run hot because the probe bits form a stepped sequence
  // rather than four independent draws, so that point gets a wider band.
  const Point points[] = {{256, 0.8, 1.2}, {64, 0.8, 2.0}};
  const std::uint64_t probes = 2000000;
  bool ok = true;
  std::string detail;
  for (const Point& pt : points) {
    Signature sig(2048, 4);
    for (std::uint32_t i = 0; i < pt.members; ++i) sig.insert(0x100000000ull + 2ull * i + 1);
    bool all_found = true;
    for (std::uint32_t i = 0; i < pt.members; ++i)
      all_found &= sig.maybe_contains(0x100000000ull + 2ull * i + 1);
    double cond = std::pow(static_cast<double>(sig.popcount()) / 2048.0, 4.0);
    std::uint64_t hits = 0;
    for (std::uint64_t p = 0; p < probes; ++p) hits += sig.maybe_contains(2 * (p + 1));
    double m = static_cast<double>(hits) / static_cast<double>(probes);
    ok = ok && all_found && m >= pt.lo * cond && m <= pt.hi * cond;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%u members %.3g vs %.3g (x%.2f) ", pt.members, m, cond,
                  m / cond);
    detail += buf;
  }
  report(4, ok,
         "bloom filter: no false negatives; false positive rate within 0.8x to 1.2x of "
         "analytic at 256 members and 0.8x to 2.0x at 64 over 2000000 probes",
         detail);
}

// ---- [5] optimistic coherence beats fine-grained on shared workloads -------

void criterion_conda_vs_fg() {
  MachineConfig cfg;
  int msg_wins = 0, cycle_order = 0;
  const int seeds = 50;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    Trace t = gen_shared_trace(5000, 0.05, s);
    MetricsReport fg = simulate(cfg, t, Mechanism::Fg, {}, PageTableMode::RegionBased, s);
    MetricsReport conda = simulate(cfg, t, Mechanism::Conda, {}, PageTableMode::RegionBased, s);
    MetricsReport ideal = simulate(cfg, t, Mechanism::Ideal, {}, PageTableMode::RegionBased, s);
    msg_wins += conda.counters.coherence_messages < fg.counters.coherence_messages;
    cycle_order += ideal.total_cycles <= conda.total_cycles &&
                   conda.total_cycles <= fg.total_cycles;
  }
  bool ok = msg_wins >= 48 && cycle_order >= 48;
  char detail[120];
  std::snprintf(detail, sizeof detail, "message wins %d/%d, cycle ordering %d/%d", msg_wins,
                seeds, cycle_order, seeds);
  report(5, ok,
         "optimistic coherence sends fewer messages than fine-grained and lands between "
         "ideal and fine-grained cycles on 48 of 50 shared workloads",
         detail);
}

// ---- [6] single-line pim operations are atomic and ordered -----------------

void criterion_pei() {
  MachineConfig cfg;
  const Addr w = 0x200000;

  Trace inc;
  inc.space_size = 1ull << 22;
  for (int i = 0; i < 1000; ++i) inc.cpu.push_back(TraceEvent::pei(PeiOpcode::Add, w, 1));
  Simulation sim_inc(cfg, inc, Mechanism::Conda, {}, PageTableMode::RegionBased, 1);
  MetricsReport r = sim_inc.run();
  bool inc_ok = sim_inc.pei_memory().load(w) == 1000 && r.counters.race_warnings == 0;

  Trace mix;
  mix.space_size = 1ull << 22;
  const Addr w2 = w + 64;
  mix.cpu.push_back(TraceEvent::pei(PeiOpcode::Add, w, 5));
  mix.cpu.push_back(TraceEvent::pei(PeiOpcode::Max, w, 3));
  mix.cpu.push_back(TraceEvent::pei(PeiOpcode::Add, w2, 10));
  mix.cpu.push_back(TraceEvent::pei(PeiOpcode::Min, w2, 8));
  std::vector<oracle::PeiIssue> issued = {{PeiOpcode::Add, w, 5},
                                          {PeiOpcode::Max, w, 3},
                                          {PeiOpcode::Add, w2, 10},
                                          {PeiOpcode::Min, w2, 8}};
  auto states = oracle::pei_reachable(issued, {});
  Simulation sim_mix(cfg, mix, Mechanism::Conda, {}, PageTableMode::RegionBased, 1);
  sim_mix.run();
  std::map<Addr, std::int64_t> got = {{w, sim_mix.pei_memory().load(w)},
                                      {w2, sim_mix.pei_memory().load(w2)}};
  bool mix_ok = states.size() == 1 && states.count(got) == 1;

  char detail[120];
  std::snprintf(detail, sizeof detail, "sum %lld, races %llu, mixed states %zu, member %d",
                (long long)sim_inc.pei_memory().load(w),
                (unsigned long long)r.counters.race_warnings, states.size(), (int)mix_ok);
  report(6, inc_ok && mix_ok,
         "1000 single-word pim increments total exactly 1000 with no race warnings; a mixed "
         "add/min/max sequence matches the order-preserving oracle",
         detail);
}

// ---- [7] pipeline offload pays off and scales ------------------------------

void criterion_gemm_sweep() {
  MachineConfig cfg;
  std::vector<std::uint32_t> nops = {1, 2, 4, 8, 16};
  std::vector<double> sp;
  for (std::uint32_t n : nops) {
    Trace t = gen_gemm_pipeline_trace(n, 16384, 7);
    OffloadPlan plan = OffloadPlan::by_names(t, {"pack", "quantize", "unpack"});
    MetricsReport host = simulate(cfg, t, Mechanism::Conda, plan, PageTableMode::RegionBased, 7,
                                  /*cpu_only=*/true);
    MetricsReport off = simulate(cfg, t, Mechanism::Conda, plan, PageTableMode::RegionBased, 7);
    sp.push_back(static_cast<double>(host.total_cycles) / static_cast<double>(off.total_cycles));
  }
  bool ok = sp[0] > 1.0;
  for (std::size_t i = 0; i + 1 < sp.size(); ++i) ok = ok && sp[i + 1] >= sp[i] * 0.995;
  char detail[160];
  std::snprintf(detail, sizeof detail, "speedups %.3f %.3f %.3f %.3f %.3f", sp[0], sp[1], sp[2],
                sp[3], sp[4]);
  report(7, ok,
         "gemm pipeline offload: speedup above 1 at one op and nondecreasing within 0.5 "
         "percent across 1, 2, 4, 8, 16 ops",
         detail);
}

// ---- [8] quantize workload shape and energy split --------------------------

void criterion_quantize() {
  MachineConfig cfg;
  Trace t = gen_quantize_trace(100000, 1);
  std::uint64_t loads = 0, stores = 0;
  for (const TraceEvent& e : t.cpu) {
    loads += e.op == TraceOp::Load;
    stores += e.op == TraceOp::Store;
  }
  MetricsReport r = simulate(cfg, t, Mechanism::Fg, {}, PageTableMode::RegionBased, 1,
                             /*cpu_only=*/true);
  std::uint64_t instr = 0;
  for (const KernelStats& k : r.kernels)
    if (k.name == "quantize") instr = k.instructions;
  double dm = r.energy.data_movement_fraction();
  bool ok = loads == 200000 && stores == 100000 && instr == 500000 && dm >= 0.6;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "loads %llu, stores %llu, instructions %llu, movement fraction %.3f",
                (unsigned long long)loads, (unsigned long long)stores,
                (unsigned long long)instr, dm);
  report(8, ok,
         "quantize at 100000 elements: exactly 200000 loads, 100000 stores, 500000 kernel "
         "instructions, data movement at least 60 percent of energy",
         detail);
}

// ---- [9] candidate and discard rules at their thresholds -------------------

void criterion_analyzer_edges() {
  auto mk = [](const char* name, double et, double edm, double mpki, double ratio, double area,
               std::uint64_t shared, std::uint64_t touched) {
    FunctionProfile p;
    p.name = name;
    p.energy_total = et;
    p.energy_data_movement = edm;
    p.mpki = mpki;
    p.pim_runtime_ratio = ratio;
    p.est_area_mm2 = area;
    p.shared_lines = shared;
    p.lines_touched = touched;
    p.workload_energy_total = 1000.0;
    return p;
  };
  std::vector<FunctionProfile> rows = {
      mk("hog", 500, 120, 5.0, 0.9, 3.0, 5, 1000),
      mk("at_edges", 400, 200, 10.0, 0.9, 3.0, 5, 1000),
      mk("just_over", 400, 200.1, 5.0, 1.001, 3.0, 5, 1000),
      mk("d3_edge", 100, 10, 10.01, 1.0, 3.5, 10, 1000),
      mk("d3_fail", 100, 10, 10.01, 1.0, 3.5, 11, 1000),
  };
  std::vector<Verdict> v = evaluate_targets(rows, Thresholds{});
  bool ok = v[0].candidate && v[0].offload &&       // C1 takes the maximum
            !v[1].candidate &&                      // C2, C3, C4 all exactly at the cut
            v[2].candidate && !v[2].offload &&      // C2 fires, D1 just over
            v[3].candidate && v[3].offload &&       // D1, D2, D3 all exactly at the limit
            v[4].candidate && !v[4].offload;        // D3 one line over
  for (const Verdict& each : v) ok = ok && each.rules.size() == 7;
  ok = ok && !v[1].rules[1].pass && !v[1].rules[2].pass && !v[1].rules[3].pass;
  ok = ok && v[3].rules[4].pass && v[3].rules[5].pass && v[3].rules[6].pass;
  std::string detail;
  for (const Verdict& each : v)
    detail += each.name + (each.candidate ? "/c" : "/-") + (each.offload ? "o " : "- ");
  report(9, ok,
         "profiles pinned to rule thresholds: candidate rules need strict excess, discard "
         "rules pass at the limit",
         detail);
}

// ---- [10] the cli is byte-stable ------------------------------------------

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run_cli(const std::string& bin, const std::string& args) {
  std::string cmd = "'" + bin + "' " + args + " 2>/dev/null";
  FILE* f = popen(cmd.c_str(), "r");
  CmdResult r;
  if (!f) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, f)) > 0) r.out.append(buf, n);
  int status = pclose(f);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void criterion_cli_stability() {
  const char* bin = std::getenv("PIMSIM_BIN");
  if (!bin) {
    report(10, false, "all five cli subcommands byte-identical across reruns",
           "PIMSIM_BIN not set");
    return;
  }
  CmdResult seeded = run_cli(bin, "gen --spec shared:n=300,share=0.1 --seed 4 --out acc_cli.trace");
  std::vector<std::string> cmds = {
      "gen --spec shared:n=300,share=0.1 --seed 4",
      "run --trace acc_cli.trace --mech conda --seed 4",
      "compare --trace acc_cli.trace --seed 4",
      "sweep-gemm --nops 1,2 --elems 256 --seed 4",
      "analyze --trace acc_cli.trace --seed 4",
  };
  bool ok = seeded.code == 0;
  std::string detail = ok ? "" : "trace generation failed";
  for (const std::string& c : cmds) {
    CmdResult a = run_cli(bin, c);
    CmdResult b = run_cli(bin, c);
    if (a.code != 0 || b.code != 0 || a.out != b.out || a.out.empty()) {
      ok = false;
      if (detail.empty())
        detail = "unstable or failing: " + c + " (codes " + std::to_string(a.code) + "," +
                 std::to_string(b.code) + ")";
    }
  }
  report(10, ok, "all five cli subcommands exit 0 and produce byte-identical reruns", detail);
}

}  // namespace

int main() {
  criterion_translation();
  criterion_interleaving_oracle();
  criterion_epochs();
  criterion_signature_fpr();
  criterion_conda_vs_fg();
  criterion_pei();
  criterion_gemm_sweep();
  criterion_quantize();
  criterion_analyzer_edges();
  criterion_cli_stability();
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
