#pragma once

#include <array>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimsim/machine.hpp"
#include "pimsim/types.hpp"

namespace pimsim {

struct EnergyLedger {
  std::array<std::uint64_t, kNumEventKinds> count{};
  std::array<double, kNumEventKinds> energy{};

  double total() const {
    double t = 0;
    for (double e : energy) t += e;
    return t;
  }

  // movement = DRAM + channel + coherence; cache probes and compute stay local
  double data_movement() const {
    double t = 0;
    for (int k = 0; k < kNumEventKinds; ++k)
      if (is_data_movement(static_cast<EventKind>(k))) t += energy[static_cast<std::size_t>(k)];
    return t;
  }

  double data_movement_fraction() const {
    double t = total();
    return t > 0 ? data_movement() / t : 0.0;
  }

  void merge(const EnergyLedger& o) {
    for (int k = 0; k < kNumEventKinds; ++k) {
      count[static_cast<std::size_t>(k)] += o.count[static_cast<std::size_t>(k)];
      energy[static_cast<std::size_t>(k)] += o.energy[static_cast<std::size_t>(k)];
    }
  }
};

// The only way energy enters a ledger: quantity times the per-event unit cost
// from the config, strictly additive.
inline void account(EventKind kind, std::uint64_t quantity, EnergyLedger& ledger,
                    const MachineConfig& cfg) {
  ledger.count[static_cast<std::size_t>(kind)] += quantity;
  ledger.energy[static_cast<std::size_t>(kind)] +=
      static_cast<double>(quantity) * cfg.energy[static_cast<std::size_t>(kind)];
}

struct Counters {
  std::uint64_t coherence_messages = 0;
  std::uint64_t rollbacks = 0;
  std::uint64_t page_walk_accesses = 0;
  std::uint64_t tlb_misses = 0;
  std::uint64_t offchip_bytes = 0;
  std::uint64_t dram_accesses = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t race_warnings = 0;
  std::uint64_t cg_fallbacks = 0;
  std::uint64_t cpu_stall_events = 0;
  std::uint64_t offload_rejected = 0;
};

struct KernelStats {
  std::uint32_t id = 0;
  std::string name;
  char site = 'c';  // 'c' ran on the CPU, 'p' ran on PIM logic
  Cycles cycles = 0;
  std::uint64_t instructions = 0;  // compute + memory + pei events
  std::uint64_t dram_misses = 0;   // demand misses served by DRAM
  EnergyLedger energy;
};

struct MetricsReport {
  int schema = 1;
  std::string mechanism;
  std::string xlat;
  std::uint64_t seed = 0;
  std::string config_digest;
  Cycles total_cycles = 0;
  Cycles cpu_cycles = 0;
  Cycles pim_cycles = 0;
  std::vector<KernelStats> kernels;
  EnergyLedger energy;
  Counters counters;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema"] = schema;
    j["mechanism"] = mechanism;
    j["xlat"] = xlat;
    j["seed"] = seed;
    j["config_digest"] = config_digest;
    j["total_cycles"] = total_cycles;
    j["cpu_cycles"] = cpu_cycles;
    j["pim_cycles"] = pim_cycles;
    nlohmann::ordered_json ks = nlohmann::ordered_json::array();
    for (const KernelStats& k : kernels) {
      nlohmann::ordered_json e;
      e["id"] = k.id;
      e["name"] = k.name;
      e["site"] = std::string(1, k.site);
      e["cycles"] = k.cycles;
      e["instructions"] = k.instructions;
      e["dram_misses"] = k.dram_misses;
      e["energy_total"] = k.energy.total();
      e["energy_data_movement"] = k.energy.data_movement();
      ks.push_back(e);
    }
    j["kernels"] = ks;
    nlohmann::ordered_json by_kind;
    for (int k = 0; k < kNumEventKinds; ++k) {
      nlohmann::ordered_json e;
      e["count"] = energy.count[static_cast<std::size_t>(k)];
      e["energy"] = energy.energy[static_cast<std::size_t>(k)];
      by_kind[event_kind_name(static_cast<EventKind>(k))] = e;
    }
    j["energy"] = {{"by_kind", by_kind},
                   {"total", energy.total()},
                   {"data_movement", energy.data_movement()},
                   {"data_movement_fraction", energy.data_movement_fraction()}};
    j["counters"] = {{"coherence_messages", counters.coherence_messages},
                     {"rollbacks", counters.rollbacks},
                     {"page_walk_accesses", counters.page_walk_accesses},
                     {"tlb_misses", counters.tlb_misses},
                     {"offchip_bytes", counters.offchip_bytes},
                     {"dram_accesses", counters.dram_accesses},
                     {"cache_hits", counters.cache_hits},
                     {"cache_misses", counters.cache_misses},
                     {"race_warnings", counters.race_warnings},
                     {"cg_fallbacks", counters.cg_fallbacks},
                     {"cpu_stall_events", counters.cpu_stall_events},
                     {"offload_rejected", counters.offload_rejected}};
    return j;
  }

  std::string to_text() const {
    std::ostringstream o;
    char buf[160];
    o << "mechanism " << mechanism << " (xlat " << xlat << ", seed " << seed << ", config "
      << config_digest << ")\n";
    o << "total_cycles " << total_cycles << " (cpu " << cpu_cycles << ", pim " << pim_cycles
      << ")\n";
    std::snprintf(buf, sizeof buf, "energy total %.6g, data movement %.6g (%.1f%%)\n",
                  energy.total(), energy.data_movement(),
                  100.0 * energy.data_movement_fraction());
    o << buf;
    o << "messages " << counters.coherence_messages << ", rollbacks " << counters.rollbacks
      << ", walks " << counters.page_walk_accesses << ", tlb misses " << counters.tlb_misses
      << ", dram " << counters.dram_accesses << ", offchip bytes " << counters.offchip_bytes
      << "\n";
    for (const KernelStats& k : kernels) {
      std::snprintf(buf, sizeof buf, "  kernel %-4u %-10s %c cycles %llu\n", k.id,
                    k.name.c_str(), k.site, static_cast<unsigned long long>(k.cycles));
      o << buf;
    }
    return o.str();
  }

  static std::string csv_header() {
    return "mechanism,total_cycles,cpu_cycles,pim_cycles,energy_total,energy_data_movement,"
           "coherence_messages,rollbacks,page_walk_accesses,tlb_misses,offchip_bytes,"
           "dram_accesses";
  }

  std::string csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%llu,%.17g,%.17g,%llu,%llu,%llu,%llu,%llu,%llu",
                  mechanism.c_str(), static_cast<unsigned long long>(total_cycles),
                  static_cast<unsigned long long>(cpu_cycles),
                  static_cast<unsigned long long>(pim_cycles), energy.total(),
                  energy.data_movement(),
                  static_cast<unsigned long long>(counters.coherence_messages),
                  static_cast<unsigned long long>(counters.rollbacks),
                  static_cast<unsigned long long>(counters.page_walk_accesses),
                  static_cast<unsigned long long>(counters.tlb_misses),
                  static_cast<unsigned long long>(counters.offchip_bytes),
                  static_cast<unsigned long long>(counters.dram_accesses));
    return buf;
  }
};

}  // namespace pimsim
