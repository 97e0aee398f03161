#pragma once

#include <array>
#include <string>
#include <vector>

#include "pimsim/types.hpp"

namespace pimsim {

enum class PimCoreKind : std::uint8_t { GeneralCore, FixedAccelerator };

inline const char* pim_core_kind_name(PimCoreKind k) {
  return k == PimCoreKind::GeneralCore ? "general_core" : "fixed_accelerator";
}

// One stacked-memory device: a host CPU with a single-level cache talking to a
// vaulted 3D-stacked DRAM over an off-chip channel, with in-order PIM logic on
// the logic layer of each vault. All latencies are in CPU cycles, energies in
// abstract units per event, areas in mm^2.
struct MachineConfig {
  // topology
  std::uint32_t num_vaults = 16;
  std::uint32_t line_size = 64;
  std::uint32_t cpu_cache_lines = 512;   // direct mapped
  std::uint32_t tlb_entries = 64;        // FIFO, one instance per agent
  std::uint32_t pim_stream_buffers = 2;  // line-sized buffers, FIFO

  // latencies
  Cycles lat_cpu_cache_hit = 1;
  Cycles lat_dram_local_vault = 50;
  Cycles lat_dram_remote_vault = 80;
  Cycles lat_channel_round_trip = 100;

  // timing knobs for the PIM logic
  double pim_cycle_ratio = 1.0;           // PIM core cycles per CPU cycle of compute
  double accel_compute_multiplier = 0.5;  // fixed-function units, must stay < 1

  // energy per accounted event; mirrored in configs/default.toml
  std::array<double, kNumEventKinds> energy = {
      1.0,   // cpu_compute (per cycle)
      1.0,   // pim_compute (per cycle)
      0.5,   // cache_access
      25.0,  // dram_access
      50.0,  // channel_transfer
      10.0,  // coherence_message
  };

  // area
  double logic_layer_area_budget_mm2 = 50.0;
  double vault_area_budget_mm2 = 3.5;
  double pim_logic_area_mm2 = 1.0;
  PimCoreKind pim_core_kind = PimCoreKind::GeneralCore;

  // optimistic coherence
  std::uint32_t signature_bits = 2048;
  std::uint32_t signature_hashes = 4;
  std::uint32_t conda_max_rollbacks = 8;  // then fall back to region locking
};

inline std::uint32_t vault_of(Addr paddr, const MachineConfig& cfg) {
  return static_cast<std::uint32_t>((paddr / cfg.line_size) % cfg.num_vaults);
}

inline Line line_of(Addr paddr, const MachineConfig& cfg) {
  return paddr / cfg.line_size;
}

struct ConfigViolation {
  std::string field;
  std::string message;
};

inline bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline std::vector<ConfigViolation> validate_config(const MachineConfig& c) {
  std::vector<ConfigViolation> out;
  auto bad = [&](const std::string& f, const std::string& m) {
    out.push_back({f, m});
  };
  if (!is_pow2(c.num_vaults)) bad("num_vaults", "must be a nonzero power of two");
  if (!is_pow2(c.line_size)) bad("line_size", "must be a nonzero power of two");
  if (c.cpu_cache_lines == 0) bad("cpu_cache_lines", "must be at least 1");
  if (c.tlb_entries == 0) bad("tlb_entries", "must be at least 1");
  if (c.pim_stream_buffers == 0) bad("pim_stream_buffers", "must be at least 1");
  if (c.lat_cpu_cache_hit < 1) bad("lat_cpu_cache_hit", "latency must be >= 1 cycle");
  if (c.lat_dram_local_vault < 1) bad("lat_dram_local_vault", "latency must be >= 1 cycle");
  if (c.lat_dram_remote_vault < 1) bad("lat_dram_remote_vault", "latency must be >= 1 cycle");
  if (c.lat_channel_round_trip < 1) bad("lat_channel_round_trip", "latency must be >= 1 cycle");
  if (c.pim_cycle_ratio <= 0.0) bad("pim_cycle_ratio", "must be positive");
  if (c.accel_compute_multiplier <= 0.0 || c.accel_compute_multiplier >= 1.0)
    bad("accel_compute_multiplier", "must lie in (0, 1)");
  for (int k = 0; k < kNumEventKinds; ++k) {
    if (c.energy[static_cast<std::size_t>(k)] < 0.0)
      bad(std::string("energy.") + event_kind_name(static_cast<EventKind>(k)),
          "energy per event must be >= 0");
  }
  if (c.logic_layer_area_budget_mm2 <= 0.0)
    bad("logic_layer_area_budget_mm2", "must be positive");
  if (c.vault_area_budget_mm2 <= 0.0) bad("vault_area_budget_mm2", "must be positive");
  if (c.pim_logic_area_mm2 <= 0.0) bad("pim_logic_area_mm2", "must be positive");
  if (c.pim_logic_area_mm2 > c.vault_area_budget_mm2)
    bad("pim_logic_area_mm2", "per-vault PIM logic exceeds the vault area budget");
  if (c.vault_area_budget_mm2 > c.logic_layer_area_budget_mm2)
    bad("vault_area_budget_mm2", "a single vault cannot exceed the logic layer budget");
  if (c.signature_bits == 0) bad("signature_bits", "must be at least 1");
  if (c.signature_hashes == 0) bad("signature_hashes", "must be at least 1");
  if (c.conda_max_rollbacks == 0) bad("conda_max_rollbacks", "must be at least 1");
  return out;
}

}  // namespace pimsim
