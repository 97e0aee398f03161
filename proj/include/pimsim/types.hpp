#pragma once

#include <cstdint>

namespace pimsim {

using Addr = std::uint64_t;    // byte address, virtual or physical
using Line = std::uint64_t;    // cache line index, paddr / line_size
using Cycles = std::uint64_t;

constexpr Addr kPageSize = 4096;
constexpr unsigned kPageShift = 12;

inline Addr page_of(Addr a) { return a >> kPageShift; }
inline Addr page_offset(Addr a) { return a & (kPageSize - 1); }

enum class Agent : std::uint8_t { Cpu = 0, Pim = 1 };

enum class AccessKind : std::uint8_t { Read, Write };

// Everything the energy model knows about. Data movement is the sum of the
// last three kinds; on-chip cache probes and compute are not data movement.
enum class EventKind : std::uint8_t {
  CpuCompute = 0,
  PimCompute,
  CacheAccess,
  DramAccess,
  ChannelTransfer,
  CoherenceMessage,
};
constexpr int kNumEventKinds = 6;

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::CpuCompute: return "cpu_compute";
    case EventKind::PimCompute: return "pim_compute";
    case EventKind::CacheAccess: return "cache_access";
    case EventKind::DramAccess: return "dram_access";
    case EventKind::ChannelTransfer: return "channel_transfer";
    case EventKind::CoherenceMessage: return "coherence_message";
  }
  return "?";
}

inline bool is_data_movement(EventKind k) {
  return k == EventKind::DramAccess || k == EventKind::ChannelTransfer ||
         k == EventKind::CoherenceMessage;
}

}  // namespace pimsim
