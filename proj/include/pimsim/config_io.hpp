#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pimsim/machine.hpp"

namespace pimsim {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::uint64_t parse_u64(const std::string& v, int lineno) {
  try {
    std::size_t pos = 0;
    unsigned long long r = std::stoull(v, &pos, 0);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(lineno) + ": expected integer, got '" + v + "'");
  }
}

inline double parse_f64(const std::string& v, int lineno) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(lineno) + ": expected number, got '" + v + "'");
  }
}

}  // namespace detail

// Flat `key = value` format with an optional [energy] section and # comments.
// Every key must name a MachineConfig field; unknown keys are hard errors so a
// typo cannot silently fall back to a default.
inline MachineConfig parse_machine_config(std::istream& in) {
  MachineConfig c;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    std::size_t hash = s.find('#');
    if (hash != std::string::npos) s = detail::trim(s.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section != "energy" && section != "machine")
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(s.substr(0, eq));
    std::string val = detail::trim(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");

    if (section == "energy") {
      bool found = false;
      for (int k = 0; k < kNumEventKinds; ++k) {
        if (key == event_kind_name(static_cast<EventKind>(k))) {
          c.energy[static_cast<std::size_t>(k)] = detail::parse_f64(val, lineno);
          found = true;
          break;
        }
      }
      if (!found)
        throw ConfigError("line " + std::to_string(lineno) + ": unknown energy key '" + key + "'");
      continue;
    }

    if (key == "num_vaults") c.num_vaults = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "line_size") c.line_size = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "cpu_cache_lines") c.cpu_cache_lines = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "tlb_entries") c.tlb_entries = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "pim_stream_buffers") c.pim_stream_buffers = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "lat_cpu_cache_hit") c.lat_cpu_cache_hit = detail::parse_u64(val, lineno);
    else if (key == "lat_dram_local_vault") c.lat_dram_local_vault = detail::parse_u64(val, lineno);
    else if (key == "lat_dram_remote_vault") c.lat_dram_remote_vault = detail::parse_u64(val, lineno);
    else if (key == "lat_channel_round_trip") c.lat_channel_round_trip = detail::parse_u64(val, lineno);
    else if (key == "pim_cycle_ratio") c.pim_cycle_ratio = detail::parse_f64(val, lineno);
    else if (key == "accel_compute_multiplier") c.accel_compute_multiplier = detail::parse_f64(val, lineno);
    else if (key == "logic_layer_area_budget_mm2") c.logic_layer_area_budget_mm2 = detail::parse_f64(val, lineno);
    else if (key == "vault_area_budget_mm2") c.vault_area_budget_mm2 = detail::parse_f64(val, lineno);
    else if (key == "pim_logic_area_mm2") c.pim_logic_area_mm2 = detail::parse_f64(val, lineno);
    else if (key == "pim_core_kind") {
      if (val == "general_core") c.pim_core_kind = PimCoreKind::GeneralCore;
      else if (val == "fixed_accelerator") c.pim_core_kind = PimCoreKind::FixedAccelerator;
      else throw ConfigError("line " + std::to_string(lineno) + ": pim_core_kind must be general_core or fixed_accelerator");
    }
    else if (key == "signature_bits") c.signature_bits = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "signature_hashes") c.signature_hashes = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else if (key == "conda_max_rollbacks") c.conda_max_rollbacks = static_cast<std::uint32_t>(detail::parse_u64(val, lineno));
    else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return c;
}

inline MachineConfig load_machine_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  return parse_machine_config(f);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Canonical serialization: fixed key order, full double precision. Also the
// input to the config digest, so any field change shows up in reports.
inline std::string serialize_machine_config(const MachineConfig& c) {
  std::ostringstream o;
  o << "num_vaults = " << c.num_vaults << "\n";
  o << "line_size = " << c.line_size << "\n";
  o << "cpu_cache_lines = " << c.cpu_cache_lines << "\n";
  o << "tlb_entries = " << c.tlb_entries << "\n";
  o << "pim_stream_buffers = " << c.pim_stream_buffers << "\n";
  o << "lat_cpu_cache_hit = " << c.lat_cpu_cache_hit << "\n";
  o << "lat_dram_local_vault = " << c.lat_dram_local_vault << "\n";
  o << "lat_dram_remote_vault = " << c.lat_dram_remote_vault << "\n";
  o << "lat_channel_round_trip = " << c.lat_channel_round_trip << "\n";
  o << "pim_cycle_ratio = " << format_double(c.pim_cycle_ratio) << "\n";
  o << "accel_compute_multiplier = " << format_double(c.accel_compute_multiplier) << "\n";
  o << "logic_layer_area_budget_mm2 = " << format_double(c.logic_layer_area_budget_mm2) << "\n";
  o << "vault_area_budget_mm2 = " << format_double(c.vault_area_budget_mm2) << "\n";
  o << "pim_logic_area_mm2 = " << format_double(c.pim_logic_area_mm2) << "\n";
  o << "pim_core_kind = " << pim_core_kind_name(c.pim_core_kind) << "\n";
  o << "signature_bits = " << c.signature_bits << "\n";
  o << "signature_hashes = " << c.signature_hashes << "\n";
  o << "conda_max_rollbacks = " << c.conda_max_rollbacks << "\n";
  o << "[energy]\n";
  for (int k = 0; k < kNumEventKinds; ++k)
    o << event_kind_name(static_cast<EventKind>(k)) << " = "
      << format_double(c.energy[static_cast<std::size_t>(k)]) << "\n";
  return o.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_digest(const MachineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_machine_config(c))));
  return buf;
}

}  // namespace pimsim
