#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pimsim/types.hpp"

namespace pimsim {

enum class Granularity : std::uint8_t { Instruction, BulkOp, Function, Application };

inline const char* granularity_name(Granularity g) {
  switch (g) {
    case Granularity::Instruction: return "instruction";
    case Granularity::BulkOp: return "bulkop";
    case Granularity::Function: return "function";
    case Granularity::Application: return "application";
  }
  return "?";
}

enum class PeiOpcode : std::uint8_t { Add, Min, Max };

inline const char* pei_opcode_name(PeiOpcode o) {
  switch (o) {
    case PeiOpcode::Add: return "add";
    case PeiOpcode::Min: return "min";
    case PeiOpcode::Max: return "max";
  }
  return "?";
}

enum class TraceOp : std::uint8_t {
  Compute,      // cycles
  Load,         // vaddr, bytes
  Store,        // vaddr, bytes
  KernelBegin,  // kernel_id, granularity
  KernelEnd,    // kernel_id
  Pei,          // opcode, vaddr, operand
  Fence,        // kernel_id == 0: wait for own in-flight PEIs
                // kernel_id != 0: join on that kernel's completion
};

struct TraceEvent {
  TraceOp op = TraceOp::Compute;
  Cycles cycles = 0;
  Addr vaddr = 0;
  std::uint32_t bytes = 0;
  std::uint32_t kernel_id = 0;
  Granularity granularity = Granularity::Function;
  PeiOpcode opcode = PeiOpcode::Add;
  std::int64_t operand = 0;

  bool operator==(const TraceEvent&) const = default;

  static TraceEvent compute(Cycles c) {
    TraceEvent e;
    e.op = TraceOp::Compute;
    e.cycles = c;
    return e;
  }
  static TraceEvent load(Addr a, std::uint32_t b) {
    TraceEvent e;
    e.op = TraceOp::Load;
    e.vaddr = a;
    e.bytes = b;
    return e;
  }
  static TraceEvent store(Addr a, std::uint32_t b) {
    TraceEvent e;
    e.op = TraceOp::Store;
    e.vaddr = a;
    e.bytes = b;
    return e;
  }
  static TraceEvent kernel_begin(std::uint32_t id, Granularity g) {
    TraceEvent e;
    e.op = TraceOp::KernelBegin;
    e.kernel_id = id;
    e.granularity = g;
    return e;
  }
  static TraceEvent kernel_end(std::uint32_t id) {
    TraceEvent e;
    e.op = TraceOp::KernelEnd;
    e.kernel_id = id;
    return e;
  }
  static TraceEvent pei(PeiOpcode o, Addr a, std::int64_t v) {
    TraceEvent e;
    e.op = TraceOp::Pei;
    e.opcode = o;
    e.vaddr = a;
    e.operand = v;
    return e;
  }
  static TraceEvent fence(std::uint32_t join_kernel = 0) {
    TraceEvent e;
    e.op = TraceOp::Fence;
    e.kernel_id = join_kernel;
    return e;
  }
};

struct TraceRegion {
  Addr base = 0;
  Addr bound = 0;  // exclusive
  bool operator==(const TraceRegion&) const = default;
  bool contains(Addr a) const { return a >= base && a < bound; }
};

struct Trace {
  Addr space_size = 0;
  std::vector<TraceRegion> regions;                  // candidate PIM regions
  std::map<std::uint32_t, std::string> kernel_names; // kernel id -> function label
  std::vector<TraceEvent> cpu;
  std::vector<TraceEvent> pim;

  bool operator==(const Trace&) const = default;
};

struct TraceParseError : std::runtime_error {
  explicit TraceParseError(int line, const std::string& m)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + m), lineno(line) {}
  int lineno;
};

namespace detail {

inline void write_events(std::ostream& o, const char* who, const std::vector<TraceEvent>& ev) {
  char buf[96];
  for (const TraceEvent& e : ev) {
    switch (e.op) {
      case TraceOp::Compute:
        o << who << " C " << e.cycles << "\n";
        break;
      case TraceOp::Load:
        std::snprintf(buf, sizeof buf, "%s LD 0x%llx %u", who,
                      static_cast<unsigned long long>(e.vaddr), e.bytes);
        o << buf << "\n";
        break;
      case TraceOp::Store:
        std::snprintf(buf, sizeof buf, "%s ST 0x%llx %u", who,
                      static_cast<unsigned long long>(e.vaddr), e.bytes);
        o << buf << "\n";
        break;
      case TraceOp::KernelBegin:
        o << who << " KB " << e.kernel_id << " " << granularity_name(e.granularity) << "\n";
        break;
      case TraceOp::KernelEnd:
        o << who << " KE " << e.kernel_id << "\n";
        break;
      case TraceOp::Pei:
        std::snprintf(buf, sizeof buf, "%s PEI %s 0x%llx %lld", who,
                      pei_opcode_name(e.opcode), static_cast<unsigned long long>(e.vaddr),
                      static_cast<long long>(e.operand));
        o << buf << "\n";
        break;
      case TraceOp::Fence:
        if (e.kernel_id == 0)
          o << who << " FEN\n";
        else
          o << who << " FEN " << e.kernel_id << "\n";
        break;
    }
  }
}

}  // namespace detail

inline void write_trace(std::ostream& o, const Trace& t) {
  o << "space " << t.space_size << "\n";
  for (const TraceRegion& r : t.regions) o << "region " << r.base << " " << r.bound << "\n";
  for (const auto& [id, name] : t.kernel_names) o << "kernel " << id << " " << name << "\n";
  detail::write_events(o, "cpu", t.cpu);
  detail::write_events(o, "pim", t.pim);
}

inline std::string trace_to_string(const Trace& t) {
  std::ostringstream o;
  write_trace(o, t);
  return o.str();
}

// Strict line-oriented parser. Header directives (space, region, kernel) must
// precede events; structural problems are reported with their line number.
inline Trace parse_trace(std::istream& in) {
  Trace t;
  bool saw_space = false;
  bool saw_event = false;
  std::string line;
  int lineno = 0;
  std::vector<std::uint32_t> open_cpu, open_pim;

  auto parse_addr = [&](const std::string& tok) -> Addr {
    try {
      std::size_t pos = 0;
      unsigned long long v = std::stoull(tok, &pos, 0);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw TraceParseError(lineno, "bad number '" + tok + "'");
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string w;
    while (ls >> w) tok.push_back(w);
    if (tok.empty()) continue;

    const std::string& head = tok[0];
    if (head == "space") {
      if (saw_space) throw TraceParseError(lineno, "duplicate space directive");
      if (tok.size() != 2) throw TraceParseError(lineno, "space takes one argument");
      t.space_size = parse_addr(tok[1]);
      if (t.space_size == 0) throw TraceParseError(lineno, "space must be nonzero");
      saw_space = true;
      continue;
    }
    if (head == "region") {
      if (saw_event) throw TraceParseError(lineno, "region after first event");
      if (!saw_space) throw TraceParseError(lineno, "region before space");
      if (tok.size() != 3) throw TraceParseError(lineno, "region takes base and bound");
      TraceRegion r{parse_addr(tok[1]), parse_addr(tok[2])};
      if (r.base >= r.bound) throw TraceParseError(lineno, "region base must be < bound");
      if (r.bound > t.space_size) throw TraceParseError(lineno, "region exceeds space");
      for (const TraceRegion& p : t.regions)
        if (r.base < p.bound && p.base < r.bound)
          throw TraceParseError(lineno, "regions overlap");
      t.regions.push_back(r);
      continue;
    }
    if (head == "kernel") {
      if (saw_event) throw TraceParseError(lineno, "kernel label after first event");
      if (tok.size() != 3) throw TraceParseError(lineno, "kernel takes id and name");
      std::uint32_t id = static_cast<std::uint32_t>(parse_addr(tok[1]));
      if (id == 0) throw TraceParseError(lineno, "kernel id 0 is reserved");
      if (t.kernel_names.count(id)) throw TraceParseError(lineno, "duplicate kernel id");
      t.kernel_names[id] = tok[2];
      continue;
    }

    std::vector<TraceEvent>* stream = nullptr;
    std::vector<std::uint32_t>* open = nullptr;
    if (head == "cpu") {
      stream = &t.cpu;
      open = &open_cpu;
    } else if (head == "pim") {
      stream = &t.pim;
      open = &open_pim;
    } else {
      throw TraceParseError(lineno, "unknown directive '" + head + "'");
    }
    if (!saw_space) throw TraceParseError(lineno, "event before space directive");
    if (tok.size() < 2) throw TraceParseError(lineno, "missing event opcode");
    saw_event = true;
    const std::string& op = tok[1];

    if (op == "C") {
      if (tok.size() != 3) throw TraceParseError(lineno, "C takes cycle count");
      stream->push_back(TraceEvent::compute(parse_addr(tok[2])));
    } else if (op == "LD" || op == "ST") {
      if (tok.size() != 4) throw TraceParseError(lineno, op + " takes vaddr and bytes");
      Addr a = parse_addr(tok[2]);
      Addr b = parse_addr(tok[3]);
      if (b == 0) throw TraceParseError(lineno, "access width must be nonzero");
      if (a + b > t.space_size) throw TraceParseError(lineno, "access outside space");
      stream->push_back(op == "LD" ? TraceEvent::load(a, static_cast<std::uint32_t>(b))
                                   : TraceEvent::store(a, static_cast<std::uint32_t>(b)));
    } else if (op == "KB") {
      if (tok.size() != 4) throw TraceParseError(lineno, "KB takes id and granularity");
      std::uint32_t id = static_cast<std::uint32_t>(parse_addr(tok[2]));
      if (id == 0) throw TraceParseError(lineno, "kernel id 0 is reserved");
      Granularity g;
      if (tok[3] == "instruction") g = Granularity::Instruction;
      else if (tok[3] == "bulkop") g = Granularity::BulkOp;
      else if (tok[3] == "function") g = Granularity::Function;
      else if (tok[3] == "application") g = Granularity::Application;
      else throw TraceParseError(lineno, "unknown granularity '" + tok[3] + "'");
      open->push_back(id);
      stream->push_back(TraceEvent::kernel_begin(id, g));
    } else if (op == "KE") {
      if (tok.size() != 3) throw TraceParseError(lineno, "KE takes id");
      std::uint32_t id = static_cast<std::uint32_t>(parse_addr(tok[2]));
      if (open->empty() || open->back() != id)
        throw TraceParseError(lineno, "KE does not match innermost open kernel");
      open->pop_back();
      stream->push_back(TraceEvent::kernel_end(id));
    } else if (op == "PEI") {
      if (tok.size() != 5) throw TraceParseError(lineno, "PEI takes opcode, vaddr, operand");
      PeiOpcode o;
      if (tok[2] == "add") o = PeiOpcode::Add;
      else if (tok[2] == "min") o = PeiOpcode::Min;
      else if (tok[2] == "max") o = PeiOpcode::Max;
      else throw TraceParseError(lineno, "unknown PEI opcode '" + tok[2] + "'");
      Addr a = parse_addr(tok[3]);
      std::int64_t v;
      try {
        std::size_t pos = 0;
        v = std::stoll(tok[4], &pos, 0);
        if (pos != tok[4].size()) throw std::invalid_argument(tok[4]);
      } catch (const std::exception&) {
        throw TraceParseError(lineno, "bad operand '" + tok[4] + "'");
      }
      if (a + 8 > t.space_size) throw TraceParseError(lineno, "PEI outside space");
      stream->push_back(TraceEvent::pei(o, a, v));
    } else if (op == "FEN") {
      if (tok.size() == 2) stream->push_back(TraceEvent::fence());
      else if (tok.size() == 3)
        stream->push_back(TraceEvent::fence(static_cast<std::uint32_t>(parse_addr(tok[2]))));
      else throw TraceParseError(lineno, "FEN takes at most one kernel id");
    } else {
      throw TraceParseError(lineno, "unknown event opcode '" + op + "'");
    }
  }
  if (!saw_space) throw TraceParseError(lineno, "missing space directive");
  if (!open_cpu.empty())
    throw TraceParseError(lineno, "cpu kernel " + std::to_string(open_cpu.back()) + " never ends");
  if (!open_pim.empty())
    throw TraceParseError(lineno, "pim kernel " + std::to_string(open_pim.back()) + " never ends");
  return t;
}

inline Trace parse_trace_string(const std::string& s) {
  std::istringstream in(s);
  return parse_trace(in);
}

inline Trace load_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trace file: " + path);
  return parse_trace(f);
}

}  // namespace pimsim
