#pragma once

#include <cstdint>
#include <vector>

#include "pimsim/types.hpp"

namespace pimsim {

enum class LineState : std::uint8_t { Invalid, Shared, Exclusive, Modified };

inline const char* line_state_name(LineState s) {
  switch (s) {
    case LineState::Invalid: return "I";
    case LineState::Shared: return "S";
    case LineState::Exclusive: return "E";
    case LineState::Modified: return "M";
  }
  return "?";
}

// Value tokens: 0 is the initial memory content of every line; each store gets
// a unique token so the final memory image can be checked against an
// interleaving oracle without simulating real data.
using Token = std::uint64_t;

// Single-level direct-mapped CPU cache. The only caching agent in the system,
// so Exclusive arises on any fill and Shared only after a PIM read downgrade.
class CpuCache {
 public:
  struct Slot {
    Line line = 0;
    LineState state = LineState::Invalid;
    Token token = 0;
  };

  struct FillResult {
    bool evicted_dirty = false;
    Line evicted_line = 0;
    Token evicted_token = 0;
  };

  explicit CpuCache(std::uint32_t n_lines) : slots_(n_lines) {}

  std::uint32_t set_of(Line line) const {
    return static_cast<std::uint32_t>(line % slots_.size());
  }

  Slot* find(Line line) {
    Slot& s = slots_[set_of(line)];
    if (s.state != LineState::Invalid && s.line == line) return &s;
    return nullptr;
  }
  const Slot* find(Line line) const {
    const Slot& s = slots_[set_of(line)];
    if (s.state != LineState::Invalid && s.line == line) return &s;
    return nullptr;
  }

  LineState state_of(Line line) const {
    const Slot* s = find(line);
    return s ? s->state : LineState::Invalid;
  }

  // Install a line after a miss, evicting whatever occupies the set.
  FillResult fill(Line line, LineState st, Token tok) {
    Slot& s = slots_[set_of(line)];
    FillResult r;
    if (s.state == LineState::Modified) {
      r.evicted_dirty = true;
      r.evicted_line = s.line;
      r.evicted_token = s.token;
    }
    s.line = line;
    s.state = st;
    s.token = tok;
    return r;
  }

  // Downgrade for a remote read. Returns true and the dirty token when a
  // writeback is owed.
  bool downgrade_to_shared(Line line, Token* wb_token) {
    Slot* s = find(line);
    if (!s) return false;
    bool wb = s->state == LineState::Modified;
    if (wb) *wb_token = s->token;
    s->state = LineState::Shared;
    return wb;
  }

  // Invalidate for a remote write (or a flush). Returns true and the dirty
  // token when a writeback is owed.
  bool invalidate(Line line, Token* wb_token) {
    Slot* s = find(line);
    if (!s) return false;
    bool wb = s->state == LineState::Modified;
    if (wb) *wb_token = s->token;
    s->state = LineState::Invalid;
    return wb;
  }

  // Deterministic (set-ordered) view of all dirty lines.
  std::vector<std::pair<Line, Token>> dirty_lines() const {
    std::vector<std::pair<Line, Token>> out;
    for (const Slot& s : slots_)
      if (s.state == LineState::Modified) out.emplace_back(s.line, s.token);
    return out;
  }

  std::size_t size() const { return slots_.size(); }
  const std::vector<Slot>& slots() const { return slots_; }

  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

 private:
  std::vector<Slot> slots_;
};

}  // namespace pimsim
