#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "pimsim/rng.hpp"
#include "pimsim/types.hpp"

namespace pimsim {

enum class PageTableMode : std::uint8_t { Conventional4Level, RegionBased };

inline const char* page_table_mode_name(PageTableMode m) {
  return m == PageTableMode::Conventional4Level ? "conventional" : "region";
}

struct TranslationFault : std::runtime_error {
  explicit TranslationFault(Addr a)
      : std::runtime_error("address outside every registered PIM region"), vaddr(a) {}
  Addr vaddr;
};

// FIFO TLB over 4 KiB pages.
class Tlb {
 public:
  explicit Tlb(std::uint32_t entries) : capacity_(entries) {}

  bool lookup(Addr vpn, Addr* pfn) const {
    auto it = map_.find(vpn);
    if (it == map_.end()) return false;
    *pfn = it->second;
    return true;
  }

  void insert(Addr vpn, Addr pfn) {
    if (map_.count(vpn)) return;
    if (map_.size() == capacity_) {
      map_.erase(fifo_.front());
      fifo_.pop_front();
    }
    map_.emplace(vpn, pfn);
    fifo_.push_back(vpn);
  }

  void flush() {
    map_.clear();
    fifo_.clear();
  }

  std::size_t size() const { return map_.size(); }
  std::uint32_t capacity() const { return capacity_; }

 private:
  std::uint32_t capacity_;
  std::unordered_map<Addr, Addr> map_;
  std::deque<Addr> fifo_;
};

// The OS-maintained page frame assignment, shared by both walkers so that the
// CPU and the PIM logic agree on physical placement. Pages inside a registered
// region are permuted within the region's own frame range (seeded); everything
// else maps identity.
class RegionTable {
 public:
  struct Entry {
    Addr base = 0;
    Addr bound = 0;  // exclusive, page aligned
    std::vector<Addr> frames;  // frames[i] is the pfn of region page i
  };

  // Returns the index of the new entry. Base and bound must be page aligned
  // and must not overlap an existing region.
  std::size_t register_region(Addr base, Addr bound, std::uint64_t mapping_seed) {
    if (base >= bound) throw std::invalid_argument("region base must be < bound");
    if (page_offset(base) != 0 || page_offset(bound) != 0)
      throw std::invalid_argument("region base and bound must be page aligned");
    for (const Entry& e : entries_)
      if (base < e.bound && e.base < bound)
        throw std::invalid_argument("region overlaps an existing region");
    Entry e;
    e.base = base;
    e.bound = bound;
    const Addr pages = (bound - base) >> kPageShift;
    e.frames.resize(pages);
    std::iota(e.frames.begin(), e.frames.end(), page_of(base));
    Rng rng(splitmix64(mapping_seed ^ base));
    rng.shuffle(e.frames);
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  const Entry* find(Addr vaddr) const {
    for (const Entry& e : entries_)
      if (vaddr >= e.base && vaddr < e.bound) return &e;
    return nullptr;
  }

  Addr frame_of(Addr vpn) const {
    Addr vaddr = vpn << kPageShift;
    if (const Entry* e = find(vaddr))
      return e->frames[(vaddr - e->base) >> kPageShift];
    return vpn;  // identity outside regions
  }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

struct TranslateResult {
  Addr paddr = 0;
  std::uint32_t walk_accesses = 0;  // memory accesses performed by the walk
  bool tlb_hit = false;
};

// A conventional radix walk reads one entry per level (48-bit space, 9-bit
// indices, 4 levels). The region-based walk reads the region descriptor and
// then the flat page map: 2 accesses, but it can only translate addresses
// inside a registered region.
class Walker {
 public:
  Walker(PageTableMode mode, const RegionTable* regions, std::uint32_t tlb_entries)
      : mode_(mode), regions_(regions), tlb_(tlb_entries) {}

  TranslateResult translate(Addr vaddr) {
    TranslateResult r;
    const Addr vpn = page_of(vaddr);
    Addr pfn;
    if (tlb_.lookup(vpn, &pfn)) {
      ++hits_;
      r.paddr = (pfn << kPageShift) | page_offset(vaddr);
      r.tlb_hit = true;
      return r;
    }
    ++misses_;
    if (mode_ == PageTableMode::Conventional4Level) {
      r.walk_accesses = 4;
    } else {
      if (regions_ == nullptr || regions_->find(vaddr) == nullptr)
        throw TranslationFault(vaddr);
      r.walk_accesses = 2;
    }
    pfn = regions_ ? regions_->frame_of(vpn) : vpn;
    walk_accesses_total_ += r.walk_accesses;
    tlb_.insert(vpn, pfn);
    r.paddr = (pfn << kPageShift) | page_offset(vaddr);
    return r;
  }

  PageTableMode mode() const { return mode_; }
  Tlb& tlb() { return tlb_; }
  std::uint64_t tlb_hits() const { return hits_; }
  std::uint64_t tlb_misses() const { return misses_; }
  std::uint64_t walk_accesses_total() const { return walk_accesses_total_; }

 private:
  PageTableMode mode_;
  const RegionTable* regions_;
  Tlb tlb_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
  std::uint64_t walk_accesses_total_ = 0;
};

}  // namespace pimsim
