#pragma once

#include <cstdint>
#include <vector>

#include "pimsim/rng.hpp"
#include "pimsim/types.hpp"

namespace pimsim {

// Compressed read/write set: a Bloom filter over line addresses with k index
// functions derived by double hashing. Membership can turn up false positives
// (a spurious conflict costs a re-execution, never correctness) but never a
// false negative.
class Signature {
 public:
  explicit Signature(std::uint32_t bits = 2048, std::uint32_t hashes = 4)
      : m_(bits), k_(hashes), words_((bits + 63) / 64, 0) {}

  void insert(Line line) {
    std::uint64_t h1 = splitmix64(line ^ 0x6a5d39eae116586dULL);
    std::uint64_t h2 = splitmix64(line ^ 0x80c8963be3e4c2f3ULL) | 1;
    for (std::uint32_t i = 0; i < k_; ++i) {
      std::uint64_t bit = (h1 + i * h2) % m_;
      words_[bit >> 6] |= 1ull << (bit & 63);
    }
    ++inserted_;
  }

  bool maybe_contains(Line line) const {
    std::uint64_t h1 = splitmix64(line ^ 0x6a5d39eae116586dULL);
    std::uint64_t h2 = splitmix64(line ^ 0x80c8963be3e4c2f3ULL) | 1;
    for (std::uint32_t i = 0; i < k_; ++i) {
      std::uint64_t bit = (h1 + i * h2) % m_;
      if (!(words_[bit >> 6] & (1ull << (bit & 63)))) return false;
    }
    return true;
  }

  void clear() {
    std::fill(words_.begin(), words_.end(), 0);
    inserted_ = 0;
  }

  std::uint64_t inserted() const { return inserted_; }
  std::uint32_t bits() const { return m_; }
  std::uint32_t hashes() const { return k_; }
  std::uint64_t size_bytes() const { return (m_ + 7) / 8; }

  std::uint32_t popcount() const {
    std::uint32_t n = 0;
    for (std::uint64_t w : words_) n += static_cast<std::uint32_t>(__builtin_popcountll(w));
    return n;
  }

 private:
  std::uint32_t m_, k_;
  std::vector<std::uint64_t> words_;
  std::uint64_t inserted_ = 0;
};

}  // namespace pimsim
