#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pimsim/rng.hpp"
#include "pimsim/trace.hpp"

namespace pimsim {

namespace detail {

inline Addr page_align_up(Addr a) { return (a + kPageSize - 1) & ~(kPageSize - 1); }

inline std::uint64_t isqrt_u64(std::uint64_t v) {
  std::uint64_t r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

}  // namespace detail

// 32-bit to 8-bit matrix quantization: one read scan to find the value range,
// then a second read scan that converts and writes the narrow output.
// Exactly 2n loads and n stores.
inline Trace gen_quantize_trace(std::uint64_t n_elements, std::uint64_t seed) {
  (void)seed;  // shape is fully determined by n_elements
  if (n_elements == 0) throw std::invalid_argument("gen_quantize_trace: n_elements must be > 0");
  Trace t;
  const Addr in_base = 1 << 20;
  const Addr out_base = in_base + 4 * n_elements;
  const Addr bound = detail::page_align_up(out_base + n_elements);
  t.regions.push_back({in_base & ~(kPageSize - 1), bound});
  t.space_size = bound + (1 << 20);
  t.kernel_names[1] = "quantize";

  t.cpu.push_back(TraceEvent::kernel_begin(1, Granularity::Function));
  for (std::uint64_t i = 0; i < n_elements; ++i) {
    t.cpu.push_back(TraceEvent::load(in_base + 4 * i, 4));
    t.cpu.push_back(TraceEvent::compute(1));  // min/max update
  }
  for (std::uint64_t i = 0; i < n_elements; ++i) {
    t.cpu.push_back(TraceEvent::load(in_base + 4 * i, 4));
    t.cpu.push_back(TraceEvent::compute(1));  // scale to 8 bit
    t.cpu.push_back(TraceEvent::store(out_base + i, 1));
  }
  t.cpu.push_back(TraceEvent::kernel_end(1));
  return t;
}

// Matrix packing for a blocked GEMM: the row-major input is read one panel of
// `block` columns at a time, top to bottom, and written out contiguously. For
// a 4x4 matrix with block 2 the load offsets are 0,4,8,12, 1,5,9,13, 2,...
// (element units), i.e. the reorder the CPU's prefetcher hates.
inline Trace gen_pack_trace(std::uint32_t rows, std::uint32_t cols, std::uint32_t block,
                            std::uint64_t seed) {
  (void)seed;
  if (rows == 0 || cols == 0 || block == 0)
    throw std::invalid_argument("gen_pack_trace: rows, cols, block must be > 0");
  Trace t;
  const std::uint64_t n = std::uint64_t(rows) * cols;
  const Addr in_base = 1 << 20;
  const Addr out_base = in_base + 4 * n;
  const Addr bound = detail::page_align_up(out_base + 4 * n);
  t.regions.push_back({in_base & ~(kPageSize - 1), bound});
  t.space_size = bound + (1 << 20);
  t.kernel_names[1] = "pack";

  t.cpu.push_back(TraceEvent::kernel_begin(1, Granularity::Function));
  std::uint64_t out_idx = 0;
  for (std::uint32_t j0 = 0; j0 < cols; j0 += block) {
    const std::uint32_t j1 = std::min(j0 + block, cols);
    for (std::uint32_t j = j0; j < j1; ++j) {
      for (std::uint32_t i = 0; i < rows; ++i) {
        t.cpu.push_back(TraceEvent::load(in_base + 4ull * (std::uint64_t(i) * cols + j), 4));
        t.cpu.push_back(TraceEvent::store(out_base + 4 * out_idx++, 4));
      }
    }
  }
  t.cpu.push_back(TraceEvent::kernel_end(1));
  return t;
}

// One GEMM pipeline iteration = pack, quantize, the innermost GEMM compute
// block, unpack. The stream is software pipelined: iteration i+1's pack and
// quantize kernels are emitted before the join (FEN) that gates iteration i's
// GEMM, so an offload plan covering pack/quantize overlaps them with CPU
// compute. Buffers are double buffered by iteration parity, so concurrent
// kernels never share lines.
inline Trace gen_gemm_pipeline_trace(std::uint32_t n_gemm_ops, std::uint64_t matrix_elems,
                                     std::uint64_t seed) {
  (void)seed;
  if (n_gemm_ops == 0) throw std::invalid_argument("gen_gemm_pipeline_trace: n_gemm_ops must be > 0");
  const std::uint32_t dim = static_cast<std::uint32_t>(detail::isqrt_u64(matrix_elems));
  if (dim == 0) throw std::invalid_argument("gen_gemm_pipeline_trace: matrix_elems too small");
  const std::uint64_t n = std::uint64_t(dim) * dim;  // rounded to a square
  const std::uint32_t block = std::min<std::uint32_t>(32, dim);

  Trace t;
  Addr cursor = 1 << 20;
  auto alloc = [&](std::uint64_t bytes) {
    Addr b = cursor;
    cursor = detail::page_align_up(cursor + bytes);
    return b;
  };
  Addr in_base[2] = {alloc(4 * n), alloc(4 * n)};
  Addr pk_base[2] = {alloc(4 * n), alloc(4 * n)};
  Addr q8_base[2] = {alloc(n), alloc(n)};
  Addr out_base[2] = {alloc(4 * n), alloc(4 * n)};
  t.regions.push_back({Addr(1) << 20, cursor});
  t.space_size = cursor + (1 << 20);

  auto kid = [&](std::uint32_t i, std::uint32_t which) { return 4 * (i - 1) + which; };
  for (std::uint32_t i = 1; i <= n_gemm_ops; ++i) {
    t.kernel_names[kid(i, 1)] = "pack";
    t.kernel_names[kid(i, 2)] = "quantize";
    t.kernel_names[kid(i, 3)] = "gemm";
    t.kernel_names[kid(i, 4)] = "unpack";
  }

  auto emit_pack = [&](std::uint32_t i) {
    const int p = i & 1;
    t.cpu.push_back(TraceEvent::kernel_begin(kid(i, 1), Granularity::Function));
    std::uint64_t out_idx = 0;
    for (std::uint32_t j0 = 0; j0 < dim; j0 += block)
      for (std::uint32_t j = j0; j < std::min(j0 + block, dim); ++j)
        for (std::uint32_t r = 0; r < dim; ++r) {
          t.cpu.push_back(TraceEvent::load(in_base[p] + 4ull * (std::uint64_t(r) * dim + j), 4));
          t.cpu.push_back(TraceEvent::store(pk_base[p] + 4 * out_idx++, 4));
        }
    t.cpu.push_back(TraceEvent::kernel_end(kid(i, 1)));
  };
  auto emit_quant = [&](std::uint32_t i) {
    const int p = i & 1;
    t.cpu.push_back(TraceEvent::kernel_begin(kid(i, 2), Granularity::Function));
    for (std::uint64_t e = 0; e < n; ++e) {
      t.cpu.push_back(TraceEvent::load(pk_base[p] + 4 * e, 4));
      t.cpu.push_back(TraceEvent::compute(1));
    }
    for (std::uint64_t e = 0; e < n; ++e) {
      t.cpu.push_back(TraceEvent::load(pk_base[p] + 4 * e, 4));
      t.cpu.push_back(TraceEvent::compute(1));
      t.cpu.push_back(TraceEvent::store(q8_base[p] + e, 1));
    }
    t.cpu.push_back(TraceEvent::kernel_end(kid(i, 2)));
  };
  auto emit_gemm = [&](std::uint32_t i) {
    t.cpu.push_back(TraceEvent::kernel_begin(kid(i, 3), Granularity::Function));
    const Cycles total = n * dim;  // one MAC per element per inner dimension step
    const Cycles chunk = std::max<Cycles>(1, total / 16);
    Cycles left = total;
    while (left > 0) {
      Cycles c = std::min(chunk, left);
      t.cpu.push_back(TraceEvent::compute(c));
      left -= c;
    }
    t.cpu.push_back(TraceEvent::kernel_end(kid(i, 3)));
  };
  auto emit_unpack = [&](std::uint32_t i) {
    const int p = i & 1;
    t.cpu.push_back(TraceEvent::kernel_begin(kid(i, 4), Granularity::Function));
    for (std::uint32_t j0 = 0; j0 < dim; j0 += block)
      for (std::uint32_t j = j0; j < std::min(j0 + block, dim); ++j)
        for (std::uint32_t r = 0; r < dim; ++r)
          t.cpu.push_back(TraceEvent::store(out_base[p] + 4ull * (std::uint64_t(r) * dim + j), 4));
    t.cpu.push_back(TraceEvent::kernel_end(kid(i, 4)));
  };

  emit_pack(1);
  emit_quant(1);
  for (std::uint32_t i = 1; i <= n_gemm_ops; ++i) {
    if (i < n_gemm_ops) {
      emit_pack(i + 1);
      emit_quant(i + 1);
    }
    t.cpu.push_back(TraceEvent::fence(kid(i, 2)));
    emit_gemm(i);
    emit_unpack(i);
  }
  return t;
}

// Linked structure traversal in stacked memory: n dependent loads following a
// single seeded permutation cycle over the nodes, starting at node 0.
inline Trace gen_pointer_chase_trace(std::uint64_t n_nodes, std::uint64_t seed,
                                     std::uint64_t node_stride = 64) {
  if (n_nodes == 0) throw std::invalid_argument("gen_pointer_chase_trace: n_nodes must be > 0");
  if (node_stride < 8) throw std::invalid_argument("gen_pointer_chase_trace: node_stride must be >= 8");
  Trace t;
  const Addr base = 1 << 20;
  const Addr bound = detail::page_align_up(base + n_nodes * node_stride);
  t.regions.push_back({base, bound});
  t.space_size = bound + (1 << 20);
  t.kernel_names[1] = "chase";

  std::vector<std::uint64_t> next(n_nodes);
  std::iota(next.begin(), next.end(), 0);
  Rng rng(seed);
  rng.cyclic_permutation(next);

  t.pim.push_back(TraceEvent::kernel_begin(1, Granularity::Function));
  std::uint64_t node = 0;
  for (std::uint64_t hop = 0; hop < n_nodes; ++hop) {
    t.pim.push_back(TraceEvent::load(base + node * node_stride, 8));
    node = next[node];
  }
  t.pim.push_back(TraceEvent::kernel_end(1));
  return t;
}

// Concurrent CPU work and PIM kernels over a 256-line pool in the PIM region.
// The CPU reads the whole pool up front and caches it; the PIM kernels then
// walk the pool in per-kernel slices while the CPU loops over private data.
// sharing_fraction of the pool is under active sharing: kernel k updates its
// slice of those lines and the CPU re-reads the previous kernel's slice one
// round later, producer-consumer style. Per-kernel writes and concurrent CPU
// reads touch disjoint slices, so no serializable conflict ever arises; the
// fine-grained cost is one message per pool line plus one per re-read update.
//
// The CPU never stores, so mechanisms differ only in how they pay for the
// reader side of the handoff. Pacing compute is sized for the default
// latencies; other configs still simulate correctly, the phases just overlap
// differently.
inline Trace gen_shared_trace(std::uint64_t n_ops, double sharing_fraction, std::uint64_t seed) {
  if (n_ops == 0) throw std::invalid_argument("gen_shared_trace: n_ops must be > 0");
  if (sharing_fraction < 0.0 || sharing_fraction > 1.0)
    throw std::invalid_argument("gen_shared_trace: sharing_fraction must lie in [0, 1]");
  Rng rng(seed);
  Trace t;

  // 4 pages of pool lines occupy cache sets 0..255 under any in-region page
  // permutation; private lines sit at sets 256..511 and can never evict them
  const std::uint64_t pool = 256;
  const std::uint32_t rounds = 8;
  const Addr region_base = 1 << 20;
  const Addr region_bound = region_base + pool * 64;
  t.regions.push_back({region_base, region_bound});
  const Addr priv_base = 16ull << 20;
  t.space_size = priv_base + (64ull << 20);

  auto pool_addr = [&](std::uint64_t i) { return region_base + i * 64; };
  auto priv_addr = [&](std::uint64_t i) {
    return priv_base + (256 + i % 256) * 64 + (i / 256) * (512 * 64);
  };

  std::vector<std::uint64_t> order(pool);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::uint64_t n_shared =
      std::min<std::uint64_t>(pool, static_cast<std::uint64_t>(std::llround(
                                        sharing_fraction * static_cast<double>(pool))));
  std::vector<std::vector<std::uint64_t>> write_slice(rounds), read_slice(rounds);
  for (std::uint64_t i = 0; i < n_shared; ++i) write_slice[i % rounds].push_back(order[i]);
  for (std::uint64_t i = n_shared; i < pool; ++i) read_slice[i % rounds].push_back(order[i]);

  const std::uint64_t priv_per_round = std::max<std::uint64_t>(4, n_ops / 64);
  const std::uint64_t round_pad = 2000;

  // cpu: cache the pool, then per round consume the previous kernel's updates
  // and loop over fresh private lines
  for (std::uint64_t i = 0; i < pool; ++i) t.cpu.push_back(TraceEvent::load(pool_addr(i), 8));
  std::uint64_t priv_next = 0;
  for (std::uint32_t r = 0; r < rounds; ++r) {
    if (r > 0)
      for (std::uint64_t s : write_slice[r - 1]) t.cpu.push_back(TraceEvent::load(pool_addr(s), 8));
    for (std::uint64_t i = 0; i < priv_per_round; ++i)
      t.cpu.push_back(TraceEvent::load(priv_addr(priv_next++), 8));
    t.cpu.push_back(TraceEvent::compute(round_pad));
  }

  // pim: one kernel per round, paced to land inside it
  const std::uint64_t round_len = priv_per_round * 151 + round_pad + 300;
  t.pim.push_back(TraceEvent::compute(44000));
  for (std::uint32_t r = 0; r < rounds; ++r) {
    const std::uint32_t k = r + 1;
    t.kernel_names[k] = "shared";
    if (r > 0) {
      const std::uint64_t kernel_est = (read_slice[r - 1].size() + write_slice[r - 1].size()) * 50 + 100;
      t.pim.push_back(TraceEvent::compute(
          round_len > kernel_est + 500 ? round_len - kernel_est : 500));
    }
    t.pim.push_back(TraceEvent::kernel_begin(k, Granularity::Function));
    for (std::uint64_t u : read_slice[r]) t.pim.push_back(TraceEvent::load(pool_addr(u), 8));
    for (std::uint64_t w : write_slice[r]) t.pim.push_back(TraceEvent::store(pool_addr(w), 8));
    t.pim.push_back(TraceEvent::kernel_end(k));
  }
  return t;
}

}  // namespace pimsim
