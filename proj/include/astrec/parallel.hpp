#pragma once

#include <cstddef>
#include <utility>

namespace astrec {

// Data-parallel kernels decompose their work into a fixed number of chunks,
// independent of the thread count. Each chunk writes only chunk-private
// state (partial sums, disjoint output slots) and reductions walk chunks in
// index order, so the serial reference path — the same loop run in order —
// produces bit-identical results to the OpenMP path.
inline constexpr int kChunkCount = 64;

bool parallel_enabled();
void set_parallel(bool on);
int worker_threads();

inline std::pair<std::size_t, std::size_t> chunk_bounds(std::size_t n, int c) {
  const std::size_t lo = n * static_cast<std::size_t>(c) / kChunkCount;
  const std::size_t hi = n * static_cast<std::size_t>(c + 1) / kChunkCount;
  return {lo, hi};
}

// f(chunk, lo, hi) over the index range [0, n).
template <typename F>
void for_chunks(std::size_t n, F&& f) {
  if (n == 0) return;
  if (parallel_enabled()) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < kChunkCount; ++c) {
      const auto [lo, hi] = chunk_bounds(n, c);
      if (lo < hi) f(c, lo, hi);
    }
  } else {
    for (int c = 0; c < kChunkCount; ++c) {
      const auto [lo, hi] = chunk_bounds(n, c);
      if (lo < hi) f(c, lo, hi);
    }
  }
}

}  // namespace astrec
