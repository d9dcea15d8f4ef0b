// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace slpose {

/// Static-chunk parallel loop over [begin, end). Each index is visited
/// exactly once; callers must only write to disjoint locations so results
/// stay deterministic regardless of thread count.
inline void parallel_for(std::size_t begin, std::size_t end,
                         const std::function<void(std::size_t)>& body) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t num_threads = std::min<std::size_t>(hw == 0 ? 1 : hw, n);
  if (num_threads <= 1 || n < 64) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  const std::size_t chunk = std::max<std::size_t>(1, n / (num_threads * 8));
  std::vector<std::thread> pool;
  pool.reserve(num_threads);
  for (std::size_t t = 0; t < num_threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t lo = next.fetch_add(chunk);
        if (lo >= end) break;
        std::size_t hi = std::min(end, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace slpose
