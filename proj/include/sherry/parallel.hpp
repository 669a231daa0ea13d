// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace sherry {

/// Runs f(i) for i in [0, n), split into contiguous chunks over `threads`
/// workers. Each index is handled by exactly one worker, so per-index
/// results never depend on the worker count.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F &&f) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i)
      f(i);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end)
      break;
    workers.emplace_back([&f, begin, end] {
      for (std::size_t i = begin; i < end; ++i)
        f(i);
    });
  }
}

} // namespace sherry
