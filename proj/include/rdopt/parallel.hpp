// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace rdopt {

// Worker count: min(hardware, RDOPT_THREADS). Defaults to the hardware
// concurrency; RDOPT_THREADS=1 forces serial execution.
inline unsigned thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("RDOPT_THREADS")) {
    const long v = std::atol(env);
    if (v >= 1 && static_cast<unsigned>(v) < hw) hw = static_cast<unsigned>(v);
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Results must be written to per-index slots;
// the schedule is work-stealing by atomic counter, so outputs are identical
// for any thread count as long as fn is pure per index.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = thread_budget();
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  pool.reserve(count);
  for (unsigned w = 0; w < count; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
}

}  // namespace rdopt
