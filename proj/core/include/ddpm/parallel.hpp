#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ddpm {

/// Worker-pool size: DDPM_LAB_THREADS if set, otherwise hardware concurrency.
inline int thread_budget() {
  if (const char* env = std::getenv("DDPM_LAB_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [0, n). Work items must be independent; results must
/// be written to preallocated per-index slots so the outcome is identical
/// for any thread count.
inline void parallel_for(long n, const std::function<void(long)>& fn) {
  const int workers = std::min<long>(thread_budget(), n);
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ddpm
