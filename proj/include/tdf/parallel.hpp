#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tdf {

/// Thread count from an explicit request, else TDFORECAST_THREADS, else 1.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TDFORECAST_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

/// Runs body(i) for i in [0, n). Work is handed out dynamically, but callers
/// write into slot i only, so results never depend on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(workers, n); ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace tdf
