#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace oasalign {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index is visited once;
/// callers write results into index-addressed slots so output order never depends
/// on scheduling. The first exception thrown by any body is rethrown here.
template <class Body>
void parallel_for(std::size_t n, std::size_t jobs, Body&& body) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// Sums items[lo, hi) with a fixed pairwise tree so the rounding pattern depends
/// only on the item count.
template <class T, class Add>
T pairwise_reduce(const std::vector<T>& items, std::size_t lo, std::size_t hi, Add add) {
  if (hi - lo == 1) return items[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return add(pairwise_reduce(items, lo, mid, add), pairwise_reduce(items, mid, hi, add));
}

}  // namespace oasalign
