#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace avc {

/// Worker count for `n` tasks; `threads` = 0 means hardware concurrency.
inline std::size_t worker_count(std::size_t n, std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return std::min(threads, std::max<std::size_t>(n, 1));
}

/// Runs fn(i, worker) for i in [0, n) on `threads` workers (the caller is
/// worker 0). After all workers finish, rethrows the failure with the lowest
/// index, so the reported error does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::mutex m;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto worker = [&](std::size_t w) {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i, w);
      } catch (...) {
        std::lock_guard lock(m);
        if (i < failed_at) failed_at = i, failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker, t);
  worker(0);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace avc
