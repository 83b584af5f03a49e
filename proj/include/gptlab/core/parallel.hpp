#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gptlab {

// `requested` workers, capped by the GPT_LAB_THREADS environment variable.
inline std::size_t worker_count(std::size_t requested) {
  std::size_t n = std::max<std::size_t>(1, requested);
  if (const char* env = std::getenv("GPT_LAB_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

// Calls task(i) for every i in [0, count) on up to `workers` threads. Tasks
// must only write to per-index state. The first exception is rethrown after
// all workers finish.
template <typename Task>
void parallel_for(std::size_t count, std::size_t workers, Task&& task) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gptlab
