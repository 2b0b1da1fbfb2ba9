#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace flsim {

// Worker count for fan-out sections: hardware concurrency, capped by the
// FLSIM_THREADS environment variable when set to a positive integer.
inline int worker_pool_size() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("FLSIM_THREADS")) {
    char* end = nullptr;
    long parsed = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && parsed >= 1) {
      n = static_cast<int>(parsed);
    }
  }
  return n;
}

// Runs fn(0..count-1) across up to num_threads workers. Each invocation must
// write only to its own output slot; results are then identical at any pool
// size. The smallest-index exception, if any, is rethrown on the caller.
inline void parallel_for(std::size_t count, int num_threads,
                         const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  if (num_threads < 1) num_threads = 1;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads), count);
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto body = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace flsim
