#include "microresnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace microresnet {

namespace {

std::size_t initial_limit() {
  if (const char* env = std::getenv("MICRORESNET_THREADS")) {
    try {
      const long value = std::stol(env);
      if (value > 0) return static_cast<std::size_t>(value);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::atomic<std::size_t>& limit_slot() {
  static std::atomic<std::size_t> limit{initial_limit()};
  return limit;
}

}  // namespace

std::size_t thread_limit() { return limit_slot().load(); }

void set_thread_limit(std::size_t threads) { limit_slot().store(std::max<std::size_t>(1, threads)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t max_threads) {
  std::size_t threads = max_threads == 0 ? thread_limit() : std::min(max_threads, thread_limit());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = n * t / threads;
    const std::size_t end = n * (t + 1) / threads;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace microresnet
