#pragma once

#include <cstddef>
#include <functional>

namespace microresnet {

/// Worker cap for op-internal parallelism: MICRORESNET_THREADS when set,
/// otherwise the hardware concurrency.
std::size_t thread_limit();
void set_thread_limit(std::size_t threads);

/// Calls body(i) for every i in [0, n), split into contiguous ranges over at
/// most `max_threads` threads (0 means thread_limit()). Bodies must write to
/// disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t max_threads = 0);

}  // namespace microresnet
