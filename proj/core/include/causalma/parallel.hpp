#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace causalma {

// 0 means "use available hardware parallelism".
unsigned resolve_workers(unsigned requested) noexcept;

// Runs fn(i) for i in [0, count) on up to `workers` threads. Tasks must write
// only to their own index-addressed slots. If tasks throw, the exception of the
// lowest failing index is rethrown after all workers have joined, so the
// observable outcome does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  workers = resolve_workers(workers);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  if (workers > count) workers = static_cast<unsigned>(count);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = count;
  std::exception_ptr error;

  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// Splits [0, count) into contiguous chunks and runs fn(begin, end) for each,
// so per-chunk scratch state can be built once. Chunk boundaries depend only
// on count and the worker count, and callers must not let results depend on
// them.
template <class Fn>
void parallel_chunks(std::size_t count, unsigned workers, Fn&& fn) {
  workers = resolve_workers(workers);
  const std::size_t chunks = workers <= 1 ? 1 : std::min<std::size_t>(count, std::size_t{workers} * 4);
  if (chunks == 0) return;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = count * c / chunks;
    const std::size_t end = count * (c + 1) / chunks;
    if (begin < end) fn(begin, end);
  });
}

}  // namespace causalma
