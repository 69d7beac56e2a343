#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace kmono {

//! Number of workers for a requested thread count; 0 means all cores.
inline unsigned
resolve_threads(unsigned requested)
{
  if (requested > 0)
    return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

//! Runs task(i) for i in [0, n) on up to `threads` workers. Each task writes
//! only its own result slot, so the output never depends on scheduling.
//! The first exception (lowest index) is rethrown after all workers join.
template<class Task>
void
parallel_for(std::size_t n, unsigned threads, Task&& task)
{
  if (n == 0)
    return;
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(resolve_threads(threads), n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{ 0 };
  auto loop = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    loop();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(loop);
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace kmono
