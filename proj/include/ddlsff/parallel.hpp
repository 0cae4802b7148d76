#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ddlsff {

namespace detail {

inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{0};
  return n;
}

inline thread_local bool in_parallel_region = false;

}  // namespace detail

/// Worker count used by every internally parallel operation. 0 means "all
/// logical cores".
inline void set_num_threads(int n) { detail::thread_setting().store(std::max(0, n)); }

inline int num_threads() {
  const int n = detail::thread_setting().load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for every i in [begin, end), statically partitioned into
/// contiguous chunks. Each index is visited by exactly one thread, so any
/// per-index computation is independent of the worker count. Nested calls run
/// inline on the calling worker.
template <typename Fn>
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end, Fn&& fn) {
  const std::ptrdiff_t count = end - begin;
  if (count <= 0) return;
  const int workers = static_cast<int>(std::min<std::ptrdiff_t>(num_threads(), count));
  if (workers <= 1 || detail::in_parallel_region) {
    for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run_chunk = [&](int w) {
    const std::ptrdiff_t lo = begin + count * w / workers;
    const std::ptrdiff_t hi = begin + count * (w + 1) / workers;
    detail::in_parallel_region = true;
    try {
      for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
    detail::in_parallel_region = false;
  };

  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(run_chunk, w);
  run_chunk(0);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ddlsff
