#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace matmart {

namespace detail {
inline std::atomic<int>& thread_override() {
  static std::atomic<int> value{0};
  return value;
}
}  // namespace detail

// Programmatic cap; 0 restores the environment/hardware default.
inline void set_max_threads(int n) { detail::thread_override().store(std::max(0, n)); }

// MATMART_THREADS caps internal parallelism; defaults to hardware concurrency.
inline int max_threads() {
  if (const int o = detail::thread_override().load(); o > 0) return o;
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MATMART_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap > 0) n = std::min(n > 0 ? n : cap, cap);
    } catch (const std::exception&) {
    }
  }
  return std::max(1, n);
}

// Splits [0, count) into contiguous chunks, one per worker. Each chunk writes
// to disjoint outputs so results do not depend on the thread count.
template <typename Fn>
void parallel_for_chunks(int count, Fn&& fn) {
  const int workers = std::min(max_threads(), std::max(1, count / 16));
  if (workers <= 1 || count <= 1) {
    fn(0, count);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const int step = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * step;
    const int end = std::min(count, begin + step);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace matmart
