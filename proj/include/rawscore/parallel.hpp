#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace rawscore {

// Process-wide worker count used by the data-parallel loops. Outputs never
// depend on it: every loop body writes only to its own index range.
int worker_count();
void set_worker_count(int workers);

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, worker_count()));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunks = std::min(workers, n);
  std::vector<std::exception_ptr> errors(chunks);
  {
    std::vector<std::jthread> threads;
    threads.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t begin = n * c / chunks;
      const std::size_t end = n * (c + 1) / chunks;
      threads.emplace_back([&, c, begin, end] {
        try {
          for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace rawscore
