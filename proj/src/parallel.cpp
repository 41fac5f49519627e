#include "rawscore/parallel.hpp"

#include <atomic>

namespace rawscore {

namespace {
std::atomic<int> g_workers{1};
}

int worker_count() { return g_workers.load(std::memory_order_relaxed); }

void set_worker_count(int workers) {
  g_workers.store(std::max(1, workers), std::memory_order_relaxed);
}

}  // namespace rawscore
