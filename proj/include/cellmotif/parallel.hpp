#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cellmotif {

/// Worker count from CELLMOTIF_THREADS (default 1).
inline unsigned thread_count() {
  if (const char* env = std::getenv("CELLMOTIF_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return 1;
}

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker; callers
/// write into per-index slots so the result does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Sum of row partials computed by row_fn(row), combined in row order.
template <class RowFn>
double ordered_row_sum(std::size_t rows, RowFn&& row_fn) {
  std::vector<double> partial(rows, 0.0);
  parallel_for(rows, [&](std::size_t r) { partial[r] = row_fn(r); });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace cellmotif
