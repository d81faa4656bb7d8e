#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rcm::parallel {

// Worker count used when a caller passes threads <= 0.
int default_threads();
void set_default_threads(int n);

// Runs body(lo, hi) over a static partition of [begin, end) into fixed-size
// chunks. Chunk boundaries depend only on `chunk`, never on the thread count,
// so per-chunk partial results combine identically for any thread count.
template <class Body>
void for_chunks(std::int64_t begin, std::int64_t end, std::int64_t chunk, Body&& body, int threads = 0) {
  if (end <= begin) return;
  chunk = std::max<std::int64_t>(chunk, 1);
  const std::int64_t num_chunks = (end - begin + chunk - 1) / chunk;
  const int workers = static_cast<int>(
      std::min<std::int64_t>(threads > 0 ? threads : default_threads(), num_chunks));
  auto run_chunk = [&](std::int64_t c) {
    const std::int64_t lo = begin + c * chunk;
    body(c, lo, std::min(end, lo + chunk));
  };
  if (workers <= 1) {
    for (std::int64_t c = 0; c < num_chunks; ++c) run_chunk(c);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::int64_t c = w; c < num_chunks; c += workers) run_chunk(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// Evaluates task(i) for i in [0, n) on a worker pool and returns the results
// ordered by task index.
template <class Result, class Task>
std::vector<Result> map_tasks(std::int64_t n, Task&& task, int threads = 0) {
  std::vector<Result> out(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
  for_chunks(
      0, n, 1, [&](std::int64_t, std::int64_t lo, std::int64_t) { out[lo] = task(lo); }, threads);
  return out;
}

}  // namespace rcm::parallel
