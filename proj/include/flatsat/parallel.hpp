#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace flatsat {

/// Worker count: FLATSAT_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLATSAT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return hw;
}

/// Splits [0, n) into `shards` contiguous ranges and runs
/// fn(shard, begin, end) for each, on at most thread_count() threads.
/// Results depend only on the shard layout, never on the worker count.
template <typename Fn>
void parallel_shards(std::size_t n, std::size_t shards, Fn&& fn) {
  shards = std::max<std::size_t>(1, std::min(shards, std::max<std::size_t>(n, 1)));
  auto range = [&](std::size_t s) {
    return std::pair<std::size_t, std::size_t>{n * s / shards, n * (s + 1) / shards};
  };
  const std::size_t workers = std::min<std::size_t>(thread_count(), shards);
  if (workers <= 1) {
    for (std::size_t s = 0; s < shards; ++s) {
      auto [b, e] = range(s);
      fn(s, b, e);
    }
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t s = w; s < shards; s += workers) {
          auto [b, e] = range(s);
          fn(s, b, e);
        }
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

}  // namespace flatsat
