#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cityscale {

// Splits [0, n) into `threads` contiguous shards and runs
// fn(shard, begin, end) on each. Shard boundaries depend only on n and the
// thread count; callers merge per-shard results in shard order.
template <typename Fn>
void for_each_shard(std::size_t n, unsigned threads, Fn&& fn) {
  std::size_t shards = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (shards == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(shards);
  workers.reserve(shards);
  for (std::size_t s = 0; s < shards; ++s) {
    std::size_t begin = n * s / shards;
    std::size_t end = n * (s + 1) / shards;
    workers.emplace_back([&, s, begin, end] {
      try {
        fn(s, begin, end);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::size_t shard_count(std::size_t n, unsigned threads) {
  return std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
}

}  // namespace cityscale
