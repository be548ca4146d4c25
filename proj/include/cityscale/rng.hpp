#pragma once

#include <cstdint>

namespace cityscale {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z);

// Counter-based SplitMix64: draw i (0-based) of the stream keyed `key` is
// mix64(key + (i + 1) * 0x9E3779B97F4A7C15), which is exactly the sequence of
// the classic SplitMix64 generator seeded with `key`. Seed 1234567 yields
// 6457827717110365317, 3203168211198807973, 9817491932198370423, ...
//
// split(id) derives an independent substream keyed mix64(key ^ mix64(id)), so
// per-region or per-user streams do not depend on generation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  std::uint64_t next();
  // 53-bit uniform in [0, 1).
  double uniform();
  // Uniform in (0, 1].
  double uniform_open();
  // Standard normal via Box-Muller (cosine branch; two uniforms per draw).
  double normal();
  // Uniform integer in [0, n); n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  CounterRng split(std::uint64_t stream_id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace cityscale
