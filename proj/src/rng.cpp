#include "cityscale/rng.hpp"

#include <cmath>
#include <numbers>

#include "cityscale/error.hpp"

namespace cityscale {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double CounterRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double CounterRng::uniform_open() { return 1.0 - uniform(); }

double CounterRng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("CounterRng::below: empty range");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

CounterRng CounterRng::split(std::uint64_t stream_id) const {
  return CounterRng(mix64(key_ ^ mix64(stream_id + kGolden)));
}

}  // namespace cityscale
