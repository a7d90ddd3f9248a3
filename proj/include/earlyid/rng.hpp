#pragma once

// Seeded random source with distributions defined here rather than by the
// standard library, so sequences are identical across toolchains.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace earlyid {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open() { return 1.0 - uniform(); }

  double normal() {
    if (spare_) {
      spare_ = false;
      return spare_value_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double t = 2.0 * M_PI * uniform();
    spare_value_ = r * std::sin(t);
    spare_ = true;
    return r * std::cos(t);
  }

  double exponential(double mean) { return -mean * std::log(uniform_open()); }

  double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

  /// Number of failures before the first success, success probability p.
  std::uint64_t geometric(double p) {
    if (p >= 1) return 0;
    return static_cast<std::uint64_t>(std::floor(std::log(uniform_open()) / std::log1p(-p)));
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool spare_ = false;
  double spare_value_ = 0;
};

}  // namespace earlyid
