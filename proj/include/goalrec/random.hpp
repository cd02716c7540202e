#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace goalrec {

// Portable sampling on top of mt19937_64. The std distributions are
// implementation-defined, so corpora and splits would differ across standard
// libraries if we used them.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Index drawn proportionally to non-negative weights (at least one positive).
  std::size_t categorical(std::span<const double> weights);

  template <class It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; derives independent stream seeds from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace goalrec
