#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace tracelab {

// SplitMix64 finalizer. Used to derive independent stream seeds from a base
// seed and a set of counters.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based split: derive_seed(base, {a, b, c}) depends only on its
// arguments, so any trial can be replayed in isolation.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> counters) {
  std::uint64_t h = mix64(base);
  for (auto c : counters) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

// Deterministic random stream. std::mt19937_64 output is fully specified by
// the standard; the conversions to real numbers below are done by hand
// because std:: distributions are not bit-portable across library vendors.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace tracelab
