#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace fairlab {

// Seeded generator whose derived draws are identical across standard
// libraries: only the engine (whose output sequence is standardised) comes
// from <random>; the distributions are spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for a named purpose, derived from a base seed.
  static Rng stream(std::uint64_t seed, std::uint64_t purpose) { return Rng(splitmix(seed ^ splitmix(purpose))); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Box-Muller; the second variate is discarded so each call consumes two draws.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

// Purposes for Rng::stream so that, e.g., holdout carving never perturbs batching.
enum class Stream : std::uint64_t {
  kInit = 1,
  kBatching = 2,
  kHoldout = 3,
  kFlip = 4,
  kData = 5,
  kDiscriminator = 6,
  kHoldoutBatching = 7,
};

inline Rng make_stream(std::uint64_t seed, Stream s) { return Rng::stream(seed, static_cast<std::uint64_t>(s)); }

}  // namespace fairlab
