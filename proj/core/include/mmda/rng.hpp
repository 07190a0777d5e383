#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>

namespace mmda {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random source shared by every stochastic operation.
///
/// Wraps a 64-bit Mersenne twister so that the whole pipeline is reproducible
/// from a single seed on a given platform. Streams that must not interfere are
/// obtained with derive(), never by sharing one Rng between consumers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1).
  double uniform01();

  bool bernoulli(double p) { return uniform01() < p; }

  double normal(double mean, double stddev);

  /// Beta(a, b) via the ratio of two gamma draws.
  double beta(double a, double b);

  /// New generator whose seed is drawn from this one, tagged by `stream`.
  Rng derive(std::uint64_t stream);

  template <class It>
  void shuffle(It first, It last) {
    // Fisher-Yates with uniform_index so draw order is explicit.
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[uniform_index(i)]);
    }
  }

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mmda
