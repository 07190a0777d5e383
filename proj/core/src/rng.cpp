#include "mmda/rng.hpp"

#include <limits>
#include <sstream>

#include "mmda/error.hpp"

namespace mmda {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw Error("Rng::uniform_index: empty range");
  // Rejection sampling keeps the draw unbiased and independent of the stdlib.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

double Rng::beta(double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(engine_);
  const double y = gb(engine_);
  if (x + y <= 0.0) return 0.5;
  return x / (x + y);
}

Rng Rng::derive(std::uint64_t stream) {
  return Rng(next_u64() ^ splitmix64(stream));
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng rng;
  std::istringstream in(text);
  in >> rng.engine_;
  if (!in) throw DataError("Rng::deserialize: malformed generator state");
  return rng;
}

}  // namespace mmda
