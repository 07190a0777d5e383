#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mmda {

/// Class-probability vector on the simplex: entries >= 0, sum within 1e-6 of 1.
class ProbDist {
 public:
  static constexpr double kTolerance = 1e-6;

  ProbDist() = default;
  /// Throws mmda::Error when `values` is not on the simplex.
  explicit ProbDist(std::vector<double> values);
  ProbDist(std::initializer_list<double> values) : ProbDist(std::vector<double>(values)) {}

  static ProbDist uniform(std::size_t classes);
  static ProbDist one_hot(std::size_t classes, std::size_t index);
  /// Renormalizes nonnegative weights; throws if they sum to zero.
  static ProbDist normalized(std::vector<double> weights);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::size_t argmax() const;
  double entropy() const;

  friend bool operator==(const ProbDist&, const ProbDist&) = default;

 private:
  std::vector<double> values_;
};

bool on_simplex(std::span<const double> values, double tolerance = ProbDist::kTolerance);

}  // namespace mmda
