#include "mmda/prob_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mmda/error.hpp"

namespace mmda {

bool on_simplex(std::span<const double> values, double tolerance) {
  if (values.empty()) return false;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

ProbDist::ProbDist(std::vector<double> values) : values_(std::move(values)) {
  if (!on_simplex(values_)) {
    std::ostringstream msg;
    msg << "ProbDist: values are not on the probability simplex (size " << values_.size() << ")";
    throw Error(msg.str());
  }
}

ProbDist ProbDist::uniform(std::size_t classes) {
  return ProbDist(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

ProbDist ProbDist::one_hot(std::size_t classes, std::size_t index) {
  if (index >= classes) throw Error("ProbDist::one_hot: index out of range");
  std::vector<double> v(classes, 0.0);
  v[index] = 1.0;
  return ProbDist(std::move(v));
}

ProbDist ProbDist::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error("ProbDist::normalized: negative or non-finite weight");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error("ProbDist::normalized: weights sum to zero");
  for (double& w : weights) w /= sum;
  return ProbDist(std::move(weights));
}

std::size_t ProbDist::argmax() const {
  return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) - values_.begin());
}

double ProbDist::entropy() const {
  double h = 0.0;
  for (double p : values_) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace mmda
