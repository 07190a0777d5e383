#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "mmda/linalg.hpp"
#include "mmda/prob_dist.hpp"
#include "mmda/rng.hpp"
#include "mmda/sampler.hpp"

namespace mmda {

/// MixUp / sharpening / loss-balancing hyperparameters.
struct MixParams {
  double alpha = 0.75;        // Beta(alpha, alpha) for mix coefficients
  double temperature = 0.5;   // sharpening exponent is 1 / temperature
  double weight = 333.0;      // multiplier of the consistency (squared error) loss

  void validate() const;
};

/// p_i^(1/T) / sum_j p_j^(1/T). Computed in log space so small entries do not underflow.
ProbDist sharpen(const ProbDist& p, double temperature);

/// Maps images to class distributions; label guessing is agnostic of the model behind it.
using Predictor = std::function<std::vector<ProbDist>(const std::vector<Image>&)>;

/// q_i = sharpen((predict(a_i) + predict(b_i)) / 2, T) for aligned views.
/// Calls `predict` exactly twice, once per view.
std::vector<ProbDist> guess_labels(const Predictor& predict, const ComposedBatch& view_a,
                                   const ComposedBatch& view_b, double temperature);

/// Gives both views the guessed distributions as targets.
void assign_guesses(ComposedBatch& view_a, ComposedBatch& view_b, const std::vector<ProbDist>& guesses);

/// max(lambda, 1 - lambda).
inline double dominant_coefficient(double lambda) { return lambda < 0.5 ? 1.0 - lambda : lambda; }

/// lambda ~ Beta(alpha, alpha), returned as max(lambda, 1 - lambda) in [0.5, 1].
double sample_mix_coefficient(double alpha, Rng& rng);

/// Convex combination of images and targets with per-example coefficients in [0.5, 1].
/// Tags and sample ids come from `primary`.
ComposedBatch mixup(const ComposedBatch& primary, const ComposedBatch& partner, std::span<const double> lambdas);

struct MixPool {
  std::array<ComposedBatch, 3> mixed;   // labeled, view_a, view_b after mixing
  std::vector<std::size_t> permutation; // of the 3n pooled examples
  std::vector<double> lambdas;          // one per pooled example, primary order
};

/// Pools labeled ++ view_a ++ view_b, shuffles the pool, and mixes each
/// primary with the consecutive pool slice at its position. Draws the
/// permutation first, then the 3n coefficients.
MixPool build_mix_pool(const ComposedBatch& labeled, const ComposedBatch& view_a, const ComposedBatch& view_b,
                       double alpha, Rng& rng);

/// Same as above with the random choices supplied by the caller.
MixPool build_mix_pool(const ComposedBatch& labeled, const ComposedBatch& view_a, const ComposedBatch& view_b,
                       std::span<const std::size_t> permutation, std::span<const double> lambdas);

/// Re-deals the examples of three equal-size batches so each batch holds
/// floor(S/3) or ceil(S/3) of the S source-origin examples, the rest target.
/// The multiset of examples and their tags is unchanged.
std::array<ComposedBatch, 3> recompose_for_bn(const std::array<ComposedBatch, 3>& mixed, Rng& rng);

struct Losses {
  double supervised = 0.0;   // L_x, mean cross-entropy over supervised examples
  double consistency = 0.0;  // L_u, mean of (1/C) * squared error over consistency examples
  double total = 0.0;        // L_x + w * L_u
};

inline constexpr double kLogClamp = -27.631021115928547;  // log(1e-12)

/// Loss on predicted distributions.
Losses mixmatch_losses(std::span<const ProbDist> predictions, std::span<const ProbDist> targets,
                       std::span<const LossKind> loss_kinds, double weight);

/// Same losses computed from logits (classes x examples). Optionally writes
/// dL_total/dlogits into `grad_logits`. The supervised and consistency means
/// are taken over `supervised_count` and `consistency_count`, which lets a
/// step spread its examples over several forward batches.
template <class S>
Losses mixmatch_losses_from_logits(const Matrix<S>& logits, std::span<const ProbDist> targets,
                                   std::span<const LossKind> loss_kinds, double weight, std::size_t supervised_count,
                                   std::size_t consistency_count, Matrix<S>* grad_logits);

/// Softmax of every column of a classes x examples logit matrix.
template <class S>
std::vector<ProbDist> softmax_columns(const Matrix<S>& logits);

}  // namespace mmda
