#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmda/augment.hpp"
#include "mmda/dataset.hpp"
#include "mmda/model.hpp"
#include "mmda/prob_dist.hpp"
#include "mmda/rng.hpp"

namespace mmda {

/// Per-sample class distributions produced by one model (or an ensemble).
struct PredictionSet {
  std::string model_id;
  std::vector<std::string> sample_ids;
  std::vector<ProbDist> probabilities;

  std::size_t size() const { return sample_ids.size(); }
  /// Throws mmda::Error on length mismatch, duplicate ids or rows off the simplex.
  void validate() const;
};

/// Mean of predict_proba over `count` independent augmentations of `image`.
ProbDist predict_tta(const Model<float>& model, const Image& image, const AugmentPolicy& policy, int count, Rng& rng);

/// Deterministic predictions on the centered evaluation view of every sample.
PredictionSet predict_center(const Model<float>& model, const DomainStore& store, const AugmentPolicy& policy,
                             std::string model_id);

/// predict_tta over every sample, in store order.
PredictionSet predict_store_tta(const Model<float>& model, const DomainStore& store, const AugmentPolicy& policy,
                                int count, Rng& rng, std::string model_id);

/// Equal-weight average of probability rows. All sets must list the same sample ids in the same order.
PredictionSet ensemble(std::span<const PredictionSet> sets);

/// Stacks sets for different sample pools (e.g. one per target domain) into one.
PredictionSet concatenate(std::span<const PredictionSet> sets);

/// `sample_id<SPACE>argmax_class`, one line per sample in order.
void export_predictions(const PredictionSet& set, const std::filesystem::path& path);
std::vector<std::pair<std::string, int>> read_predictions(const std::filesystem::path& path);

/// `sample_id<TAB>p_0<TAB>...<TAB>p_{C-1}` with round-trip precision.
void export_probabilities(const PredictionSet& set, const std::filesystem::path& path);
PredictionSet read_probabilities(const std::filesystem::path& path);

/// Fraction of predictions whose class equals the store's label. Every id must exist in the store.
double score(const PredictionSet& set, const DomainStore& store);
double score(const std::vector<std::pair<std::string, int>>& labels, const DomainStore& store);

}  // namespace mmda
