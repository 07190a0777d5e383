#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmda/augment.hpp"
#include "mmda/dataset.hpp"
#include "mmda/prob_dist.hpp"
#include "mmda/rng.hpp"

namespace mmda {

enum class Origin { source, target };
enum class LossKind { supervised, consistency };

const char* to_string(Origin origin);
const char* to_string(LossKind kind);

/// A batch whose examples carry their domain origin and loss kind.
///
/// `targets` is either empty (unlabeled views before label guessing) or has
/// one distribution per example.
struct ComposedBatch {
  std::vector<Image> images;
  std::vector<ProbDist> targets;
  std::vector<Origin> origin;
  std::vector<LossKind> loss_kind;
  std::vector<std::string> sample_ids;

  std::size_t size() const { return images.size(); }
  bool has_targets() const { return !targets.empty(); }
  std::size_t count(Origin o) const;
  std::size_t count(LossKind k) const;

  /// Appends example `i` of `other`, tags and target included.
  void append(const ComposedBatch& other, std::size_t i);

  /// Throws mmda::Error when the arrays are not congruent or a target is off the simplex.
  void check() const;
};

enum class CompositionMode { multi_source, semi_supervised };

const char* to_string(CompositionMode mode);
CompositionMode composition_mode_from_string(const std::string& text);

/// Batch size and track for one training run.
class CompositionPlan {
 public:
  static constexpr int kDefaultBatch = 15;

  /// Multi-source requires n >= k >= 1; semi-supervised requires n divisible by 5.
  CompositionPlan(CompositionMode mode, int n = kDefaultBatch, int k = 1);

  CompositionMode mode() const { return mode_; }
  int n() const { return n_; }
  int k() const { return k_; }

  /// Labeled examples drawn from the source for a semi-supervised batch (4n/5).
  int semi_supervised_source_count() const { return n_ / 5 * 4; }
  int semi_supervised_target_count() const { return n_ / 5; }

 private:
  CompositionMode mode_;
  int n_;
  int k_;
};

/// Per-domain counts for an n-example multi-source batch over k domains:
/// floor(n/k) each plus one extra for a random choice of (n mod k) distinct domains.
std::vector<int> multisource_counts(int n, int k, Rng& rng);

/// Builds labeled batches and paired unlabeled views for training steps.
///
/// Each store gets an epoch-style shuffled cursor, so within one batch
/// indices are distinct whenever the store holds at least as many samples as
/// requested. Cursors are keyed by store address; the stores must outlive the
/// sampler and must not move.
class Sampler {
 public:
  ComposedBatch compose_labeled_multisource(const std::vector<const DomainStore*>& sources,
                                            const CompositionPlan& plan, const Augmenter& augmenter, Rng& rng);

  ComposedBatch compose_labeled_semisupervised(const DomainStore& source, const DomainStore& labeled_target,
                                               const CompositionPlan& plan, const Augmenter& augmenter, Rng& rng);

  /// Two views of the same n target samples, augmented independently.
  std::pair<ComposedBatch, ComposedBatch> compose_unlabeled_pair(const DomainStore& target,
                                                                 const CompositionPlan& plan,
                                                                 const Augmenter& augmenter, Rng& rng);

  /// Next `count` indices from the store's cursor.
  std::vector<std::size_t> draw(const DomainStore& store, std::size_t count, Rng& rng);

  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t position = 0;
  };

  /// Cursor of `store`, if it has been drawn from. Used for checkpointing.
  std::optional<Cursor> cursor(const DomainStore& store) const;
  void restore_cursor(const DomainStore& store, Cursor cursor);

 private:

  void append_labeled(ComposedBatch& batch, const DomainStore& store, std::size_t count, Origin origin,
                      const Augmenter& augmenter, Rng& rng);

  std::map<const DomainStore*, Cursor> cursors_;
};

}  // namespace mmda
