#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmda/image.hpp"

namespace mmda {

/// One image with its optional class label and provenance.
struct DomainSample {
  Image image;
  std::optional<int> label;
  std::string domain_id;
  std::string sample_id;  // relative file path, unique within a store
};

using SamplePtr = std::shared_ptr<const DomainSample>;

/// Immutable, indexed collection of samples from one domain or split.
///
/// Construction validates the invariants: all samples share the domain id,
/// sample ids are unique, and a labeled store has a label in [0, C) on every
/// sample while an unlabeled store carries none.
class DomainStore {
 public:
  DomainStore() = default;
  DomainStore(std::string domain_id, int class_count, std::vector<SamplePtr> samples, bool labeled);

  const std::string& domain_id() const { return domain_id_; }
  int class_count() const { return class_count_; }
  bool labeled() const { return labeled_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const DomainSample& operator[](std::size_t i) const { return *samples_[i]; }
  const SamplePtr& sample_ptr(std::size_t i) const { return samples_[i]; }
  const std::vector<SamplePtr>& samples() const { return samples_; }

  /// Copy of this store with every label removed.
  DomainStore without_labels() const;

 private:
  std::string domain_id_;
  int class_count_ = 0;
  std::vector<SamplePtr> samples_;
  bool labeled_ = false;
};

using Rgb = std::array<float, 3>;

/// Rendering style that defines one synthetic domain.
struct DomainStyle {
  std::string name;
  Rgb background{0.95f, 0.95f, 0.95f};
  Rgb foreground{0.10f, 0.10f, 0.10f};
  double noise_sigma = 0.0;
  double stroke = 0.0;  // outline width in pixels; 0 renders filled shapes
  bool invert = false;
};

/// Named styles: "clean", "inverted_noise", "outline", "color", "noisy".
DomainStyle domain_style_preset(const std::string& name);

/// Parameters of a generated shifted-domain dataset.
struct ToySpec {
  int class_count = 4;
  std::vector<DomainStyle> domains;
  int samples_per_class_per_domain = 100;
  int image_side = 32;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Number of distinct shape classes the renderer supports.
inline constexpr int kMaxToyClasses = 8;

/// Renders one shape of class `class_index` in `style`. Pure function of its arguments.
Image render_toy_image(int class_index, const DomainStyle& style, int side, std::uint64_t seed);

struct ManifestSummary {
  struct Domain {
    std::string domain_id;
    std::size_t count = 0;
    std::filesystem::path manifest;
  };
  std::vector<Domain> domains;
  std::size_t total() const;
};

/// Writes out_root/<domain>/<class>/<id>.png and one manifest out_root/<domain>.tsv per domain.
ManifestSummary generate_toy_dataset(const ToySpec& spec, const std::filesystem::path& out_root);

/// Reads a TSV manifest (`relative_path<TAB>label`, label omitted when unlabeled).
///
/// An optional first line `#mmda-manifest key=value ...` supplies `domain`,
/// `class_count` and `root` (image root, relative to the manifest directory).
/// Errors name the 1-based row number.
DomainStore load_manifest(const std::filesystem::path& manifest_path);

/// Writes `store` as a manifest whose rows are its sample ids, resolved against `image_root`.
/// When `hide_labels` is set the label column is omitted regardless of the store.
void write_manifest(const DomainStore& store, const std::filesystem::path& manifest_path,
                    const std::filesystem::path& image_root, bool hide_labels = false);

/// Result of carving a few labeled examples per class out of a labeled store.
struct SemiSupervisedSplit {
  DomainStore labeled;     // exactly per_class samples of every class
  DomainStore unlabeled;   // all remaining samples, labels removed
  DomainStore evaluation;  // the same remaining samples with labels, for scoring only
};

SemiSupervisedSplit split_semi_supervised(const DomainStore& store, int per_class, std::uint64_t seed);

}  // namespace mmda
