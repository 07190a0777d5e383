#pragma once

#include <functional>

#include "mmda/image.hpp"
#include "mmda/rng.hpp"

namespace mmda {

/// The single resize -> random flip -> random crop policy used for both
/// training and test-time augmentation.
class AugmentPolicy {
 public:
  static constexpr int kDefaultResize = 256;
  static constexpr int kDefaultCrop = 224;

  /// Throws ConfigError unless 1 <= crop_side <= resize_side and the flip probability lies in [0, 1].
  explicit AugmentPolicy(int resize_side = kDefaultResize, int crop_side = kDefaultCrop,
                         double flip_probability = 0.5);

  int resize_side() const { return resize_side_; }
  int crop_side() const { return crop_side_; }
  double flip_probability() const { return flip_probability_; }

  /// Same sizes, flip disabled. Used for deterministic views.
  AugmentPolicy without_flip() const { return AugmentPolicy(resize_side_, crop_side_, 0.0); }

  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;

 private:
  int resize_side_;
  int crop_side_;
  double flip_probability_;
};

/// The random choices of one augmentation.
struct AugmentDraw {
  bool flip = false;
  int offset_y = 0;
  int offset_x = 0;
};

/// Draw order is fixed: flip, then row offset, then column offset.
AugmentDraw draw_augment(const AugmentPolicy& policy, Rng& rng);

/// Deterministic part of augment(): resize, optional flip, crop at the given offsets.
Image apply_augment(const Image& image, const AugmentPolicy& policy, const AugmentDraw& draw);

/// random-crop(flip-with-p(resize(image))); output is crop_side x crop_side.
Image augment(const Image& image, const AugmentPolicy& policy, Rng& rng);

/// Resize then centered crop, no flip. The deterministic evaluation view.
Image center_view(const Image& image, const AugmentPolicy& policy);

/// Type-erased per-image augmentation used by batch composition.
using Augmenter = std::function<Image(const Image&, Rng&)>;

Augmenter make_augmenter(const AugmentPolicy& policy);

/// Returns its input unchanged and draws nothing.
Augmenter identity_augmenter();

}  // namespace mmda
