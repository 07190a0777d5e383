#include "mmda/augment.hpp"

#include <string>

#include "mmda/error.hpp"

namespace mmda {

AugmentPolicy::AugmentPolicy(int resize_side, int crop_side, double flip_probability)
    : resize_side_(resize_side), crop_side_(crop_side), flip_probability_(flip_probability) {
  if (resize_side_ < 1) throw ConfigError("augment.resize_side must be >= 1 (got " + std::to_string(resize_side_) + ")");
  if (crop_side_ < 1) throw ConfigError("augment.crop_side must be >= 1 (got " + std::to_string(crop_side_) + ")");
  if (crop_side_ > resize_side_)
    throw ConfigError("augment.crop_side (" + std::to_string(crop_side_) + ") exceeds augment.resize_side (" +
                      std::to_string(resize_side_) + ")");
  if (!(flip_probability_ >= 0.0 && flip_probability_ <= 1.0))
    throw ConfigError("augment flip probability must lie in [0, 1]");
}

AugmentDraw draw_augment(const AugmentPolicy& policy, Rng& rng) {
  AugmentDraw draw;
  draw.flip = rng.bernoulli(policy.flip_probability());
  const auto span = static_cast<std::size_t>(policy.resize_side() - policy.crop_side() + 1);
  draw.offset_y = static_cast<int>(rng.uniform_index(span));
  draw.offset_x = static_cast<int>(rng.uniform_index(span));
  return draw;
}

Image apply_augment(const Image& image, const AugmentPolicy& policy, const AugmentDraw& draw) {
  Image resized = resize_bilinear(image, policy.resize_side(), policy.resize_side());
  if (draw.flip) resized = flip_horizontal(resized);
  if (policy.crop_side() == policy.resize_side()) return resized;
  return crop(resized, draw.offset_y, draw.offset_x, policy.crop_side(), policy.crop_side());
}

Image augment(const Image& image, const AugmentPolicy& policy, Rng& rng) {
  return apply_augment(image, policy, draw_augment(policy, rng));
}

Image center_view(const Image& image, const AugmentPolicy& policy) {
  const int offset = (policy.resize_side() - policy.crop_side()) / 2;
  return apply_augment(image, policy, AugmentDraw{false, offset, offset});
}

Augmenter make_augmenter(const AugmentPolicy& policy) {
  return [policy](const Image& image, Rng& rng) { return augment(image, policy, rng); };
}

Augmenter identity_augmenter() {
  return [](const Image& image, Rng&) { return image; };
}

}  // namespace mmda
