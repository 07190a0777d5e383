#include <gtest/gtest.h>

#include "mmda/augment.hpp"
#include "mmda/error.hpp"
#include "test_support.hpp"

namespace mmda {
namespace {

TEST(Augment, PolicyValidation) {
  EXPECT_NO_THROW(AugmentPolicy(256, 224));
  EXPECT_THROW(AugmentPolicy(10, 12), ConfigError);
  EXPECT_THROW(AugmentPolicy(10, 0), ConfigError);
  EXPECT_THROW(AugmentPolicy(10, 8, 1.5), ConfigError);
}

TEST(Augment, OutputIsCropSized) {
  const AugmentPolicy policy(36, 32);
  Rng rng(1);
  const Image out = augment(testing::noise_image(20, 1), policy, rng);
  EXPECT_EQ(out.height, 32);
  EXPECT_EQ(out.width, 32);
  EXPECT_TRUE(out.valid());
}

TEST(Augment, DrawsStayInsideTheResizedImage) {
  const AugmentPolicy policy(36, 32);
  Rng rng(2);
  int flips = 0;
  for (int i = 0; i < 2000; ++i) {
    const AugmentDraw d = draw_augment(policy, rng);
    ASSERT_GE(d.offset_y, 0);
    ASSERT_LE(d.offset_y, 4);
    ASSERT_GE(d.offset_x, 0);
    ASSERT_LE(d.offset_x, 4);
    flips += d.flip ? 1 : 0;
  }
  EXPECT_NEAR(flips / 2000.0, 0.5, 0.05);
}

TEST(Augment, SameSeedSameView) {
  const AugmentPolicy policy(12, 8);
  const Image img = testing::noise_image(16, 3);
  Rng a(7), b(7);
  EXPECT_EQ(augment(img, policy, a), augment(img, policy, b));
}

TEST(Augment, EqualSidesWithoutFlipIsResizeOnly) {
  const AugmentPolicy policy = AugmentPolicy(8, 8).without_flip();
  const Image img = testing::noise_image(8, 4);
  Rng rng(5);
  EXPECT_EQ(augment(img, policy, rng), resize_bilinear(img, 8, 8));
}

TEST(Augment, ApplyMatchesManualComposition) {
  const AugmentPolicy policy(10, 6);
  const Image img = testing::noise_image(7, 5);
  const AugmentDraw d{true, 1, 3};
  EXPECT_EQ(apply_augment(img, policy, d), crop(flip_horizontal(resize_bilinear(img, 10, 10)), 1, 3, 6, 6));
}

TEST(Augment, CenterViewIsDeterministicCenteredCrop) {
  const AugmentPolicy policy(12, 8);
  const Image img = testing::noise_image(9, 6);
  EXPECT_EQ(center_view(img, policy), crop(resize_bilinear(img, 12, 12), 2, 2, 8, 8));
}

TEST(Augment, IdentityAugmenterDrawsNothing) {
  Rng a(8), b(8);
  const Image img = testing::noise_image(5, 7);
  EXPECT_EQ(identity_augmenter()(img, a), img);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace mmda
