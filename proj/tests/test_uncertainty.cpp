// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "slpose/uncertainty.hpp"

using namespace slpose;

namespace {

IntensityImage constant_image(int w, int h, float value) {
  IntensityImage img(w, h, value);
  return img;
}

/// Band-limited synthetic texture with strong x-gradients everywhere.
IntensityImage texture_image(int w, int h, double phase = 0.0) {
  IntensityImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = static_cast<float>(
          0.5 + 0.28 * std::sin(2 * kPi * (x - phase) / 7.3) +
          0.12 * std::sin(2 * kPi * ((x - phase) * 0.31 + y * 0.83) / 5.1));
  return img;
}

IntensityImage add_noise(const IntensityImage& img, double sigma,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, sigma);
  IntensityImage out = img;
  for (auto& v : out.data)
    v = static_cast<float>(std::min(1.0, std::max(0.0, v + gauss(rng))));
  return out;
}

const CameraModel kCam{1400, 1400, 320, 240, 640, 480, 100};

}  // namespace

TEST(DisparityVariance, FlatPatchIsInvalid) {
  auto img = constant_image(64, 64, 0.5f);
  auto var = disparity_variance(img, img, 4.0, Vec2(32, 32), 7, 0.01);
  EXPECT_FALSE(var.has_value());
}

TEST(DisparityVariance, UniformRampClosedForm) {
  // I_R(x) = 0.1 x on the patch: central-difference gradient 0.1 at every
  // patch pixel, so sigma_d^2 = sigma_I^2 / (49 * 0.01).
  IntensityImage right(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      right.at(x, y) = static_cast<float>(std::min(1.0, 0.1 * x));
  auto left = constant_image(16, 16, 0.5f);
  auto var = disparity_variance(left, right, 0.0, Vec2(5, 8), 7, 0.01);
  ASSERT_TRUE(var.has_value());
  EXPECT_NEAR(*var, 1e-4 / 0.49, 1e-9);
}

TEST(DisparityVariance, WindowOutOfBoundsIsInvalid) {
  auto img = texture_image(64, 64);
  EXPECT_FALSE(
      disparity_variance(img, img, 30.0, Vec2(2, 32), 7, 0.01).has_value());
  EXPECT_FALSE(
      disparity_variance(img, img, 0.0, Vec2(32, 1), 7, 0.01).has_value());
}

TEST(DisparityVariance, NoiseScalingIsExactlyQuadratic) {
  auto img = texture_image(64, 64);
  auto v1 = disparity_variance(img, img, 3.0, Vec2(30, 30), 7, 0.01);
  auto v3 = disparity_variance(img, img, 3.0, Vec2(30, 30), 7, 0.03);
  ASSERT_TRUE(v1 && v3);
  EXPECT_DOUBLE_EQ(*v3, 9.0 * *v1);
}

TEST(DisparityVariance, MoreGradientEnergyNeverHurts) {
  // Same patch with an extra high-frequency component has larger
  // gradient energy, hence no larger variance.
  IntensityImage weak(32, 32), strong(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double base = 0.5 + 0.1 * std::sin(2 * kPi * x / 9.0);
      weak.at(x, y) = static_cast<float>(base);
      strong.at(x, y) =
          static_cast<float>(base + 0.2 * std::sin(2 * kPi * x / 4.0));
    }
  auto vw = disparity_variance(weak, weak, 0.0, Vec2(16, 16), 7, 0.01);
  auto vs = disparity_variance(weak, strong, 0.0, Vec2(16, 16), 7, 0.01);
  ASSERT_TRUE(vw && vs);
  EXPECT_LE(*vs, *vw);
}

TEST(DisparityVariance, MonteCarloMatchesSsdMatcher) {
  // The matcher minimizes the photometric error whose noise variance is
  // sigma_I^2, so the noise draw perturbs the left (query) image while the
  // right (template) image stays clean.
  const double d_true = 4.0;
  auto right = texture_image(96, 32);
  auto left = texture_image(96, 32, d_true);
  const double sigma_img = 0.01;
  std::mt19937_64 rng(1234);
  const int ux = 48, uy = 16;
  std::vector<double> estimates;
  for (int draw = 0; draw < 500; ++draw) {
    auto noisy_left = add_noise(left, sigma_img, rng);
    auto d = oracle::ssd_subpixel_disparity(noisy_left, right, ux, uy, d_true,
                                            2, 7);
    ASSERT_TRUE(d.has_value());
    estimates.push_back(*d);
  }
  const double empirical = oracle::variance(estimates);
  auto predicted =
      disparity_variance(left, right, d_true, Vec2(ux, uy), 7, sigma_img);
  ASSERT_TRUE(predicted.has_value());
  EXPECT_GT(empirical, *predicted / 2.0);
  EXPECT_LT(empirical, *predicted * 2.0);
}

TEST(DepthVariance, ClosedFormExample) {
  // z = 1000 mm, fx = 1400 px, b = 100 mm, sigma_d = 0.1 px
  // F = z^2/(fx b) = 1e6/140000 ≈ 7.1429 mm/px -> sigma_z ≈ 0.714 mm.
  const double var = depth_variance(0.01, 1000.0, kCam);
  EXPECT_NEAR(std::sqrt(var), 0.714285714, 1e-6);
}

TEST(DepthVariance, ZeroInZeroOut) {
  EXPECT_DOUBLE_EQ(depth_variance(0.0, 800.0, kCam), 0.0);
}

TEST(DepthVariance, QuarticDepthScaling) {
  const double v1 = depth_variance(0.02, 500.0, kCam);
  const double v2 = depth_variance(0.02, 1000.0, kCam);
  EXPECT_NEAR(v2 / v1, 16.0, 1e-12);
}

TEST(DepthVariance, MonteCarloPropagation) {
  // z(d + eta), eta ~ N(0, sigma_d^2) vs the first-order propagation,
  // within 10% for sigma_d/d < 0.01.
  const double z0 = 900.0;
  const double d0 = kCam.fx * kCam.baseline / z0;
  const double sigma_d = 0.005 * d0 / 10.0;  // sigma_d/d = 5e-4
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss(0.0, sigma_d);
  std::vector<double> depths;
  for (int i = 0; i < 20000; ++i)
    depths.push_back(kCam.fx * kCam.baseline / (d0 + gauss(rng)));
  const double empirical = oracle::variance(depths);
  const double predicted = depth_variance(sigma_d * sigma_d, z0, kCam);
  EXPECT_NEAR(empirical / predicted, 1.0, 0.10);
}

TEST(CombinedDepthVariance, TakesMax) {
  auto v = combined_depth_variance(0.1, 0.4);
  ASSERT_TRUE(v.has_value());
  EXPECT_DOUBLE_EQ(*v, 0.4);
}

TEST(CombinedDepthVariance, MissingPropagates) {
  EXPECT_FALSE(combined_depth_variance(0.4, std::nullopt).has_value());
  EXPECT_FALSE(combined_depth_variance(std::nullopt, 0.4).has_value());
}

TEST(CombinedDepthVariance, SymmetricPairGivesEqualSides) {
  // Identical left/right images and zero disparity: both sides see the
  // same patch, so the two propagated variances agree exactly.
  auto img = texture_image(64, 64);
  auto var_l = disparity_variance(img, img, 0.0, Vec2(30, 30), 7, 0.01);
  auto var_r = disparity_variance(img, img, 0.0, Vec2(30, 30), 7, 0.01);
  ASSERT_TRUE(var_l && var_r);
  EXPECT_NEAR(*var_l, *var_r, 1e-9);
  EXPECT_DOUBLE_EQ(*combined_depth_variance(var_l, var_r),
                   std::max(*var_l, *var_r));
}

TEST(ScoreDepthMap, AllFlatImagesInvalidateEverything) {
  auto flat = constant_image(64, 48, 0.5f);
  DepthMap depth(64, 48);
  for (auto& v : depth.valid.data) v = 1;
  for (auto& z : depth.depth.data) z = 700.f;
  auto scored = score_depth_map(flat, flat, depth, kCam);
  EXPECT_EQ(scored.valid_count(), 0u);
}

TEST(ScoreDepthMap, TexturedPlaneMostlyValid) {
  // Fronto-parallel plane: constant disparity, left = shifted right.
  // Validity is judged over the stereo-overlap region; columns whose
  // right-image window falls off the sensor are unmatchable by any method.
  const CameraModel cam{300, 300, 80, 60, 160, 120, 50};
  const double z0 = 1000.0;
  const double d0 = cam.fx * cam.baseline / z0;  // 15 px
  auto right = texture_image(160, 120);
  auto left = texture_image(160, 120, d0);
  DepthMap depth(160, 120);
  for (auto& v : depth.valid.data) v = 1;
  for (auto& z : depth.depth.data) z = static_cast<float>(z0);
  auto scored = score_depth_map(left, right, depth, cam);
  const int x_min = static_cast<int>(std::ceil(d0)) + 5;
  std::size_t overlap = 0, valid = 0;
  for (int y = 4; y < 116; ++y)
    for (int x = x_min; x < 155; ++x) {
      ++overlap;
      if (scored.valid.at(x, y)) {
        ++valid;
        EXPECT_GT(scored.variance.at(x, y), 0.f);
        EXPECT_TRUE(std::isfinite(scored.variance.at(x, y)));
      }
    }
  EXPECT_GE(valid, 0.95 * overlap);
}

TEST(ScoreDepthMap, PredictionThresholdInvalidatesHighSigma) {
  auto right = texture_image(96, 64);
  auto left = texture_image(96, 64, 5.0);
  DepthMap depth(96, 64);
  for (auto& v : depth.valid.data) v = 1;
  for (auto& z : depth.depth.data)
    z = static_cast<float>(kCam.fx * kCam.baseline / 5.0);
  ScoreOptions strict;
  strict.tau_sigma = 0.0;  // everything exceeds a zero threshold
  auto none = score_depth_map(left, right, depth, kCam, strict);
  EXPECT_EQ(none.valid_count(), 0u);
  ScoreOptions lax;
  lax.tau_sigma = 1e9;
  auto all = score_depth_map(left, right, depth, kCam, lax);
  auto unthresholded = score_depth_map(left, right, depth, kCam);
  EXPECT_EQ(all.valid_count(), unthresholded.valid_count());
}
