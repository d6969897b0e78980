#include <random>

#include <gtest/gtest.h>

#include "matmart/metrics.hpp"
#include "matmart/scene.hpp"
#include "support/oracles.hpp"

using namespace matmart;

TEST(SiPsnr, IdenticalAndScaledAreCapped) {
  std::mt19937_64 rng(1);
  const auto gt = oracle::random_image(16, 16, 3, rng, 0.1, 0.9);
  EXPECT_EQ(si_psnr(gt, gt), 99.0);
  ImageBuffer half = gt;
  for (double& v : half.values()) v *= 0.5;
  EXPECT_EQ(si_psnr(half, gt), 99.0);
}

TEST(SiPsnr, MatchesScaleSearch) {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 5; ++n) {
    const auto pred = oracle::random_image(20, 12, 3, rng);
    const auto gt = oracle::random_image(20, 12, 3, rng);
    EXPECT_NEAR(si_psnr(pred, gt), oracle::grid_search_si_psnr(pred, gt), 0.01);
  }
}

TEST(SiPsnr, PerChannelScaleInvariant) {
  std::mt19937_64 rng(3);
  const auto pred = oracle::random_image(10, 10, 3, rng);
  const auto gt = oracle::random_image(10, 10, 3, rng);
  ImageBuffer scaled = pred;
  for (std::size_t i = 0; i < scaled.pixel_count(); ++i) {
    scaled.values()[i * 3] *= 2.0;
    scaled.values()[i * 3 + 2] *= 0.3;
  }
  EXPECT_NEAR(si_psnr(scaled, gt), si_psnr(pred, gt), 1e-9);
}

TEST(SiPsnr, MaskRestrictsComparison) {
  std::mt19937_64 rng(4);
  const auto gt = oracle::random_image(8, 8, 3, rng);
  ImageBuffer pred = gt;
  EvalMask m{ImageBuffer(8, 8, 1)};
  for (int x = 0; x < 8; ++x) {
    m.mask.at(x, 0, 0) = 1.0;
    for (int c = 0; c < 3; ++c) pred.at(x, 5, c) = 0.0;
  }
  EXPECT_EQ(si_psnr(pred, gt, m), 99.0);
  EXPECT_LT(si_psnr(pred, gt), 99.0);
  // All-zero prediction keeps scale 1.
  const ImageBuffer zero(8, 8, 3);
  EXPECT_NEAR(si_psnr(zero, gt), -10.0 * std::log10(mse(zero, gt)), 1e-9);
}

TEST(SiPsnr, EmptyMaskAndShapeMismatchThrow) {
  const ImageBuffer a(4, 4, 3, 0.5);
  EXPECT_THROW(si_psnr(a, a, EvalMask{ImageBuffer(4, 4, 1)}), ValidationError);
  EXPECT_THROW(si_psnr(a, ImageBuffer(4, 5, 3)), ValidationError);
  EXPECT_THROW(si_psnr(a, a, EvalMask::full(3, 3)), ValidationError);
}

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_image(24, 20, 3, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, OppositeConstantsHandValue) {
  const ImageBuffer zero(16, 16, 1, 0.0), one(16, 16, 1, 1.0);
  const double c1 = 0.01 * 0.01;
  EXPECT_NEAR(ssim(one, zero), c1 / (1.0 + c1), 1e-12);
}

TEST(Ssim, MatchesDirectWindowSum) {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 3; ++n) {
    const auto a = oracle::random_image(23, 17, 3, rng);
    auto b = a;
    for (double& v : b.values()) v = std::clamp(v + std::normal_distribution<double>(0, 0.1)(rng), 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), oracle::naive_ssim(a, b), 1e-6);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LE(ssim(a, b), 1.0);
    EXPECT_GE(ssim(a, b), -1.0);
  }
}

TEST(Ssim, TooSmallThrows) {
  const ImageBuffer a(10, 30, 1);
  EXPECT_THROW(ssim(a, a), ValidationError);
}

TEST(GaussianWindow, NormalizedAndSymmetric) {
  const auto w = gaussian_window_1d();
  ASSERT_EQ(w.size(), 11u);
  double s = 0.0;
  for (double v : w) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(w[i], w[10 - i]);
}

TEST(Mse, HandValuesAndOracle) {
  std::mt19937_64 rng(7);
  const auto a = oracle::random_image(9, 7, 2, rng);
  EXPECT_EQ(mse(a, a), 0.0);
  ImageBuffer b = a;
  for (double& v : b.values()) v += 0.1;
  EXPECT_NEAR(mse(a, b), 0.01, 1e-12);
  const auto c = oracle::random_image(9, 7, 2, rng);
  ImageBuffer mask(9, 7, 1);
  for (double& v : mask.values()) v = std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
  mask.values()[0] = 1.0;
  EXPECT_NEAR(mse(a, c, EvalMask{mask}), oracle::naive_mse(a, c, mask), 1e-12);
}

TEST(EvaluateAtlas, PerfectAtlasScoresCapped) {
  const auto mesh = make_cube_mesh();
  TextureOptions t;
  t.resolution = 64;
  const auto [albedo, rm] = make_ground_truth_textures(t);
  auto atlas = UVMaterialAtlas::empty(64);
  atlas.albedo = albedo;
  atlas.rm = rm;
  atlas.weights.fill(1.0);
  const auto m = evaluate_atlas(atlas, albedo, rm, mesh, 1e-3);
  EXPECT_EQ(m.coverage, 1.0);
  EXPECT_EQ(m.si_psnr_albedo, 99.0);
  EXPECT_NEAR(m.ssim_albedo, 1.0, 1e-12);
  EXPECT_EQ(m.mse_roughness, 0.0);
  EXPECT_EQ(m.mse_metallic, 0.0);
  const auto v = evaluate_atlas(atlas, albedo, rm, mesh, 1e-3, EvalSpace::View, {orbit_camera(mesh, 30, 20, 48)});
  EXPECT_EQ(v.si_psnr_albedo, 99.0);
  EXPECT_EQ(v.mse_metallic, 0.0);
  EXPECT_THROW(evaluate_atlas(atlas, albedo, rm, mesh, 1e-3, EvalSpace::View), ValidationError);
  EXPECT_THROW(evaluate_atlas(UVMaterialAtlas::empty(64), albedo, rm, mesh, 1e-3), ValidationError);
}

TEST(EvaluateAtlas, ResamplesGroundTruth) {
  const ImageBuffer tex(32, 32, 3, 0.4);
  const auto r = resample_texture(tex, 16);
  EXPECT_EQ(r.width(), 16);
  for (double v : r.values()) EXPECT_NEAR(v, 0.4, 1e-15);
  EXPECT_EQ(resample_texture(tex, 32), tex);
}
