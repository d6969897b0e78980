#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "matmart/baking.hpp"
#include "matmart/rasterization.hpp"
#include "matmart/scene.hpp"
#include "support/oracles.hpp"

using namespace matmart;

namespace {

BakeContribution uniform_contribution(int res, double value, double cosine, double lambda = 6.0) {
  return BakeContribution::make(ImageBuffer(res, res, 3, value), ImageBuffer(res, res, 2, value),
                                ImageBuffer(res, res, 1, cosine), lambda);
}

BakeContribution random_contribution(int res, std::mt19937_64& rng, double lambda = 6.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer a(res, res, 3), rm(res, res, 2), s(res, res, 1);
  for (double& v : a.values()) v = u(rng);
  for (double& v : rm.values()) v = u(rng);
  // A quarter of texels unseen.
  for (double& v : s.values()) v = u(rng) < 0.25 ? 0.0 : u(rng);
  return BakeContribution::make(std::move(a), std::move(rm), std::move(s), lambda);
}

}  // namespace

TEST(Contribution, WeightIsCosinePowerAndZeroWhereUnseen) {
  const auto c = uniform_contribution(4, 0.3, 0.5);
  for (double w : c.weight.values()) EXPECT_DOUBLE_EQ(w, 0.015625);
  const auto z = uniform_contribution(4, 0.3, 0.0);
  for (double w : z.weight.values()) EXPECT_EQ(w, 0.0);
  EXPECT_THROW(uniform_contribution(4, 0.3, 0.5, 0.0), ValidationError);
}

TEST(Blend, EmptyAtlasTakesContribution) {
  std::mt19937_64 rng(3);
  auto atlas = UVMaterialAtlas::empty(16);
  const auto c = random_contribution(16, rng);
  blend(atlas, c);
  for (std::size_t t = 0; t < 256; ++t) {
    const double wp = c.weight.values()[t];
    EXPECT_EQ(atlas.weights.values()[t], wp);
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(atlas.albedo.values()[t * 3 + k], wp > 0.0 ? c.albedo.values()[t * 3 + k] : 0.0, 1e-15);
    }
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(atlas.rm.values()[t * 2 + k], wp > 0.0 ? c.rm.values()[t * 2 + k] : 0.0, 1e-15);
    }
  }
  EXPECT_EQ(atlas.version, 1u);
}

TEST(Blend, SameValueIsAFixedPoint) {
  auto atlas = UVMaterialAtlas::empty(8);
  blend(atlas, uniform_contribution(8, 0.4, 1.0));
  blend(atlas, uniform_contribution(8, 0.4, 0.7));
  for (double v : atlas.albedo.values()) EXPECT_NEAR(v, 0.4, 1e-15);
  for (double w : atlas.weights.values()) EXPECT_NEAR(w, 1.0 + std::pow(0.7, 6.0), 1e-15);
}

TEST(Blend, HandEvaluatedTexel) {
  auto atlas = UVMaterialAtlas::empty(1);
  atlas.albedo.fill(0.2);
  atlas.rm.fill(0.2);
  atlas.weights.fill(1.0);
  blend(atlas, uniform_contribution(1, 0.8, 0.5));
  EXPECT_NEAR(atlas.weights.at(0, 0, 0), 1.015625, 1e-15);
  EXPECT_NEAR(atlas.albedo.at(0, 0, 0), 0.20923, 5e-6);
  EXPECT_NEAR(atlas.rm.at(0, 0, 1), 0.20923, 5e-6);
}

TEST(Blend, ResolutionMismatchThrows) {
  auto atlas = UVMaterialAtlas::empty(8);
  EXPECT_THROW(blend(atlas, uniform_contribution(4, 0.1, 1.0)), ValidationError);
}

TEST(Blend, UntouchedWhereContributionIsZero) {
  std::mt19937_64 rng(1);
  auto atlas = UVMaterialAtlas::empty(8);
  blend(atlas, random_contribution(8, rng));
  const auto before = atlas;
  blend(atlas, uniform_contribution(8, 0.9, 0.0));
  EXPECT_EQ(atlas.albedo, before.albedo);
  EXPECT_EQ(atlas.rm, before.rm);
  EXPECT_EQ(atlas.weights, before.weights);
}

TEST(Blend, SequentialEqualsClosedForm) {
  std::mt19937_64 rng(11);
  const int res = 12;
  std::vector<BakeContribution> cs;
  for (int k = 0; k < 7; ++k) cs.push_back(random_contribution(res, rng, 1.0 + k));
  auto atlas = UVMaterialAtlas::empty(res);
  for (const auto& c : cs) blend(atlas, c);
  for (std::size_t t = 0; t < static_cast<std::size_t>(res) * res; ++t) {
    std::vector<double> vals, ws;
    for (const auto& c : cs) {
      vals.push_back(c.albedo.values()[t * 3 + 1]);
      ws.push_back(c.weight.values()[t]);
    }
    double wsum = 0.0;
    for (double w : ws) wsum += w;
    EXPECT_NEAR(atlas.weights.values()[t], wsum, 1e-12);
    if (wsum > 0.0) EXPECT_NEAR(atlas.albedo.values()[t * 3 + 1], oracle::weighted_mean(vals, ws), 1e-5);
  }
}

TEST(Blend, OrderInvariantAndConvex) {
  std::mt19937_64 rng(5);
  const int res = 10;
  std::vector<BakeContribution> cs;
  for (int k = 0; k < 6; ++k) cs.push_back(random_contribution(res, rng));
  auto a = UVMaterialAtlas::empty(res);
  for (const auto& c : cs) blend(a, c);
  std::vector<int> order = {3, 0, 5, 1, 4, 2};
  auto b = UVMaterialAtlas::empty(res);
  for (int i : order) blend(b, cs[i]);
  for (std::size_t t = 0; t < static_cast<std::size_t>(res) * res; ++t) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = t * 3 + k;
      EXPECT_NEAR(a.albedo.values()[i], b.albedo.values()[i], 1e-5);
      double lo = 1e9, hi = -1e9;
      for (const auto& c : cs) {
        if (c.weight.values()[t] <= 0.0) continue;
        lo = std::min(lo, c.albedo.values()[i]);
        hi = std::max(hi, c.albedo.values()[i]);
      }
      if (lo <= hi) {
        EXPECT_GE(a.albedo.values()[i], lo - 1e-12);
        EXPECT_LE(a.albedo.values()[i], hi + 1e-12);
      }
    }
  }
}

TEST(Blend, WeightsNeverDecrease) {
  std::mt19937_64 rng(8);
  auto atlas = UVMaterialAtlas::empty(8);
  for (int k = 0; k < 5; ++k) {
    const auto before = atlas.weights;
    blend(atlas, random_contribution(8, rng));
    for (std::size_t t = 0; t < 64; ++t) EXPECT_GE(atlas.weights.values()[t], before.values()[t]);
  }
}

TEST(Coverage, FreshFullAndHalf) {
  const auto mesh = make_cube_mesh();
  const auto uv = rasterize_uv(mesh, 64);
  auto atlas = UVMaterialAtlas::empty(64);
  EXPECT_EQ(texel_coverage(atlas, uv, 1e-3), 0.0);
  auto full = atlas;
  blend(full, uniform_contribution(64, 0.5, 1.0));
  EXPECT_EQ(texel_coverage(full, uv, 1e-3), 1.0);
  auto half = atlas;
  for (std::size_t k = 0; k < uv.occupied.size(); k += 2) half.weights.values()[uv.occupied[k]] = 1.0;
  EXPECT_NEAR(texel_coverage(half, uv, 1e-3), 0.5, 1.0 / uv.occupied.size());
  // Weight exactly tau counts; just below does not.
  auto edge = atlas;
  edge.weights.values()[uv.occupied[0]] = 1e-3;
  edge.weights.values()[uv.occupied[1]] = 0.999e-3;
  EXPECT_NEAR(texel_coverage(edge, uv, 1e-3), 1.0 / uv.occupied.size(), 1e-15);
}

TEST(Coverage, NoOccupiedTexelsIsFullyCovered) {
  UVGBuffer uv;
  uv.resolution = 4;
  EXPECT_EQ(texel_coverage(UVMaterialAtlas::empty(4), uv, 1e-3), 1.0);
  EXPECT_THROW(texel_coverage(UVMaterialAtlas::empty(8), uv, 1e-3), ValidationError);
}

TEST(Dilation, RadiusZeroIsIdentity) {
  std::mt19937_64 rng(2);
  auto atlas = UVMaterialAtlas::empty(8);
  blend(atlas, random_contribution(8, rng));
  const auto out = dilate_atlas(atlas, 0);
  EXPECT_EQ(out.albedo, atlas.albedo);
  EXPECT_EQ(out.rm, atlas.rm);
  EXPECT_EQ(out.weights, atlas.weights);
  EXPECT_THROW(dilate_atlas(atlas, -1), ValidationError);
}

TEST(Dilation, SingleTexelFillsFourNeighbourhood) {
  auto atlas = UVMaterialAtlas::empty(5);
  atlas.weights.at(2, 2, 0) = 1.0;
  for (int c = 0; c < 3; ++c) atlas.albedo.at(2, 2, c) = 0.7;
  atlas.rm.at(2, 2, 0) = 0.3;
  const auto out = dilate_atlas(atlas, 1);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const int d = std::abs(x - 2) + std::abs(y - 2);
      const double expect = d <= 1 ? 0.7 : 0.0;
      EXPECT_EQ(out.albedo.at(x, y, 1), expect) << x << "," << y;
      EXPECT_EQ(out.rm.at(x, y, 0), d <= 1 ? 0.3 : 0.0);
    }
  }
  EXPECT_EQ(out.weights, atlas.weights);
}

TEST(Dilation, CheckerboardRadiusTwoFillsEverything) {
  const int res = 9;
  auto atlas = UVMaterialAtlas::empty(res);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      if ((x + y) % 2) continue;
      atlas.weights.at(x, y, 0) = 1.0;
      for (int c = 0; c < 3; ++c) atlas.albedo.at(x, y, c) = u(rng);
    }
  }
  const auto out = dilate_atlas(atlas, 2);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      EXPECT_GT(out.albedo.at(x, y, 0), 0.0);
      if ((x + y) % 2 == 0) continue;
      // Exhaustive nearest-covered search, first in scan order on ties.
      int bx = -1, by = -1, best = 1 << 30;
      for (int sy = 0; sy < res; ++sy) {
        for (int sx = 0; sx < res; ++sx) {
          if (atlas.weights.at(sx, sy, 0) <= 0.0) continue;
          const int d2 = (sx - x) * (sx - x) + (sy - y) * (sy - y);
          if (d2 < best) {
            best = d2;
            bx = sx;
            by = sy;
          }
        }
      }
      EXPECT_EQ(out.albedo.at(x, y, 0), atlas.albedo.at(bx, by, 0));
    }
  }
  EXPECT_EQ(out.weights, atlas.weights);
}
