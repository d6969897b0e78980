#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "matmart/baking.hpp"
#include "matmart/rasterization.hpp"
#include "matmart/scene.hpp"
#include "matmart/view_selection.hpp"
#include "support/oracles.hpp"

using namespace matmart;

TEST(BaseViews, CubeViewsSitOnTheAxes) {
  const auto mesh = make_cube_mesh();
  const auto cams = base_axis_views(mesh, 128);
  ASSERT_EQ(cams.size(), 6u);
  const std::array<Vec3, 6> axes{Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                                 -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
  for (std::size_t i = 0; i < 6; ++i) {
    const Vec3 c = cams[i].center();
    EXPECT_NEAR(c.norm(), 2.5 * std::sqrt(3.0) / 2.0, 1e-9);
    EXPECT_NEAR(c.normalized().dot(axes[i]), 1.0, 1e-12);
    EXPECT_NEAR(cams[i].forward().dot(-axes[i]), 1.0, 1e-12);
    EXPECT_NO_THROW(cams[i].validate());
    const auto g = rasterize_view(mesh, cams[i]);
    std::set<int> faces;
    for (auto id : g.triangle_id) {
      if (id >= 0) faces.insert(id / 2);
    }
    EXPECT_GE(faces.size(), 1u);
    EXPECT_LE(faces.size(), 3u);
    // The face on this axis fills the view centre.
    EXPECT_EQ(g.triangle(64, 64) / 2, static_cast<int>(i));
  }
}

TEST(BaseViews, TranslationEquivariant) {
  const Vec3 shift(3.0, -1.5, 7.25);
  const auto a = base_axis_views(make_cube_mesh(), 96);
  const auto b = base_axis_views(make_cube_mesh(shift), 96);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR((b[i].center() - a[i].center() - shift).norm(), 0.0, 1e-9);
    EXPECT_NEAR((b[i].rotation - a[i].rotation).norm(), 0.0, 1e-12);
    EXPECT_NEAR(b[i].fx, a[i].fx, 1e-6);
    EXPECT_NEAR(b[i].cx, a[i].cx, 1e-6);
    EXPECT_NEAR(b[i].cy, a[i].cy, 1e-6);
  }
}

TEST(BaseViews, SixViewsSeeAlmostAllOfASphere) {
  const auto mesh = make_sphere_mesh(32, 16);
  const auto cams = base_axis_views(mesh, 64);
  const auto uv = rasterize_uv(mesh, 48);
  const double slack = 1e-3 * mesh.bounds().diagonal().norm();
  std::size_t seen = 0;
  for (auto t : uv.occupied) {
    const Vec3 p = uv.texel_position(t);
    const Vec3 n = uv.texel_normal(t);
    for (const auto& c : cams) {
      if (n.dot(c.center() - p) > 0.0 && oracle::visible_from(mesh, c, p, slack)) {
        ++seen;
        break;
      }
    }
  }
  EXPECT_GE(static_cast<double>(seen) / uv.occupied.size(), 0.99);
}

TEST(BaseViews, DegenerateMeshIsRejected) {
  TriangleMesh m;
  m.positions = {Vec3(1, 1, 1)};
  EXPECT_THROW(base_axis_views(m, 32), ValidationError);
}

TEST(Candidates, FibonacciSpread) {
  EXPECT_EQ(fibonacci_directions(1, 0).size(), 1u);
  EXPECT_THROW(fibonacci_directions(0, 0), ValidationError);
  const auto d = fibonacci_directions(300, 0);
  ASSERT_EQ(d.size(), 300u);
  double min_angle = 180.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_NEAR(d[i].norm(), 1.0, 1e-12);
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      const double a = std::acos(std::clamp(d[i].dot(d[j]), -1.0, 1.0)) * 180.0 / std::numbers::pi;
      min_angle = std::min(min_angle, a);
    }
  }
  EXPECT_GE(min_angle, 6.0);
}

TEST(Candidates, Deterministic) {
  const auto mesh = make_cube_mesh();
  const auto a = sample_sphere_candidates(50, mesh, 9, 64);
  const auto b = sample_sphere_candidates(50, mesh, 9, 64);
  const auto c = sample_sphere_candidates(50, mesh, 10, 64);
  ASSERT_EQ(a.size(), 50u);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rotation, b[i].rotation);
    EXPECT_EQ(a[i].translation, b[i].translation);
    EXPECT_EQ(a[i].fx, b[i].fx);
    any_diff = any_diff || (a[i].center() - c[i].center()).norm() > 1e-9;
  }
  EXPECT_TRUE(any_diff);
}

namespace {

struct CubeFixture {
  TriangleMesh mesh = make_cube_mesh();
  UVGBuffer uv = rasterize_uv(mesh, 64);
  std::vector<Camera> cands = sample_sphere_candidates(40, mesh, 0, 64);
};

}  // namespace

TEST(Greedy, NothingToDoWhenAlreadyCovered) {
  CubeFixture f;
  ImageBuffer w(64, 64, 1, 1.0);
  const auto r = greedy_select(f.mesh, w, f.uv, f.cands, {});
  EXPECT_TRUE(r.views.empty());
  EXPECT_EQ(r.initial_coverage, 1.0);
}

TEST(Greedy, FirstPickMatchesExhaustiveSearch) {
  CubeFixture f;
  auto atlas = UVMaterialAtlas::empty(64);
  for (auto t : f.uv.occupied) {
    if (f.uv.triangle_id[t] / 2 != 4) atlas.weights.values()[t] = 1.0;
  }
  SelectionParams p;
  const auto r = greedy_select(f.mesh, atlas.weights, f.uv, f.cands, p);
  ASSERT_FALSE(r.views.empty());
  const auto gains = oracle::exhaustive_gains(f.mesh, atlas, f.uv, f.cands, p.lambda, p.tau, p.sim_scale);
  std::size_t best = 0;
  for (std::size_t c = 1; c < gains.size(); ++c) {
    if (gains[c] > gains[best]) best = c;
  }
  EXPECT_EQ(r.views.front().candidate_index, best);
  EXPECT_EQ(r.views.front().gain, gains[best]);
  // The chosen view looks at the +Z face.
  EXPECT_GT(r.views.front().camera.center().z(), 0.0);
}

TEST(Greedy, RespectsBudgetAndIncreasesCoverage) {
  CubeFixture f;
  SelectionParams p;
  p.max_views = 2;
  p.rho = 1.0;
  const auto r = greedy_select(f.mesh, ImageBuffer(64, 64, 1), f.uv, f.cands, p);
  EXPECT_EQ(r.views.size(), 2u);
  p.max_views = 6;
  const auto more = greedy_select(f.mesh, ImageBuffer(64, 64, 1), f.uv, f.cands, p);
  ASSERT_FALSE(more.views.empty());
  EXPECT_LE(more.views.size(), 6u);
  double prev = more.initial_coverage;
  std::set<std::size_t> used;
  for (const auto& v : more.views) {
    EXPECT_GT(v.coverage_after, prev);
    EXPECT_GT(v.gain, 0u);
    EXPECT_TRUE(used.insert(v.candidate_index).second);
    prev = v.coverage_after;
  }
  // Gains add up to the coverage increase.
  std::size_t total = 0;
  for (const auto& v : more.views) total += v.gain;
  EXPECT_NEAR(more.views.back().coverage_after - more.initial_coverage,
              static_cast<double>(total) / f.uv.occupied.size(), 1e-12);
}

TEST(Greedy, StopsAtTargetCoverage) {
  CubeFixture f;
  SelectionParams p;
  p.rho = 0.3;
  const auto r = greedy_select(f.mesh, ImageBuffer(64, 64, 1), f.uv, f.cands, p);
  ASSERT_FALSE(r.views.empty());
  EXPECT_GE(r.views.back().coverage_after, 0.3);
  if (r.views.size() > 1) EXPECT_LT(r.views[r.views.size() - 2].coverage_after, 0.3);
}

TEST(MaskOrder, SortsAscending) {
  const std::vector<std::size_t> counts{50, 10, 30};
  EXPECT_EQ(mask_order(counts), (std::vector<std::size_t>{1, 2, 0}));
  const std::vector<std::size_t> ties{5, 2, 5, 2};
  EXPECT_EQ(mask_order(ties), (std::vector<std::size_t>{1, 3, 0, 2}));
  EXPECT_TRUE(mask_order(std::vector<std::size_t>{}).empty());
}

TEST(MaskOrder, MatchesReferenceSort) {
  std::mt19937_64 rng(6);
  std::vector<ImageBuffer> masks;
  std::vector<int> views;
  for (int i = 0; i < 16; ++i) {
    ImageBuffer m(8, 8, 1);
    std::uniform_int_distribution<int> n(0, 64);
    const int k = n(rng);
    for (int p = 0; p < k; ++p) m.values()[p] = 1.0;
    masks.push_back(std::move(m));
    views.push_back(i);
  }
  const auto sorted = sort_views_by_mask(views, std::span<const ImageBuffer>(masks));
  std::vector<std::pair<std::size_t, int>> ref;
  for (int i = 0; i < 16; ++i) ref.emplace_back(mask_pixel_count(masks[i]), i);
  std::sort(ref.begin(), ref.end());
  ASSERT_EQ(sorted.size(), 16u);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(sorted[i], ref[i].second);
}

TEST(MaskOrder, OneMaskPerView) {
  std::vector<int> views{0, 1};
  std::vector<ImageBuffer> masks(1, ImageBuffer(2, 2, 1));
  EXPECT_THROW(sort_views_by_mask(views, std::span<const ImageBuffer>(masks)), ValidationError);
}
