#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include <spdlog/spdlog.h>

#include "matmart/baking.hpp"
#include "matmart/core_types.hpp"
#include "matmart/gbuffer.hpp"
#include "matmart/parallel.hpp"

namespace matmart {

namespace detail {

// Scan-converts a 2D triangle over pixel centres (x + .5, y + .5) with a
// top-left style tie rule, so a shared edge belongs to exactly one of the two
// triangles. Calls fn(x, y, l0, l1, l2) with affine barycentrics relative to
// the original vertex order. Only rows in [row_begin, row_end) are visited.
template <typename Fn>
bool raster_triangle(const Vec2& p0, const Vec2& p1, const Vec2& p2, int width, int height, int row_begin,
                     int row_end, Fn&& fn) {
  std::array<Vec2, 3> v{p0, p1, p2};
  std::array<int, 3> order{0, 1, 2};
  // Evaluated with the endpoints in a fixed order so that edge(a, b) is
  // exactly -edge(b, a).
  auto edge = [](const Vec2& a, const Vec2& b, double px, double py) {
    const bool flip = b.x() < a.x() || (b.x() == a.x() && b.y() < a.y());
    const Vec2& s = flip ? b : a;
    const Vec2& t = flip ? a : b;
    const double e = (t.x() - s.x()) * (py - s.y()) - (t.y() - s.y()) * (px - s.x());
    return flip ? -e : e;
  };
  double area = edge(v[0], v[1], v[2].x(), v[2].y());
  if (!(std::abs(area) > 1e-12)) return false;
  if (area < 0.0) {
    std::swap(v[1], v[2]);
    std::swap(order[1], order[2]);
    area = -area;
  }
  // Points exactly on an edge are kept only for "top-left" edge directions.
  auto owns_edge = [](const Vec2& a, const Vec2& b) {
    const Vec2 d = b - a;
    return d.y() < 0.0 || (d.y() == 0.0 && d.x() > 0.0);
  };
  const std::array<bool, 3> own{owns_edge(v[1], v[2]), owns_edge(v[2], v[0]), owns_edge(v[0], v[1])};

  const double min_x = std::min({v[0].x(), v[1].x(), v[2].x()});
  const double max_x = std::max({v[0].x(), v[1].x(), v[2].x()});
  const double min_y = std::min({v[0].y(), v[1].y(), v[2].y()});
  const double max_y = std::max({v[0].y(), v[1].y(), v[2].y()});
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
  const int y0 = std::max(row_begin, static_cast<int>(std::floor(min_y - 0.5)));
  const int y1 = std::min(row_end - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  (void)height;
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5;
      const std::array<double, 3> e{edge(v[1], v[2], px, py), edge(v[2], v[0], px, py), edge(v[0], v[1], px, py)};
      bool inside = true;
      for (int k = 0; k < 3 && inside; ++k) inside = e[k] > 0.0 || (e[k] == 0.0 && own[k]);
      if (!inside) continue;
      std::array<double, 3> l{};
      for (int k = 0; k < 3; ++k) l[order[k]] = e[k] / area;
      fn(x, y, l[0], l[1], l[2]);
    }
  }
  return true;
}

inline double bbox_diagonal(const Eigen::AlignedBox3d& box) { return box.isEmpty() ? 0.0 : box.diagonal().norm(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// View-space rasterization
// ---------------------------------------------------------------------------
inline ViewGBuffer rasterize_view(const TriangleMesh& mesh, const Camera& camera) {
  const int W = camera.width;
  const int H = camera.height;
  ViewGBuffer g;
  g.width = W;
  g.height = H;
  g.normal = ImageBuffer(W, H, 3);
  g.position = ImageBuffer(W, H, 3);
  g.depth = ImageBuffer(W, H, 1);
  g.coverage = ImageBuffer(W, H, 1);
  g.barycentric = ImageBuffer(W, H, 3);
  g.triangle_id.assign(static_cast<std::size_t>(W) * H, -1);
  g.bounds = mesh.bounds();

  const double near_z = 1e-9 * std::max(1.0, detail::bbox_diagonal(g.bounds));
  struct Projected {
    std::array<Vec2, 3> screen;
    std::array<double, 3> inv_z;
    bool valid = false;
  };
  std::vector<Projected> proj(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    auto& p = proj[t];
    p.valid = true;
    for (int k = 0; k < 3; ++k) {
      const Vec3 pc = camera.to_camera(mesh.corner_position(mesh.triangles[t], k));
      // Triangles crossing the camera plane are dropped; callers keep the
      // object in front of the camera.
      if (pc.z() <= near_z) {
        p.valid = false;
        break;
      }
      p.screen[k] = camera.project_camera(pc);
      p.inv_z[k] = 1.0 / pc.z();
    }
  }

  std::vector<double> zbuf(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());
  parallel_for_chunks(H, [&](int row_begin, int row_end) {
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const auto& p = proj[t];
      if (!p.valid) continue;
      detail::raster_triangle(p.screen[0], p.screen[1], p.screen[2], W, H, row_begin, row_end,
                              [&](int x, int y, double l0, double l1, double l2) {
                                const double w0 = l0 * p.inv_z[0];
                                const double w1 = l1 * p.inv_z[1];
                                const double w2 = l2 * p.inv_z[2];
                                const double sum = w0 + w1 + w2;
                                const double z = 1.0 / sum;
                                const std::size_t idx = static_cast<std::size_t>(y) * W + x;
                                if (!(z < zbuf[idx])) return;
                                zbuf[idx] = z;
                                g.triangle_id[idx] = static_cast<std::int32_t>(t);
                                g.barycentric.at(x, y, 0) = w0 / sum;
                                g.barycentric.at(x, y, 1) = w1 / sum;
                                g.barycentric.at(x, y, 2) = w2 / sum;
                              });
    }
  });

  // Resolve attributes once per pixel from the winning triangle.
  const Vec3 bmin = g.bounds.min();
  Vec3 bsize = g.bounds.sizes();
  for (int k = 0; k < 3; ++k) {
    if (!(bsize[k] > 0.0)) bsize[k] = 1.0;
  }
  parallel_for_chunks(H, [&](int row_begin, int row_end) {
    for (int y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * W + x;
        const auto t = g.triangle_id[idx];
        if (t < 0) continue;
        const auto& tri = mesh.triangles[t];
        const double b[3] = {g.barycentric.at(x, y, 0), g.barycentric.at(x, y, 1), g.barycentric.at(x, y, 2)};
        Vec3 pos = Vec3::Zero();
        Vec3 nrm = Vec3::Zero();
        for (int k = 0; k < 3; ++k) {
          pos += b[k] * mesh.corner_position(tri, k);
          nrm += b[k] * mesh.corner_normal(tri, k);
        }
        nrm.normalize();
        const Vec3 pn = (pos - bmin).cwiseQuotient(bsize);
        for (int c = 0; c < 3; ++c) {
          g.normal.at(x, y, c) = nrm[c];
          g.position.at(x, y, c) = pn[c];
        }
        g.depth.at(x, y, 0) = zbuf[idx];
        g.coverage.at(x, y, 0) = 1.0;
      }
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// UV-space rasterization
// ---------------------------------------------------------------------------
inline UVGBuffer rasterize_uv(const TriangleMesh& mesh, int resolution) {
  if (resolution < 1) throw ValidationError("rasterize_uv: resolution must be >= 1");
  const int R = resolution;
  UVGBuffer g;
  g.resolution = R;
  g.position = ImageBuffer(R, R, 3);
  g.normal = ImageBuffer(R, R, 3);
  g.occupancy = ImageBuffer(R, R, 1);
  g.triangle_id.assign(static_cast<std::size_t>(R) * R, -1);

  // Triangle loop order is fixed: later triangles overwrite earlier ones.
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 a = uv_to_texel_coords(mesh.corner_uv(tri, 0), R);
    const Vec2 b = uv_to_texel_coords(mesh.corner_uv(tri, 1), R);
    const Vec2 c = uv_to_texel_coords(mesh.corner_uv(tri, 2), R);
    const bool ok = detail::raster_triangle(a, b, c, R, R, 0, R, [&](int x, int y, double l0, double l1, double l2) {
      const std::size_t idx = static_cast<std::size_t>(y) * R + x;
      if (g.triangle_id[idx] >= 0 && g.triangle_id[idx] != static_cast<std::int32_t>(t)) ++g.overlap_texels;
      g.triangle_id[idx] = static_cast<std::int32_t>(t);
      const Vec3 pos = l0 * mesh.corner_position(tri, 0) + l1 * mesh.corner_position(tri, 1) +
                       l2 * mesh.corner_position(tri, 2);
      const Vec3 nrm =
          (l0 * mesh.corner_normal(tri, 0) + l1 * mesh.corner_normal(tri, 1) + l2 * mesh.corner_normal(tri, 2))
              .normalized();
      for (int k = 0; k < 3; ++k) {
        g.position.at(x, y, k) = pos[k];
        g.normal.at(x, y, k) = nrm[k];
      }
      g.occupancy.at(x, y, 0) = 1.0;
    });
    if (!ok) ++g.degenerate_triangles;
  }
  for (std::size_t i = 0; i < g.triangle_id.size(); ++i) {
    if (g.triangle_id[i] >= 0) g.occupied.push_back(static_cast<std::uint32_t>(i));
  }
  if (g.degenerate_triangles > 0) {
    spdlog::warn("rasterize_uv: {} triangle(s) have zero UV area and contribute no texels", g.degenerate_triangles);
  }
  if (g.overlap_texels > 0) {
    spdlog::warn("rasterize_uv: {} texel(s) covered by overlapping UV charts; last triangle wins", g.overlap_texels);
  }
  return g;
}

// ---------------------------------------------------------------------------
// View -> UV projection
// ---------------------------------------------------------------------------
struct ProjectionOptions {
  CosineMode cosine_mode = CosineMode::PerTexel;
  // Visibility bias as a fraction of the mesh bounding-box diagonal.
  double epsilon_fraction = 1e-3;
};

// Bilinear weights over covered pixels only, renormalized. Returns false when
// none of the four taps is covered.
inline bool covered_taps(const ViewGBuffer& g, const Vec2& px, BilinearTaps& taps) {
  taps = bilinear_taps(px.x(), px.y(), g.width, g.height);
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (!g.covered(taps.x[k], taps.y[k])) taps.w[k] = 0.0;
    total += taps.w[k];
  }
  if (!(total > 0.0)) return false;
  for (auto& w : taps.w) w /= total;
  return true;
}

// Visibility and cosine of one surface point as seen by `camera`.
struct TexelView {
  double cosine = 0.0;  // S'
  Vec2 pixel = Vec2::Zero();
  BilinearTaps taps;
};

inline std::optional<TexelView> view_texel(const Vec3& p, const Vec3& n, const Camera& camera, const ViewGBuffer& g,
                                           double epsilon, CosineMode mode) {
  const Vec3 pc = camera.to_camera(p);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Vec2 px = camera.project_camera(pc);
  if (!camera.in_image(px)) return std::nullopt;
  TexelView tv;
  if (!covered_taps(g, px, tv.taps)) return std::nullopt;
  double depth = 0.0;
  for (int k = 0; k < 4; ++k) depth += tv.taps.w[k] * g.depth.at(tv.taps.x[k], tv.taps.y[k], 0);
  if (pc.z() > depth + epsilon) return std::nullopt;
  const Vec3 dir = mode == CosineMode::PerTexel ? (camera.center() - p).normalized() : Vec3(-camera.forward());
  tv.cosine = std::max(0.0, n.dot(dir));
  if (!(tv.cosine > 0.0)) return std::nullopt;
  tv.pixel = px;
  return tv;
}

// Texel-driven projection of a view's materials into UV space. Texels that
// are outside the frustum, occluded or back-facing get S' = 0 and T' = 0.
inline BakeContribution project_view_to_uv(const TriangleMesh& mesh, const Camera& camera, const MaterialView& view,
                                           const ViewGBuffer& view_g, const UVGBuffer& uv_g, double lambda,
                                           const ProjectionOptions& opt = {}) {
  if (view.width() != camera.width || view.height() != camera.height || view_g.width != camera.width ||
      view_g.height != camera.height) {
    throw ValidationError("project_view_to_uv: view dimensions do not match the camera");
  }
  const int R = uv_g.resolution;
  ImageBuffer albedo(R, R, 3);
  ImageBuffer rm(R, R, 2);
  ImageBuffer cosine(R, R, 1);
  const double eps = opt.epsilon_fraction * detail::bbox_diagonal(mesh.bounds());
  const auto& occ = uv_g.occupied;
  parallel_for_chunks(static_cast<int>(occ.size()), [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const std::size_t t = occ[i];
      const auto tv = view_texel(uv_g.texel_position(t), uv_g.texel_normal(t), camera, view_g, eps, opt.cosine_mode);
      if (!tv) continue;
      cosine.values()[t] = tv->cosine;
      for (int k = 0; k < 4; ++k) {
        const double w = tv->taps.w[k];
        if (w == 0.0) continue;
        const auto a = view.albedo.pixel(tv->taps.x[k], tv->taps.y[k]);
        const auto r = view.rm.pixel(tv->taps.x[k], tv->taps.y[k]);
        for (int c = 0; c < 3; ++c) albedo.values()[t * 3 + c] += w * a[c];
        for (int c = 0; c < 2; ++c) rm.values()[t * 2 + c] += w * r[c];
      }
    }
  });
  return BakeContribution::make(std::move(albedo), std::move(rm), std::move(cosine), lambda);
}

// S' only, for the subset `texels` (all occupied texels when empty). Used by
// coverage simulation where materials are irrelevant.
inline std::vector<std::pair<std::uint32_t, double>> project_cosines(const TriangleMesh& mesh, const Camera& camera,
                                                                     const ViewGBuffer& view_g, const UVGBuffer& uv_g,
                                                                     std::span<const std::uint32_t> texels,
                                                                     const ProjectionOptions& opt = {}) {
  const double eps = opt.epsilon_fraction * detail::bbox_diagonal(mesh.bounds());
  std::vector<std::pair<std::uint32_t, double>> out;
  for (const auto t : texels) {
    const auto tv = view_texel(uv_g.texel_position(t), uv_g.texel_normal(t), camera, view_g, eps, opt.cosine_mode);
    if (tv) out.emplace_back(t, tv->cosine);
  }
  return out;
}

// ---------------------------------------------------------------------------
// UV -> view prior rendering
// ---------------------------------------------------------------------------
struct ViewPriorBundle {
  Camera camera;
  ImageBuffer albedo_prior;     // 3 channels
  ImageBuffer rm_prior;         // 2 channels
  ImageBuffer generation_mask;  // 1 = to be generated
  ImageBuffer normal;
  ImageBuffer position;
  ImageBuffer depth;
  ImageBuffer coverage;
  std::uint64_t atlas_version = 0;

  std::size_t mask_count() const {
    std::size_t n = 0;
    for (double v : generation_mask.values()) n += v > 0.5;
    return n;
  }
};

// Surface uv of a covered pixel.
inline Vec2 pixel_uv(const TriangleMesh& mesh, const ViewGBuffer& g, int x, int y) {
  const auto& tri = mesh.triangles[g.triangle(x, y)];
  Vec2 uv = Vec2::Zero();
  for (int k = 0; k < 3; ++k) uv += g.barycentric.at(x, y, k) * mesh.corner_uv(tri, k);
  return uv;
}

// Samples a full texture (no coverage notion) at each covered pixel's uv.
inline ImageBuffer sample_texture_in_view(const ImageBuffer& texture, const TriangleMesh& mesh, const ViewGBuffer& g) {
  ImageBuffer out(g.width, g.height, texture.channels());
  const int R = texture.width();
  parallel_for_chunks(g.height, [&](int row_begin, int row_end) {
    for (int y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < g.width; ++x) {
        if (!g.covered(x, y)) continue;
        const Vec2 tc = uv_to_texel_coords(pixel_uv(mesh, g, x, y), R);
        sample_bilinear(texture, tc.x(), tc.y(), out.pixel(x, y));
      }
    }
  });
  return out;
}

inline ViewPriorBundle render_material_priors(const UVMaterialAtlas& atlas, const TriangleMesh& mesh,
                                              const Camera& camera, const ViewGBuffer& g, double tau) {
  if (g.width != camera.width || g.height != camera.height) {
    throw ValidationError("render_material_priors: G-buffer does not match the camera");
  }
  const int W = g.width;
  const int H = g.height;
  const int R = atlas.resolution;
  ViewPriorBundle b;
  b.camera = camera;
  b.albedo_prior = ImageBuffer(W, H, 3);
  b.rm_prior = ImageBuffer(W, H, 2);
  b.generation_mask = ImageBuffer(W, H, 1);
  b.normal = g.normal;
  b.position = g.position;
  b.depth = g.depth;
  b.coverage = g.coverage;
  b.atlas_version = atlas.version;
  parallel_for_chunks(H, [&](int row_begin, int row_end) {
    for (int y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < W; ++x) {
        if (!g.covered(x, y)) continue;
        const Vec2 tc = uv_to_texel_coords(pixel_uv(mesh, g, x, y), R);
        const auto taps = bilinear_taps(tc.x(), tc.y(), R, R);
        double w_interp = 0.0;
        double known = 0.0;
        double a[3] = {0, 0, 0};
        double r[2] = {0, 0};
        for (int k = 0; k < 4; ++k) {
          const double w = atlas.weights.at(taps.x[k], taps.y[k], 0);
          w_interp += taps.w[k] * w;
          if (!(w > 0.0) || taps.w[k] == 0.0) continue;
          known += taps.w[k];
          for (int c = 0; c < 3; ++c) a[c] += taps.w[k] * atlas.albedo.at(taps.x[k], taps.y[k], c);
          for (int c = 0; c < 2; ++c) r[c] += taps.w[k] * atlas.rm.at(taps.x[k], taps.y[k], c);
        }
        if (known > 0.0) {
          for (int c = 0; c < 3; ++c) b.albedo_prior.at(x, y, c) = a[c] / known;
          for (int c = 0; c < 2; ++c) b.rm_prior.at(x, y, c) = r[c] / known;
        }
        b.generation_mask.at(x, y, 0) = w_interp < tau ? 1.0 : 0.0;
      }
    }
  });
  return b;
}

// ---------------------------------------------------------------------------
// Adaptive intrinsic rescaling
// ---------------------------------------------------------------------------
// Scales fx, fy by a common factor and recentres cx, cy so the projected
// vertex bounding box spans `target_fill` of the smaller image side, without
// letting the box exceed the image.
inline Camera rescale_intrinsics(const TriangleMesh& mesh, const Camera& camera, double target_fill) {
  if (mesh.positions.empty()) throw ValidationError("rescale_intrinsics: mesh is empty");
  if (!(target_fill > 0.0 && target_fill <= 1.0)) throw ValidationError("rescale_intrinsics: target_fill must be in (0, 1]");
  double a_min = std::numeric_limits<double>::infinity();
  double a_max = -a_min;
  double b_min = a_min;
  double b_max = -a_min;
  for (const auto& p : mesh.positions) {
    const Vec3 pc = camera.to_camera(p);
    if (!(pc.z() > 0.0)) throw ValidationError("object not in front of camera");
    a_min = std::min(a_min, pc.x() / pc.z());
    a_max = std::max(a_max, pc.x() / pc.z());
    b_min = std::min(b_min, pc.y() / pc.z());
    b_max = std::max(b_max, pc.y() / pc.z());
  }
  const double bw = camera.fx * (a_max - a_min);
  const double bh = camera.fy * (b_max - b_min);
  if (!(std::max(bw, bh) > 0.0)) throw ValidationError("rescale_intrinsics: object projects to a point");
  double scale = target_fill * std::min(camera.width, camera.height) / std::max(bw, bh);
  if (bw > 0.0) scale = std::min(scale, camera.width / bw);
  if (bh > 0.0) scale = std::min(scale, camera.height / bh);
  Camera out = camera;
  out.fx = camera.fx * scale;
  out.fy = camera.fy * scale;
  out.cx = camera.width / 2.0 - out.fx * 0.5 * (a_min + a_max);
  out.cy = camera.height / 2.0 - out.fy * 0.5 * (b_min + b_max);
  return out;
}

}  // namespace matmart
