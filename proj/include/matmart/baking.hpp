#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "matmart/core_types.hpp"
#include "matmart/gbuffer.hpp"
#include "matmart/parallel.hpp"

namespace matmart {

// One view's projection into UV space: sampled materials T', the per-texel
// cosine S' and the blend weight W' = S'^lambda.
struct BakeContribution {
  ImageBuffer albedo;  // 3 channels
  ImageBuffer rm;      // 2 channels
  ImageBuffer cosine;  // S' in [0,1]
  ImageBuffer weight;  // W'

  int resolution() const { return cosine.width(); }

  static BakeContribution make(ImageBuffer albedo, ImageBuffer rm, ImageBuffer cosine, double lambda) {
    if (!(lambda > 0.0)) throw ValidationError("bake contribution: lambda must be > 0");
    if (!albedo.same_extent(rm) || !albedo.same_extent(cosine) || albedo.width() != albedo.height() ||
        albedo.channels() != 3 || rm.channels() != 2 || cosine.channels() != 1) {
      throw ValidationError("bake contribution: grid shapes are inconsistent");
    }
    ImageBuffer weight(cosine.width(), cosine.height(), 1);
    for (std::size_t i = 0; i < cosine.pixel_count(); ++i) {
      const double s = cosine.values()[i];
      weight.values()[i] = s > 0.0 ? std::pow(s, lambda) : 0.0;
    }
    return {std::move(albedo), std::move(rm), std::move(cosine), std::move(weight)};
  }
};

// Progressive weighted blend:
//   T <- (T' W' + T W) / (W' + W),   W <- W' + W
// applied to albedo and rm with the shared weight grid. Texels with W' = 0
// are left bit-for-bit untouched.
inline void blend(UVMaterialAtlas& atlas, const BakeContribution& contribution) {
  if (contribution.resolution() != atlas.resolution || contribution.cosine.height() != atlas.resolution) {
    throw ValidationError("blend: contribution resolution " + std::to_string(contribution.resolution()) +
                          " does not match atlas resolution " + std::to_string(atlas.resolution));
  }
  const int res = atlas.resolution;
  auto& T_a = atlas.albedo.values();
  auto& T_rm = atlas.rm.values();
  auto& W = atlas.weights.values();
  const auto& Tp_a = contribution.albedo.values();
  const auto& Tp_rm = contribution.rm.values();
  const auto& Wp = contribution.weight.values();
  parallel_for_chunks(res, [&](int row_begin, int row_end) {
    for (std::size_t i = static_cast<std::size_t>(row_begin) * res; i < static_cast<std::size_t>(row_end) * res; ++i) {
      const double wp = Wp[i];
      if (!(wp > 0.0)) continue;
      const double w = W[i];
      const double sum = wp + w;
      for (int c = 0; c < 3; ++c) T_a[i * 3 + c] = (Tp_a[i * 3 + c] * wp + T_a[i * 3 + c] * w) / sum;
      for (int c = 0; c < 2; ++c) T_rm[i * 2 + c] = (Tp_rm[i * 2 + c] * wp + T_rm[i * 2 + c] * w) / sum;
      W[i] = sum;
    }
  });
  ++atlas.version;
}

// Fraction of occupied texels whose weight reaches tau; 1 for an empty chart.
inline double texel_coverage(const ImageBuffer& weights, const UVGBuffer& uv, double tau) {
  if (uv.occupied.empty()) return 1.0;
  std::size_t covered = 0;
  for (auto t : uv.occupied) covered += weights.values()[t] >= tau;
  return static_cast<double>(covered) / static_cast<double>(uv.occupied.size());
}

inline double texel_coverage(const UVMaterialAtlas& atlas, const UVGBuffer& uv, double tau) {
  if (uv.resolution != atlas.resolution) throw ValidationError("texel_coverage: resolution mismatch");
  return texel_coverage(atlas.weights, uv, tau);
}

// Binary mask of occupied texels with weight >= tau.
inline ImageBuffer covered_texel_mask(const UVMaterialAtlas& atlas, const UVGBuffer& uv, double tau) {
  ImageBuffer mask(atlas.resolution, atlas.resolution, 1);
  for (auto t : uv.occupied) mask.values()[t] = atlas.weights.values()[t] >= tau ? 1.0 : 0.0;
  return mask;
}

// Fills texels with zero weight that lie within `radius` (Euclidean) of a
// weighted texel with the value of the nearest one; ties go to the first in
// row-major order. Weights are not modified.
inline UVMaterialAtlas dilate_atlas(const UVMaterialAtlas& atlas, int radius) {
  if (radius < 0) throw ValidationError("dilate_atlas: radius must be >= 0");
  UVMaterialAtlas out = atlas;
  if (radius == 0) return out;
  const int res = atlas.resolution;
  const auto& W = atlas.weights.values();
  const long r2 = static_cast<long>(radius) * radius;
  parallel_for_chunks(res, [&](int row_begin, int row_end) {
    for (int y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < res; ++x) {
        if (W[static_cast<std::size_t>(y) * res + x] > 0.0) continue;
        long best = std::numeric_limits<long>::max();
        int bx = -1;
        int by = -1;
        for (int dy = -radius; dy <= radius; ++dy) {
          const int sy = y + dy;
          if (sy < 0 || sy >= res) continue;
          for (int dx = -radius; dx <= radius; ++dx) {
            const int sx = x + dx;
            if (sx < 0 || sx >= res) continue;
            const long d2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
            if (d2 > r2 || d2 >= best) continue;
            if (W[static_cast<std::size_t>(sy) * res + sx] > 0.0) {
              best = d2;
              bx = sx;
              by = sy;
            }
          }
        }
        if (bx < 0) continue;
        for (int c = 0; c < 3; ++c) out.albedo.at(x, y, c) = atlas.albedo.at(bx, by, c);
        for (int c = 0; c < 2; ++c) out.rm.at(x, y, c) = atlas.rm.at(bx, by, c);
      }
    }
  });
  return out;
}

}  // namespace matmart
