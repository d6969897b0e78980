#pragma once

#include <cstdint>
#include <vector>

#include "matmart/core_types.hpp"

namespace matmart {

// View-space geometry buffers. Every channel is 0 (triangle id -1) where no
// triangle covers the pixel.
struct ViewGBuffer {
  int width = 0;
  int height = 0;
  ImageBuffer normal;       // world space, unit
  ImageBuffer position;     // object space, normalized by `bounds` to [0,1]
  ImageBuffer depth;        // camera-space z
  ImageBuffer coverage;     // 1 where covered
  ImageBuffer barycentric;  // perspective-correct
  std::vector<std::int32_t> triangle_id;
  Eigen::AlignedBox3d bounds;

  bool covered(int x, int y) const { return triangle_id[static_cast<std::size_t>(y) * width + x] >= 0; }
  std::int32_t triangle(int x, int y) const { return triangle_id[static_cast<std::size_t>(y) * width + x]; }

  Vec3 world_position(int x, int y) const {
    const Vec3 n(position.at(x, y, 0), position.at(x, y, 1), position.at(x, y, 2));
    return bounds.min() + n.cwiseProduct(bounds.sizes());
  }

  std::size_t covered_count() const {
    std::size_t n = 0;
    for (auto id : triangle_id) n += id >= 0;
    return n;
  }
};

// UV-space geometry buffers: one texel per atlas texel.
struct UVGBuffer {
  int resolution = 0;
  ImageBuffer position;   // object space
  ImageBuffer normal;     // world space, unit
  ImageBuffer occupancy;  // 1 where a UV triangle covers the texel centre
  std::vector<std::int32_t> triangle_id;
  // Linear texel indices (j * resolution + i) of occupied texels, ascending.
  std::vector<std::uint32_t> occupied;
  std::size_t overlap_texels = 0;
  std::size_t degenerate_triangles = 0;

  bool is_occupied(std::size_t texel) const { return triangle_id[texel] >= 0; }
  Vec3 texel_position(std::size_t texel) const {
    const double* p = position.values().data() + texel * 3;
    return {p[0], p[1], p[2]};
  }
  Vec3 texel_normal(std::size_t texel) const {
    const double* n = normal.values().data() + texel * 3;
    return {n[0], n[1], n[2]};
  }
};

}  // namespace matmart
