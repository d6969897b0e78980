#pragma once

// Synthetic, fully procedural fixtures: UV-unwrapped meshes, ground-truth
// material textures, cameras and rendered input images.

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "matmart/core_types.hpp"
#include "matmart/image_io.hpp"
#include "matmart/mesh_io.hpp"
#include "matmart/rasterization.hpp"

namespace matmart {

enum class SceneShape { Cube, Sphere };
enum class ScenePattern { Checker, Gradient };

// Unit cube centred at `center`. Faces are laid out on a 3 x 2 grid of UV
// cells with a margin so no two charts share a texel.
inline TriangleMesh make_cube_mesh(const Vec3& center = Vec3::Zero(), double size = 1.0) {
  struct Face {
    Vec3 n, t;
  };
  const std::array<Face, 6> faces{{{Vec3::UnitX(), -Vec3::UnitZ()},
                                   {-Vec3::UnitX(), Vec3::UnitZ()},
                                   {Vec3::UnitY(), Vec3::UnitX()},
                                   {-Vec3::UnitY(), Vec3::UnitX()},
                                   {Vec3::UnitZ(), Vec3::UnitX()},
                                   {-Vec3::UnitZ(), -Vec3::UnitX()}}};
  TriangleMesh mesh;
  std::map<std::tuple<long, long, long>, std::uint32_t> pos_index;
  auto add_pos = [&](const Vec3& p) {
    const auto key = std::make_tuple(std::lround(p.x() * 1e6), std::lround(p.y() * 1e6), std::lround(p.z() * 1e6));
    auto it = pos_index.find(key);
    if (it != pos_index.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(mesh.positions.size());
    mesh.positions.push_back(center + size * p);
    pos_index.emplace(key, idx);
    return idx;
  };
  const double cell_w = 1.0 / 3.0;
  const double cell_h = 0.5;
  const double margin = 0.02;
  const double side = cell_w - 2 * margin;
  for (int f = 0; f < 6; ++f) {
    const Vec3 n = faces[f].n;
    const Vec3 t = faces[f].t;
    const Vec3 b = n.cross(t);
    const auto ni = static_cast<std::uint32_t>(mesh.normals.size());
    mesh.normals.push_back(n);
    const double u0 = (f % 3) * cell_w + margin;
    const double v0 = (f / 3) * cell_h + (cell_h - side) / 2;
    std::array<std::uint32_t, 4> p{};
    std::array<std::uint32_t, 4> uv{};
    const int corner[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    for (int k = 0; k < 4; ++k) {
      const double i = corner[k][0];
      const double j = corner[k][1];
      p[k] = add_pos(0.5 * n + (i - 0.5) * t + (j - 0.5) * b);
      uv[k] = static_cast<std::uint32_t>(mesh.uvs.size());
      mesh.uvs.emplace_back(u0 + i * side, v0 + j * side);
    }
    mesh.triangles.push_back({{p[0], p[1], p[2]}, {ni, ni, ni}, {uv[0], uv[1], uv[2]}});
    mesh.triangles.push_back({{p[0], p[2], p[3]}, {ni, ni, ni}, {uv[0], uv[2], uv[3]}});
  }
  return mesh;
}

// Latitude/longitude sphere with an equirectangular unwrap (u = longitude,
// v = latitude) and smooth vertex normals.
inline TriangleMesh make_sphere_mesh(int segments = 64, int rings = 32, double radius = 0.5,
                                     const Vec3& center = Vec3::Zero()) {
  TriangleMesh mesh;
  auto dir = [](double theta, double phi) {
    return Vec3(std::cos(phi) * std::cos(theta), std::sin(phi), -std::cos(phi) * std::sin(theta));
  };
  // Positions: south pole, interior rings, north pole. The seam column shares
  // positions with column 0.
  mesh.positions.push_back(center + radius * Vec3(0, -1, 0));
  mesh.normals.emplace_back(0, -1, 0);
  for (int j = 1; j < rings; ++j) {
    const double phi = -std::numbers::pi / 2 + std::numbers::pi * j / rings;
    for (int i = 0; i < segments; ++i) {
      const Vec3 d = dir(2 * std::numbers::pi * i / segments, phi);
      mesh.positions.push_back(center + radius * d);
      mesh.normals.push_back(d);
    }
  }
  mesh.positions.push_back(center + radius * Vec3(0, 1, 0));
  mesh.normals.emplace_back(0, 1, 0);
  const auto north = static_cast<std::uint32_t>(mesh.positions.size() - 1);
  auto vid = [&](int i, int j) -> std::uint32_t {
    if (j == 0) return 0;
    if (j == rings) return north;
    return static_cast<std::uint32_t>(1 + (j - 1) * segments + (i % segments));
  };
  // UVs: interior grid (segments + 1 columns), plus one pole uv per column.
  auto uv_grid = [&](int i, int j) { return static_cast<std::uint32_t>(i * (rings + 1) + j); };
  for (int i = 0; i <= segments; ++i) {
    for (int j = 0; j <= rings; ++j) {
      double u = static_cast<double>(i) / segments;
      if (j == 0 || j == rings) u = (std::min(i, segments - 1) + 0.5) / segments;
      mesh.uvs.emplace_back(u, static_cast<double>(j) / rings);
    }
  }
  for (int j = 0; j < rings; ++j) {
    for (int i = 0; i < segments; ++i) {
      const std::uint32_t a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      const std::uint32_t ta = uv_grid(i, j), tb = uv_grid(i + 1, j), tc = uv_grid(i + 1, j + 1), td = uv_grid(i, j + 1);
      if (j == 0) {
        mesh.triangles.push_back({{a, c, d}, {a, c, d}, {ta, tc, td}});
      } else if (j == rings - 1) {
        mesh.triangles.push_back({{a, b, d}, {a, b, d}, {ta, tb, td}});
      } else {
        mesh.triangles.push_back({{a, b, c}, {a, b, c}, {ta, tb, tc}});
        mesh.triangles.push_back({{a, c, d}, {a, c, d}, {ta, tc, td}});
      }
    }
  }
  return mesh;
}

struct TextureOptions {
  ScenePattern pattern = ScenePattern::Checker;
  int checker = 8;
  int resolution = 512;
  std::uint64_t seed = 0;
  SceneShape shape = SceneShape::Cube;
};

// Ground-truth albedo (3 ch) and rm (2 ch) textures. Values stay inside
// [0.1, 0.9] so per-view biases of up to 0.1 never clip.
inline std::pair<ImageBuffer, ImageBuffer> make_ground_truth_textures(const TextureOptions& opt) {
  const int R = opt.resolution;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> dist(0.15, 0.85);
  const std::array<double, 3> c0{dist(rng), dist(rng), dist(rng)};
  std::array<double, 3> c1{};
  for (int c = 0; c < 3; ++c) c1[c] = 1.0 - c0[c];
  const std::array<double, 6> cell_metallic{0.1, 0.9, 0.3, 0.7, 0.5, 0.2};
  ImageBuffer albedo(R, R, 3);
  ImageBuffer rm(R, R, 2);
  for (int j = 0; j < R; ++j) {
    for (int i = 0; i < R; ++i) {
      const Vec2 uv = texel_center_uv(i, j, R);
      const double u = uv.x();
      const double v = uv.y();
      if (opt.pattern == ScenePattern::Checker) {
        const int cu = static_cast<int>(std::floor(u * opt.checker));
        const int cv = static_cast<int>(std::floor(v * opt.checker));
        const auto& col = ((cu + cv) % 2 == 0) ? c0 : c1;
        for (int c = 0; c < 3; ++c) albedo.at(i, j, c) = col[c];
      } else {
        albedo.at(i, j, 0) = 0.15 + 0.7 * u;
        albedo.at(i, j, 1) = 0.15 + 0.7 * v;
        albedo.at(i, j, 2) = 0.15 + 0.35 * (u + v);
      }
      rm.at(i, j, 0) = 0.2 + 0.6 * u;
      if (opt.shape == SceneShape::Cube) {
        const int cell = std::min(2, static_cast<int>(u * 3)) + 3 * std::min(1, static_cast<int>(v * 2));
        rm.at(i, j, 1) = cell_metallic[cell];
      } else {
        rm.at(i, j, 1) = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * u) * std::cos(std::numbers::pi * (v - 0.5));
      }
    }
  }
  return {albedo, rm};
}

// Camera on a sphere around the mesh at (azimuth, elevation) in degrees,
// looking at the centroid, rescaled to fill `target_fill` of the frame.
inline Camera orbit_camera(const TriangleMesh& mesh, double azimuth_deg, double elevation_deg, int resolution,
                           double distance_factor = 2.5, double target_fill = 0.9) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 d(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  const Vec3 c = mesh.centroid();
  const Vec3 up = std::abs(d.y()) > 0.999 ? Vec3::UnitZ() : Vec3::UnitY();
  const Camera cam = look_at(c + distance_factor * mesh.bounding_radius() * d, c, up, resolution, resolution, resolution);
  return rescale_intrinsics(mesh, cam, target_fill);
}

struct SceneOptions {
  SceneShape shape = SceneShape::Cube;
  TextureOptions texture;
  int view_resolution = 512;
  int views = 3;
  bool lambertian = false;
};

struct SyntheticScene {
  TriangleMesh mesh;
  ImageBuffer gt_albedo;
  ImageBuffer gt_rm;
  std::vector<NamedCamera> cameras;
  std::vector<ImageBuffer> images;  // RGB inputs, one per camera
};

// Unlit input: the albedo texture sampled at each covered pixel. With
// `lambertian`, scaled by 0.3 + 0.7 * max(0, n . l) for a headlight l.
inline ImageBuffer render_input_image(const TriangleMesh& mesh, const ImageBuffer& albedo, const Camera& cam,
                                      bool lambertian) {
  const auto g = rasterize_view(mesh, cam);
  ImageBuffer img = sample_texture_in_view(albedo, mesh, g);
  if (lambertian) {
    const Vec3 l = -cam.forward();
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (!g.covered(x, y)) continue;
        const Vec3 n(g.normal.at(x, y, 0), g.normal.at(x, y, 1), g.normal.at(x, y, 2));
        const double shade = 0.3 + 0.7 * std::max(0.0, n.dot(l));
        for (int c = 0; c < 3; ++c) img.at(x, y, c) *= shade;
      }
    }
  }
  return img;
}

inline SyntheticScene make_scene(SceneOptions opt) {
  opt.texture.shape = opt.shape;
  SyntheticScene s;
  s.mesh = opt.shape == SceneShape::Cube ? make_cube_mesh() : make_sphere_mesh();
  std::tie(s.gt_albedo, s.gt_rm) = make_ground_truth_textures(opt.texture);
  for (int k = 0; k < opt.views; ++k) {
    // Spread azimuths, alternate elevations; offsets avoid axis-aligned views.
    const double az = 30.0 + 360.0 * k / std::max(1, opt.views);
    const double el = k % 2 == 0 ? 25.0 : -20.0;
    const Camera cam = orbit_camera(s.mesh, az, el, opt.view_resolution);
    s.cameras.push_back({"view_" + std::to_string(k), cam});
    s.images.push_back(render_input_image(s.mesh, s.gt_albedo, cam, opt.lambertian));
  }
  return s;
}

inline void save_scene(const SyntheticScene& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_mesh(s.mesh, dir / "mesh.obj");
  save_png(dir / "gt_albedo.png", s.gt_albedo, 8);
  save_png(dir / "gt_rm.png", s.gt_rm, 8);
  save_cameras(s.cameras, dir / "cameras.json");
  nlohmann::json manifest;
  manifest["mesh"] = "mesh.obj";
  manifest["gt_albedo"] = "gt_albedo.png";
  manifest["gt_rm"] = "gt_rm.png";
  manifest["cameras"] = "cameras.json";
  manifest["images"] = nlohmann::json::array();
  for (std::size_t k = 0; k < s.images.size(); ++k) {
    const std::string name = s.cameras[k].name + ".png";
    save_png(dir / name, s.images[k], 8);
    manifest["images"].push_back(name);
  }
  write_text_file(dir / "scene.json", manifest.dump(2));
}

}  // namespace matmart
