#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "matmart/baking.hpp"
#include "matmart/core_types.hpp"
#include "matmart/rasterization.hpp"

namespace matmart {

// Distance of generated cameras from the centroid, in bounding-sphere radii.
inline constexpr double kViewDistanceFactor = 2.5;

struct ViewCandidate {
  Camera camera;
  double gain = 0.0;  // newly covered texels
};

namespace detail {

inline Camera centered_view(const TriangleMesh& mesh, const Vec3& direction, const Vec3& up, int resolution,
                            double target_fill) {
  const Vec3 c = mesh.centroid();
  const Vec3 eye = c + kViewDistanceFactor * mesh.bounding_radius() * direction.normalized();
  const Camera cam = look_at(eye, c, up, resolution, resolution, resolution);
  return rescale_intrinsics(mesh, cam, target_fill);
}

inline void require_extent(const TriangleMesh& mesh) {
  if (mesh.positions.empty() || !(mesh.bounding_radius() > 0.0)) {
    throw ValidationError("view selection: degenerate mesh (zero extent)");
  }
}

}  // namespace detail

// Six views along +X, -X, +Y, -Y, +Z, -Z. The +-Y views use +Z as up.
inline std::vector<Camera> base_axis_views(const TriangleMesh& mesh, int view_resolution, double target_fill = 0.9) {
  detail::require_extent(mesh);
  const std::array<Vec3, 6> axes{Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                                 -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
  std::vector<Camera> out;
  for (const auto& a : axes) {
    const Vec3 up = std::abs(a.y()) > 0.5 ? Vec3::UnitZ() : Vec3::UnitY();
    out.push_back(detail::centered_view(mesh, a, up, view_resolution, target_fill));
  }
  return out;
}

// Fibonacci-spiral directions about the +Y axis; the seed only rotates the
// spiral about that axis.
inline std::vector<Vec3> fibonacci_directions(int count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample_sphere_candidates: count must be >= 1");
  std::mt19937_64 rng(seed);
  const double offset = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs;
  dirs.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double theta = offset + golden * i;
    dirs.emplace_back(r * std::cos(theta), y, r * std::sin(theta));
  }
  return dirs;
}

inline std::vector<Camera> sample_sphere_candidates(int count, const TriangleMesh& mesh, std::uint64_t seed,
                                                    int view_resolution, double target_fill = 0.9) {
  detail::require_extent(mesh);
  std::vector<Camera> out;
  for (const auto& d : fibonacci_directions(count, seed)) {
    const Vec3 up = std::abs(d.y()) > 0.999 ? Vec3::UnitZ() : Vec3::UnitY();
    out.push_back(detail::centered_view(mesh, d, up, view_resolution, target_fill));
  }
  return out;
}

struct SelectionParams {
  double rho = 0.95;
  int max_views = 10;
  double tau = 1e-3;
  double lambda = 6.0;
  double min_cosine = 0.0;     // S' must exceed this for a texel to count
  double sim_scale = 0.5;      // candidate rasterization at this image scale
  CosineMode cosine_mode = CosineMode::PerTexel;
};

struct SelectedView {
  std::size_t candidate_index = 0;
  Camera camera;
  std::size_t gain = 0;
  double coverage_after = 0.0;
};

struct SelectionResult {
  double initial_coverage = 0.0;
  std::vector<SelectedView> views;
};

// Simulated weights W' = S'^lambda of one camera over `texels`.
inline std::vector<std::pair<std::uint32_t, double>> simulate_view_weights(const TriangleMesh& mesh,
                                                                           const Camera& camera, const UVGBuffer& uv_g,
                                                                           std::span<const std::uint32_t> texels,
                                                                           const SelectionParams& p) {
  const Camera sim = camera.scaled(p.sim_scale);
  const auto g = rasterize_view(mesh, sim);
  auto list = project_cosines(mesh, sim, g, uv_g, texels, {p.cosine_mode});
  std::erase_if(list, [&](const auto& e) { return !(e.second > p.min_cosine); });
  for (auto& e : list) e.second = std::pow(e.second, p.lambda);
  return list;
}

// Greedy coverage maximization. A texel counts toward a candidate's gain when
// it is currently below tau and the candidate's simulated weight lifts it to
// tau or above, so every accepted pick raises coverage by exactly its gain.
// `weights` is the current (possibly simulated) weight grid; it is copied.
inline SelectionResult greedy_select(const TriangleMesh& mesh, const ImageBuffer& weights, const UVGBuffer& uv_g,
                                     std::span<const Camera> candidates, const SelectionParams& p) {
  SelectionResult result;
  std::vector<double> W = weights.values();
  const std::size_t occupied = uv_g.occupied.size();
  std::size_t covered = 0;
  std::vector<std::uint32_t> open;
  for (auto t : uv_g.occupied) {
    if (W[t] >= p.tau) {
      ++covered;
    } else {
      open.push_back(t);
    }
  }
  auto coverage = [&] { return occupied == 0 ? 1.0 : static_cast<double>(covered) / occupied; };
  result.initial_coverage = coverage();
  if (coverage() >= p.rho || p.max_views == 0 || candidates.empty()) return result;

  std::vector<std::vector<std::pair<std::uint32_t, double>>> lists(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    lists[c] = simulate_view_weights(mesh, candidates[c], uv_g, open, p);
  }
  std::vector<bool> used(candidates.size(), false);

  while (static_cast<int>(result.views.size()) < p.max_views && coverage() < p.rho) {
    std::size_t best = 0;
    std::size_t best_gain = 0;
    bool found = false;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (used[c]) continue;
      std::size_t gain = 0;
      for (const auto& [t, w] : lists[c]) gain += W[t] < p.tau && W[t] + w >= p.tau;
      if (!found || gain > best_gain) {
        best = c;
        best_gain = gain;
        found = true;
      }
    }
    if (!found || best_gain == 0) break;
    for (const auto& [t, w] : lists[best]) {
      if (W[t] < p.tau && W[t] + w >= p.tau) ++covered;
      W[t] += w;
    }
    used[best] = true;
    result.views.push_back({best, candidates[best], best_gain, coverage()});
  }
  return result;
}

// Stable ascending order of mask pixel counts.
inline std::vector<std::size_t> mask_order(std::span<const std::size_t> counts) {
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });
  return order;
}

inline std::size_t mask_pixel_count(const ImageBuffer& mask) {
  std::size_t n = 0;
  for (double v : mask.values()) n += v > 0.5;
  return n;
}

template <typename View>
std::vector<View> sort_views_by_mask(const std::vector<View>& views, std::span<const ImageBuffer> masks) {
  if (views.size() != masks.size()) throw ValidationError("sort_views_by_mask: one mask per view is required");
  std::vector<std::size_t> counts;
  counts.reserve(masks.size());
  for (const auto& m : masks) counts.push_back(mask_pixel_count(m));
  std::vector<View> out;
  out.reserve(views.size());
  for (auto i : mask_order(counts)) out.push_back(views[i]);
  return out;
}

}  // namespace matmart
