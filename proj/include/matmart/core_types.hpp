#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace matmart {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error hierarchy. The CLI maps ValidationError to exit code 1 and every
// other Error to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct PredictorError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// ImageBuffer: interleaved width x height x channels grid of doubles.
// Pixel (x, y) covers [x, x+1) x [y, y+1) in continuous pixel coordinates;
// its centre sits at (x + 0.5, y + 0.5).
// ---------------------------------------------------------------------------
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    check_shape();
    values_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  ImageBuffer(int width, int height, int channels, std::vector<double> values)
      : width_(width), height_(height), channels_(channels), values_(std::move(values)) {
    check_shape();
    if (values_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw ValidationError("image buffer: value count does not match width*height*channels");
    }
  }

  // Material-valued buffers are clamped into [0,1] rather than rejected.
  static ImageBuffer material(int width, int height, int channels, std::vector<double> values) {
    ImageBuffer img(width, height, channels, std::move(values));
    img.clamp01();
    return img;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return values_.empty(); }

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }
  double& at(int x, int y, int c) { return values_[index(x, y) + c]; }
  double at(int x, int y, int c) const { return values_[index(x, y) + c]; }

  std::span<double> pixel(int x, int y) { return {values_.data() + index(x, y), static_cast<std::size_t>(channels_)}; }
  std::span<const double> pixel(int x, int y) const {
    return {values_.data() + index(x, y), static_cast<std::size_t>(channels_)};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const ImageBuffer& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool same_extent(const ImageBuffer& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  void clamp01() {
    for (double& v : values_) v = std::clamp(v, 0.0, 1.0);
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  ImageBuffer channel(int c) const {
    ImageBuffer out(width_, height_, 1);
    for (std::size_t i = 0; i < pixel_count(); ++i) out.values_[i] = values_[i * channels_ + c];
    return out;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  void check_shape() const {
    if (width_ < 1 || height_ < 1) throw ValidationError("image buffer: width and height must be >= 1");
    if (channels_ < 1 || channels_ > 4) throw ValidationError("image buffer: channels must be in 1..4");
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

// Four bilinear taps around a continuous pixel coordinate, with clamp-to-edge
// addressing. Tap weights sum to one.
struct BilinearTaps {
  std::array<int, 4> x{};
  std::array<int, 4> y{};
  std::array<double, 4> w{};
};

inline BilinearTaps bilinear_taps(double px, double py, int width, int height) {
  const double fx = px - 0.5;
  const double fy = py - 0.5;
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double tx = fx - x0f;
  const double ty = fy - y0f;
  const int x0 = static_cast<int>(x0f);
  const int y0 = static_cast<int>(y0f);
  auto cx = [width](int v) { return std::clamp(v, 0, width - 1); };
  auto cy = [height](int v) { return std::clamp(v, 0, height - 1); };
  BilinearTaps t;
  t.x = {cx(x0), cx(x0 + 1), cx(x0), cx(x0 + 1)};
  t.y = {cy(y0), cy(y0), cy(y0 + 1), cy(y0 + 1)};
  t.w = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  return t;
}

// Plain bilinear sample of every channel into `out` (size >= channels).
inline void sample_bilinear(const ImageBuffer& img, double px, double py, std::span<double> out) {
  const auto taps = bilinear_taps(px, py, img.width(), img.height());
  for (int c = 0; c < img.channels(); ++c) out[c] = 0.0;
  for (int k = 0; k < 4; ++k) {
    const auto p = img.pixel(taps.x[k], taps.y[k]);
    for (int c = 0; c < img.channels(); ++c) out[c] += taps.w[k] * p[c];
  }
}

// Texel (i, j) of an R x R grid has its centre at uv = ((i+.5)/R, 1-(j+.5)/R):
// row 0 is the top of the image, v grows upward.
inline Vec2 uv_to_texel_coords(const Vec2& uv, int resolution) {
  return {uv.x() * resolution, (1.0 - uv.y()) * resolution};
}
inline Vec2 texel_center_uv(int i, int j, int resolution) {
  return {(i + 0.5) / resolution, 1.0 - (j + 0.5) / resolution};
}

// ---------------------------------------------------------------------------
// Camera: pinhole model, x_cam = R * x_world + t, camera looks down +z,
// image x to the right and image y downward.
// ---------------------------------------------------------------------------
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec2 project_camera(const Vec3& pc) const { return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy}; }
  Vec3 center() const { return -rotation.transpose() * translation; }
  // World-space viewing direction (camera +z axis).
  Vec3 forward() const { return rotation.row(2).transpose(); }

  bool in_image(const Vec2& px) const { return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height; }

  // Copy with the image plane resampled by `scale` (intrinsics scaled, extrinsics untouched).
  Camera scaled(double scale) const {
    Camera c = *this;
    c.width = std::max(1, static_cast<int>(std::lround(width * scale)));
    c.height = std::max(1, static_cast<int>(std::lround(height * scale)));
    const double sx = static_cast<double>(c.width) / width;
    const double sy = static_cast<double>(c.height) / height;
    c.fx *= sx;
    c.cx *= sx;
    c.fy *= sy;
    c.cy *= sy;
    return c;
  }

  void validate() const {
    const double dev = (rotation * rotation.transpose() - Mat3::Identity()).norm();
    if (!std::isfinite(dev) || dev > 1e-4) throw ValidationError("camera: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-6) throw ValidationError("camera: rotation determinant is not +1");
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("camera: focal lengths must be positive");
    if (width < 1 || height < 1) throw ValidationError("camera: width and height must be >= 1");
    if (!translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
      throw ValidationError("camera: non-finite parameters");
    }
  }
};

// Rotation for a camera at `eye` looking at `target`. `up` must not be
// parallel to the viewing direction.
inline Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Camera cam;
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * eye;
  cam.fx = cam.fy = focal;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

// ---------------------------------------------------------------------------
// TriangleMesh: positions, normals and uvs are indexed independently per
// triangle corner, as in OBJ.
// ---------------------------------------------------------------------------
struct MeshTriangle {
  std::array<std::uint32_t, 3> position{};
  std::array<std::uint32_t, 3> normal{};
  std::array<std::uint32_t, 3> uv{};
  friend bool operator==(const MeshTriangle&, const MeshTriangle&) = default;
};

struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<Vec2> uvs;
  std::vector<MeshTriangle> triangles;

  bool empty() const { return triangles.empty(); }

  Eigen::AlignedBox3d bounds() const {
    Eigen::AlignedBox3d box;
    for (const auto& p : positions) box.extend(p);
    return box;
  }
  Vec3 centroid() const { return bounds().center(); }
  double bounding_radius() const {
    const Vec3 c = centroid();
    double r = 0.0;
    for (const auto& p : positions) r = std::max(r, (p - c).norm());
    return r;
  }

  Vec3 corner_position(const MeshTriangle& t, int k) const { return positions[t.position[k]]; }
  Vec3 corner_normal(const MeshTriangle& t, int k) const { return normals[t.normal[k]]; }
  Vec2 corner_uv(const MeshTriangle& t, int k) const { return uvs[t.uv[k]]; }

  void validate() const {
    for (std::size_t i = 0; i < triangles.size(); ++i) {
      const auto& t = triangles[i];
      for (int k = 0; k < 3; ++k) {
        if (t.position[k] >= positions.size() || t.normal[k] >= normals.size() || t.uv[k] >= uvs.size()) {
          throw ValidationError("mesh: triangle " + std::to_string(i + 1) + " has an index out of range");
        }
      }
    }
    for (const auto& n : normals) {
      if (std::abs(n.norm() - 1.0) > 1e-4) throw ValidationError("mesh: normal is not unit length");
    }
    for (const auto& uv : uvs) {
      if (uv.x() < 0.0 || uv.x() > 1.0 || uv.y() < 0.0 || uv.y() > 1.0) {
        throw ValidationError("mesh: uv outside [0,1]");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Materials
// ---------------------------------------------------------------------------
struct MaterialView {
  ImageBuffer albedo;  // 3 channels
  ImageBuffer rm;      // channel 0 roughness, channel 1 metallic

  static MaterialView make(ImageBuffer albedo, ImageBuffer rm) {
    if (albedo.channels() != 3 || rm.channels() != 2) {
      throw ValidationError("material view: albedo needs 3 channels and rm needs 2");
    }
    if (!albedo.same_extent(rm)) throw ValidationError("material view: albedo and rm dimensions differ");
    albedo.clamp01();
    rm.clamp01();
    return {std::move(albedo), std::move(rm)};
  }

  static MaterialView blank(int width, int height) {
    return {ImageBuffer(width, height, 3), ImageBuffer(width, height, 2)};
  }

  int width() const { return albedo.width(); }
  int height() const { return albedo.height(); }
};

// Accumulating UV-space output. Texels with zero weight hold 0 until the
// export-time dilation pass.
struct UVMaterialAtlas {
  int resolution = 0;
  ImageBuffer albedo;   // 3 channels
  ImageBuffer rm;       // 2 channels
  ImageBuffer weights;  // 1 channel, >= 0
  // Incremented by every blend; lets callers check which bakes a derived
  // buffer has seen.
  std::uint64_t version = 0;

  static UVMaterialAtlas empty(int resolution) {
    if (resolution < 1) throw ValidationError("atlas: resolution must be >= 1");
    UVMaterialAtlas a;
    a.resolution = resolution;
    a.albedo = ImageBuffer(resolution, resolution, 3);
    a.rm = ImageBuffer(resolution, resolution, 2);
    a.weights = ImageBuffer(resolution, resolution, 1);
    return a;
  }

  double max_weight() const {
    double m = 0.0;
    for (double w : weights.values()) m = std::max(m, w);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
enum class CosineMode { PerTexel, ForwardAxis };
enum class ReferencePolicy { First, Previous, None };

struct PipelineConfig {
  int uv_resolution = 1024;
  int view_resolution = 512;
  double rho = 0.95;
  int max_extra_views = 10;
  int candidate_count = 300;
  int group_size = 3;
  double lambda = 6.0;
  double tau = 1e-3;
  std::uint64_t seed = 0;

  double target_fill = 0.9;
  double min_view_cosine = 0.0;  // s_min floor for greedy gain
  double selection_scale = 0.5;  // greedy simulation at view_resolution * scale
  int dilation_radius = 4;       // 0 disables export dilation
  CosineMode cosine_mode = CosineMode::PerTexel;
  ReferencePolicy reference_policy = ReferencePolicy::First;

  void validate() const {
    if (uv_resolution < 1) throw ValidationError("config: uv_resolution must be >= 1");
    if (view_resolution < 2) throw ValidationError("config: view_resolution must be >= 2");
    if (!(rho > 0.0 && rho <= 1.0)) throw ValidationError("config: rho must be in (0, 1]");
    if (max_extra_views < 0) throw ValidationError("config: max_extra_views must be >= 0");
    if (candidate_count < 1) throw ValidationError("config: candidate_count must be >= 1");
    if (group_size < 1) throw ValidationError("config: group_size must be >= 1");
    if (!(lambda > 0.0)) throw ValidationError("config: lambda must be > 0");
    if (!(tau > 0.0)) throw ValidationError("config: tau must be > 0");
    if (!(target_fill > 0.0 && target_fill <= 1.0)) throw ValidationError("config: target_fill must be in (0, 1]");
    if (!(selection_scale > 0.0 && selection_scale <= 1.0)) {
      throw ValidationError("config: selection_scale must be in (0, 1]");
    }
    if (min_view_cosine < 0.0 || min_view_cosine >= 1.0) {
      throw ValidationError("config: min_view_cosine must be in [0, 1)");
    }
    if (dilation_radius < 0) throw ValidationError("config: dilation_radius must be >= 0");
  }
};

}  // namespace matmart
