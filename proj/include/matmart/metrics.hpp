#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "matmart/baking.hpp"
#include "matmart/core_types.hpp"
#include "matmart/rasterization.hpp"

namespace matmart {

inline constexpr double kPsnrCap = 99.0;

// Binary per-pixel mask, one channel.
struct EvalMask {
  ImageBuffer mask;

  static EvalMask full(int width, int height) { return {ImageBuffer(width, height, 1, 1.0)}; }
  static EvalMask from_weights(const ImageBuffer& weights, double tau) {
    EvalMask m{ImageBuffer(weights.width(), weights.height(), 1, 0.0)};
    for (std::size_t i = 0; i < weights.values().size(); ++i) m.mask.values()[i] = weights.values()[i] >= tau;
    return m;
  }
  bool on(std::size_t pixel) const { return mask.values()[pixel] > 0.5; }
  std::size_t count() const {
    std::size_t n = 0;
    for (double v : mask.values()) n += v > 0.5;
    return n;
  }
};

namespace detail {

inline void check_pair(const ImageBuffer& pred, const ImageBuffer& gt, const char* what) {
  if (!pred.same_shape(gt)) throw ValidationError(std::string(what) + ": image shapes differ");
}

inline void check_mask(const ImageBuffer& img, const EvalMask& m, const char* what) {
  if (m.mask.width() != img.width() || m.mask.height() != img.height() || m.mask.channels() != 1) {
    throw ValidationError(std::string(what) + ": mask dimensions do not match");
  }
  if (m.count() == 0) throw ValidationError(std::string(what) + ": mask is empty");
}

inline double psnr_from_mse(double mse) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

}  // namespace detail

// Per-channel least-squares scale s = <p,g>/<p,p> over masked pixels, then
// PSNR with peak 1.
inline double si_psnr(const ImageBuffer& pred, const ImageBuffer& gt, const EvalMask& mask) {
  detail::check_pair(pred, gt, "si_psnr");
  detail::check_mask(pred, mask, "si_psnr");
  const int C = pred.channels();
  std::vector<double> pg(C, 0.0), pp(C, 0.0);
  const std::size_t n = static_cast<std::size_t>(pred.width()) * pred.height();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.on(i)) continue;
    for (int c = 0; c < C; ++c) {
      const double p = pred.values()[i * C + c];
      pg[c] += p * gt.values()[i * C + c];
      pp[c] += p * p;
    }
  }
  std::vector<double> s(C, 1.0);
  for (int c = 0; c < C; ++c) {
    if (pp[c] > 0.0) s[c] = pg[c] / pp[c];
  }
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.on(i)) continue;
    for (int c = 0; c < C; ++c) {
      const double d = s[c] * pred.values()[i * C + c] - gt.values()[i * C + c];
      se += d * d;
    }
    count += C;
  }
  return detail::psnr_from_mse(se / count);
}

inline double si_psnr(const ImageBuffer& pred, const ImageBuffer& gt) {
  return si_psnr(pred, gt, EvalMask::full(pred.width(), pred.height()));
}

inline double mse(const ImageBuffer& pred, const ImageBuffer& gt, const EvalMask& mask) {
  detail::check_pair(pred, gt, "mse");
  detail::check_mask(pred, mask, "mse");
  const int C = pred.channels();
  const std::size_t n = static_cast<std::size_t>(pred.width()) * pred.height();
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.on(i)) continue;
    for (int c = 0; c < C; ++c) {
      const double d = pred.values()[i * C + c] - gt.values()[i * C + c];
      se += d * d;
    }
    count += C;
  }
  return se / count;
}

inline double mse(const ImageBuffer& pred, const ImageBuffer& gt) {
  return mse(pred, gt, EvalMask::full(pred.width(), pred.height()));
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

inline std::vector<double> gaussian_window_1d(int size = kSsimWindow, double sigma = kSsimSigma) {
  std::vector<double> w(size);
  const double mid = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-((i - mid) * (i - mid)) / (2 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

namespace detail {

// Valid-mode separable filtering of one channel.
inline std::vector<double> filter_valid(const std::vector<double>& img, int width, int height,
                                        const std::vector<double>& w) {
  const int K = static_cast<int>(w.size());
  const int ow = width - K + 1;
  const int oh = height - K + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += w[k] * img[static_cast<std::size_t>(y) * width + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += w[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

// Single-scale SSIM, 11x11 Gaussian window, dynamic range 1, mean over valid
// window positions and channels.
inline double ssim(const ImageBuffer& pred, const ImageBuffer& gt) {
  detail::check_pair(pred, gt, "ssim");
  if (pred.width() < kSsimWindow || pred.height() < kSsimWindow) {
    throw ValidationError("ssim: image is smaller than the 11x11 window");
  }
  const int W = pred.width();
  const int H = pred.height();
  const int C = pred.channels();
  const double C1 = kSsimK1 * kSsimK1;
  const double C2 = kSsimK2 * kSsimK2;
  const auto w = gaussian_window_1d();
  const std::size_t n = static_cast<std::size_t>(W) * H;
  double total = 0.0;
  std::size_t positions = 0;
  for (int c = 0; c < C; ++c) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = pred.values()[i * C + c];
      b[i] = gt.values()[i * C + c];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto ma = detail::filter_valid(a, W, H, w);
    const auto mb = detail::filter_valid(b, W, H, w);
    const auto saa = detail::filter_valid(aa, W, H, w);
    const auto sbb = detail::filter_valid(bb, W, H, w);
    const auto sab = detail::filter_valid(ab, W, H, w);
    for (std::size_t i = 0; i < ma.size(); ++i) {
      const double va = saa[i] - ma[i] * ma[i];
      const double vb = sbb[i] - mb[i] * mb[i];
      const double cov = sab[i] - ma[i] * mb[i];
      total += ((2 * ma[i] * mb[i] + C1) * (2 * cov + C2)) /
               ((ma[i] * ma[i] + mb[i] * mb[i] + C1) * (va + vb + C2));
    }
    positions += ma.size();
  }
  return total / positions;
}

// Copy of `img` with unmasked pixels set to zero.
inline ImageBuffer masked_copy(const ImageBuffer& img, const EvalMask& mask) {
  ImageBuffer out = img;
  const int C = img.channels();
  const std::size_t n = static_cast<std::size_t>(img.width()) * img.height();
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.on(i)) continue;
    for (int c = 0; c < C; ++c) out.values()[i * C + c] = 0.0;
  }
  return out;
}

// Bilinear resample of a texture to another resolution in UV space.
inline ImageBuffer resample_texture(const ImageBuffer& tex, int resolution) {
  if (tex.width() == resolution && tex.height() == resolution) return tex;
  ImageBuffer out(resolution, resolution, tex.channels(), 0.0);
  for (int j = 0; j < resolution; ++j) {
    for (int i = 0; i < resolution; ++i) {
      const double px = (i + 0.5) * tex.width() / resolution;
      const double py = (j + 0.5) * tex.height() / resolution;
      sample_bilinear(tex, px, py, std::span<double>(out.values()).subspan(out.index(i, j), tex.channels()));
    }
  }
  return out;
}

enum class EvalSpace { UV, View };

struct AtlasMetrics {
  double si_psnr_albedo = 0.0;
  double ssim_albedo = 0.0;
  double mse_roughness = 0.0;
  double mse_metallic = 0.0;
  double coverage = 0.0;
};

// Atlas vs ground-truth textures over covered texels (UV space), or over
// covered pixels of the given cameras (view space).
inline AtlasMetrics evaluate_atlas(const UVMaterialAtlas& atlas, const ImageBuffer& gt_albedo, const ImageBuffer& gt_rm,
                                   const TriangleMesh& mesh, double tau, EvalSpace space = EvalSpace::UV,
                                   const std::vector<Camera>& cameras = {}) {
  const int R = atlas.resolution;
  const auto uv_g = rasterize_uv(mesh, R);
  AtlasMetrics m;
  m.coverage = texel_coverage(atlas, uv_g, tau);
  const ImageBuffer ga = resample_texture(gt_albedo, R);
  const ImageBuffer grm = resample_texture(gt_rm, R);
  const EvalMask covered{covered_texel_mask(atlas, uv_g, tau)};
  if (covered.count() == 0) throw ValidationError("evaluate: no covered texels");

  if (space == EvalSpace::UV) {
    m.si_psnr_albedo = si_psnr(atlas.albedo, ga, covered);
    m.ssim_albedo = ssim(masked_copy(atlas.albedo, covered), masked_copy(ga, covered));
    m.mse_roughness = mse(atlas.rm.channel(0), grm.channel(0), covered);
    m.mse_metallic = mse(atlas.rm.channel(1), grm.channel(1), covered);
    return m;
  }

  if (cameras.empty()) throw ValidationError("evaluate: view space needs at least one camera");
  double ssim_sum = 0.0;
  std::vector<double> pa, gav, pr, gr, pm, gm;
  for (const auto& cam : cameras) {
    const auto g = rasterize_view(mesh, cam);
    const auto a = sample_texture_in_view(atlas.albedo, mesh, g);
    const auto b = sample_texture_in_view(ga, mesh, g);
    const auto ra = sample_texture_in_view(atlas.rm, mesh, g);
    const auto rb = sample_texture_in_view(grm, mesh, g);
    const EvalMask vm{g.coverage};
    ssim_sum += ssim(masked_copy(a, vm), masked_copy(b, vm));
    for (std::size_t i = 0; i < g.coverage.values().size(); ++i) {
      if (!vm.on(i)) continue;
      for (int c = 0; c < 3; ++c) {
        pa.push_back(a.values()[i * 3 + c]);
        gav.push_back(b.values()[i * 3 + c]);
      }
      pr.push_back(ra.values()[i * 2]);
      gr.push_back(rb.values()[i * 2]);
      pm.push_back(ra.values()[i * 2 + 1]);
      gm.push_back(rb.values()[i * 2 + 1]);
    }
  }
  if (pr.empty()) throw ValidationError("evaluate: cameras see no surface");
  const int n = static_cast<int>(pr.size());
  m.si_psnr_albedo = si_psnr(ImageBuffer(n, 1, 3, pa), ImageBuffer(n, 1, 3, gav));
  m.ssim_albedo = ssim_sum / cameras.size();
  m.mse_roughness = mse(ImageBuffer(n, 1, 1, pr), ImageBuffer(n, 1, 1, gr));
  m.mse_metallic = mse(ImageBuffer(n, 1, 1, pm), ImageBuffer(n, 1, 1, gm));
  return m;
}

}  // namespace matmart
