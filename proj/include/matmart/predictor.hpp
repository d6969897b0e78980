#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "matmart/core_types.hpp"
#include "matmart/rasterization.hpp"
#include "matmart/vmca.hpp"

namespace matmart {

struct PredictRequest {
  std::vector<ImageBuffer> targets;  // RGB inputs
  // Camera of each target. Implementations that work from geometry (the
  // oracles) require them; image-only implementations ignore them.
  std::vector<Camera> cameras;
  std::optional<MaterialView> reference;

  void validate() const {
    for (const auto& t : targets) {
      if (!t.same_extent(targets.front())) throw ValidationError("predict request: target dimensions differ");
      if (t.channels() != 3) throw ValidationError("predict request: targets must be RGB");
    }
    if (!cameras.empty() && cameras.size() != targets.size()) {
      throw ValidationError("predict request: camera count does not match target count");
    }
    if (reference && !targets.empty() &&
        (reference->width() != targets.front().width() || reference->height() != targets.front().height())) {
      throw ValidationError("predict request: reference dimensions differ from targets");
    }
  }
};

struct GenerateRequest {
  std::vector<ViewPriorBundle> bundles;
  std::optional<MaterialView> reference;

  void validate() const {
    if (bundles.empty()) throw ValidationError("generate request: group is empty");
    for (const auto& b : bundles) {
      if (!b.generation_mask.same_extent(bundles.front().generation_mask)) {
        throw ValidationError("generate request: bundle dimensions differ");
      }
    }
    if (reference && (reference->width() != bundles.front().generation_mask.width() ||
                      reference->height() != bundles.front().generation_mask.height())) {
      throw ValidationError("generate request: reference dimensions differ from bundles");
    }
  }
};

// Stand-in for the material diffusion network. Both calls return exactly one
// MaterialView per target; failures surface as PredictorError.
class MaterialPredictor {
 public:
  virtual ~MaterialPredictor() = default;
  virtual std::vector<MaterialView> predict(const PredictRequest& request) = 0;
  virtual std::vector<MaterialView> generate(const GenerateRequest& request) = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Oracle: rasterizes each target and samples the ground-truth textures.
// The RGB content and priors are ignored.
// ---------------------------------------------------------------------------
class OraclePredictor : public MaterialPredictor {
 public:
  OraclePredictor(TriangleMesh mesh, ImageBuffer gt_albedo, ImageBuffer gt_rm)
      : mesh_(std::move(mesh)), gt_albedo_(std::move(gt_albedo)), gt_rm_(std::move(gt_rm)) {
    if (gt_albedo_.channels() != 3 || gt_rm_.channels() != 2) {
      throw ValidationError("oracle: ground truth needs a 3-channel albedo and a 2-channel rm texture");
    }
  }

  MaterialView render(const Camera& camera) const {
    const auto g = rasterize_view(mesh_, camera);
    return MaterialView::make(sample_texture_in_view(gt_albedo_, mesh_, g), sample_texture_in_view(gt_rm_, mesh_, g));
  }

  std::vector<MaterialView> predict(const PredictRequest& request) override {
    request.validate();
    if (request.cameras.size() != request.targets.size()) {
      throw PredictorError("oracle: every target needs a camera");
    }
    std::vector<MaterialView> out;
    for (const auto& cam : request.cameras) out.push_back(render(cam));
    return out;
  }

  std::vector<MaterialView> generate(const GenerateRequest& request) override {
    request.validate();
    std::vector<MaterialView> out;
    for (const auto& b : request.bundles) out.push_back(render(b.camera));
    return out;
  }

  std::string name() const override { return "oracle"; }

  const TriangleMesh& mesh() const { return mesh_; }

 private:
  TriangleMesh mesh_;
  ImageBuffer gt_albedo_;
  ImageBuffer gt_rm_;
};

inline std::uint64_t fingerprint(const ImageBuffer& img) {
  // FNV-1a over the raw value bytes.
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(img.values().data());
  for (std::size_t i = 0; i < img.values().size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Noisy oracle: oracle albedo plus one constant RGB bias per call. A call that
// carries a reference produced by this predictor reuses that reference's
// bias, so reference wiring removes cross-view disagreement.
// ---------------------------------------------------------------------------
class NoisyOraclePredictor : public MaterialPredictor {
 public:
  NoisyOraclePredictor(TriangleMesh mesh, ImageBuffer gt_albedo, ImageBuffer gt_rm, std::uint64_t seed,
                       double amplitude = 0.1)
      : oracle_(std::move(mesh), std::move(gt_albedo), std::move(gt_rm)), rng_(seed), amplitude_(amplitude) {}

  std::vector<MaterialView> predict(const PredictRequest& request) override {
    std::vector<MaterialView> clean = oracle_.predict(request);
    return apply(std::move(clean), request.cameras, request.reference);
  }

  std::vector<MaterialView> generate(const GenerateRequest& request) override {
    std::vector<MaterialView> clean = oracle_.generate(request);
    std::vector<Camera> cams;
    for (const auto& b : request.bundles) cams.push_back(b.camera);
    return apply(std::move(clean), cams, request.reference);
  }

  std::string name() const override { return "noisy-oracle"; }

  // Biases drawn so far, one per call that did not inherit one.
  const std::vector<Vec3>& drawn_biases() const { return drawn_; }

 private:
  std::vector<MaterialView> apply(std::vector<MaterialView> views, const std::vector<Camera>& cameras,
                                  const std::optional<MaterialView>& reference) {
    Vec3 bias;
    std::optional<Vec3> inherited;
    if (reference) {
      if (auto it = known_.find(fingerprint(reference->albedo)); it != known_.end()) inherited = it->second;
    }
    if (inherited) {
      bias = *inherited;
    } else {
      std::uniform_real_distribution<double> dist(-amplitude_, amplitude_);
      bias = Vec3(dist(rng_), dist(rng_), dist(rng_));
      drawn_.push_back(bias);
    }
    for (std::size_t k = 0; k < views.size(); ++k) {
      auto& v = views[k];
      const auto g = rasterize_view(oracle_.mesh(), cameras[k]);
      for (int y = 0; y < v.height(); ++y) {
        for (int x = 0; x < v.width(); ++x) {
          if (!g.covered(x, y)) continue;
          for (int c = 0; c < 3; ++c) v.albedo.at(x, y, c) = std::clamp(v.albedo.at(x, y, c) + bias[c], 0.0, 1.0);
        }
      }
      known_[fingerprint(v.albedo)] = bias;
    }
    return views;
  }

  OraclePredictor oracle_;
  std::mt19937_64 rng_;
  double amplitude_;
  std::map<std::uint64_t, Vec3> known_;
  std::vector<Vec3> drawn_;
};

// ---------------------------------------------------------------------------
// Toy VMCA predictor: untrained, fixed-seed attention block over a coarse
// token grid. Exercises shapes, determinism, zero padding of absent inputs and
// the reference-free path; its outputs carry no meaning.
// ---------------------------------------------------------------------------
class ToyVMCAPredictor : public MaterialPredictor {
 public:
  // Token features: rgb(3) | albedo prior(3) | rm prior(2) | mask(1) | normal(3) | position(3)
  static constexpr int kFeatures = 15;
  static constexpr int kReferenceFeatures = 5;

  explicit ToyVMCAPredictor(std::uint64_t seed, int grid = 8, int dim = 16)
      : grid_(grid), dim_(dim), block_(attention::ToyBlockParams::random(dim, seed)) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    embed_albedo_ = attention::Matrix::random(kFeatures, dim, rng, 0.5);
    embed_rm_ = attention::Matrix::random(kFeatures, dim, rng, 0.5);
    ref_albedo_ = attention::Matrix::random(kReferenceFeatures, dim, rng, 0.5);
    ref_rm_ = attention::Matrix::random(kReferenceFeatures, dim, rng, 0.5);
    head_albedo_ = attention::Matrix::random(dim, 3, rng, s);
    head_rm_ = attention::Matrix::random(dim, 2, rng, s);
  }

  int tokens_per_view() const { return grid_ * grid_; }

  std::vector<MaterialView> predict(const PredictRequest& request) override {
    request.validate();
    if (request.targets.empty()) return {};
    std::vector<std::vector<ImageBuffer>> inputs;
    for (const auto& t : request.targets) inputs.push_back({t});
    return run(inputs, request.reference, request.targets.front().width(), request.targets.front().height());
  }

  std::vector<MaterialView> generate(const GenerateRequest& request) override {
    request.validate();
    std::vector<std::vector<ImageBuffer>> inputs;
    for (const auto& b : request.bundles) {
      // RGB is absent for generation and is zero padded by pooling order.
      inputs.push_back({ImageBuffer(b.albedo_prior.width(), b.albedo_prior.height(), 3), b.albedo_prior, b.rm_prior,
                        b.generation_mask, b.normal, b.position});
    }
    return run(inputs, request.reference, request.bundles.front().generation_mask.width(),
               request.bundles.front().generation_mask.height());
  }

  std::string name() const override { return "toy"; }

 private:
  // Average-pools each input onto the token grid and packs the features;
  // feature slots without an input stay zero.
  attention::Matrix tokens(const std::vector<ImageBuffer>& parts, int features) const {
    attention::Matrix t(grid_ * grid_, features);
    int offset = 0;
    for (const auto& img : parts) {
      for (int gy = 0; gy < grid_; ++gy) {
        for (int gx = 0; gx < grid_; ++gx) {
          const int x0 = gx * img.width() / grid_, x1 = std::max(x0 + 1, (gx + 1) * img.width() / grid_);
          const int y0 = gy * img.height() / grid_, y1 = std::max(y0 + 1, (gy + 1) * img.height() / grid_);
          for (int c = 0; c < img.channels(); ++c) {
            double sum = 0.0;
            for (int y = y0; y < y1; ++y) {
              for (int x = x0; x < x1; ++x) sum += img.at(x, y, c);
            }
            t(gy * grid_ + gx, offset + c) = sum / ((x1 - x0) * (y1 - y0));
          }
        }
      }
      offset += img.channels();
    }
    return t;
  }

  static attention::Matrix stack(const std::vector<attention::Matrix>& parts) {
    int rows = 0;
    for (const auto& p : parts) rows += p.rows();
    attention::Matrix out(rows, parts.front().cols());
    int r = 0;
    for (const auto& p : parts) {
      std::copy(p.data(), p.data() + p.size(), out.row(r).data());
      r += p.rows();
    }
    return out;
  }

  std::vector<MaterialView> run(const std::vector<std::vector<ImageBuffer>>& inputs,
                                const std::optional<MaterialView>& reference, int width, int height) {
    std::vector<attention::Matrix> feats;
    for (const auto& parts : inputs) feats.push_back(tokens(parts, kFeatures));
    const attention::Matrix x = stack(feats);
    const attention::Matrix la = attention::matmul(x, embed_albedo_);
    const attention::Matrix lr = attention::matmul(x, embed_rm_);

    std::optional<attention::ReferenceLatents> ref;
    if (reference) {
      const auto rt = tokens({reference->albedo, reference->rm}, kReferenceFeatures);
      ref = attention::ReferenceLatents{attention::matmul(rt, ref_albedo_), attention::matmul(rt, ref_rm_)};
    }
    const int pad = tokens_per_view();
    const auto out_a = attention::toy_block_forward(block_, la, lr, ref, attention::MaterialTask::Albedo, pad);
    const auto out_r = attention::toy_block_forward(block_, la, lr, ref, attention::MaterialTask::RoughnessMetallic, pad);
    const attention::Matrix albedo_tokens = attention::matmul(out_a.albedo, head_albedo_);
    const attention::Matrix rm_tokens = attention::matmul(out_r.rm, head_rm_);

    std::vector<MaterialView> views;
    for (std::size_t v = 0; v < inputs.size(); ++v) {
      views.push_back(MaterialView::make(upsample(albedo_tokens, static_cast<int>(v), width, height),
                                         upsample(rm_tokens, static_cast<int>(v), width, height)));
    }
    return views;
  }

  // Sigmoid of the token grid, bilinearly resampled to the view size.
  ImageBuffer upsample(const attention::Matrix& toks, int view, int width, int height) const {
    const int ch = toks.cols();
    ImageBuffer grid(grid_, grid_, ch);
    for (int t = 0; t < grid_ * grid_; ++t) {
      for (int c = 0; c < ch; ++c) {
        grid.values()[static_cast<std::size_t>(t) * ch + c] = 1.0 / (1.0 + std::exp(-toks(view * grid_ * grid_ + t, c)));
      }
    }
    ImageBuffer out(width, height, ch);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        sample_bilinear(grid, (x + 0.5) * grid_ / width, (y + 0.5) * grid_ / height, out.pixel(x, y));
      }
    }
    return out;
  }

  int grid_;
  int dim_;
  attention::ToyBlockParams block_;
  attention::Matrix embed_albedo_, embed_rm_, ref_albedo_, ref_rm_, head_albedo_, head_rm_;
};

}  // namespace matmart
