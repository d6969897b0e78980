#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "matmart/baking.hpp"
#include "matmart/core_types.hpp"
#include "matmart/image_io.hpp"
#include "matmart/predictor.hpp"
#include "matmart/rasterization.hpp"
#include "matmart/view_selection.hpp"

namespace matmart {

struct InputView {
  std::string name;
  ImageBuffer image;  // RGB
  Camera camera;
};

struct ReconstructionJob {
  TriangleMesh mesh;
  std::vector<InputView> inputs;
  PipelineConfig config;
  std::filesystem::path output_dir;  // empty: nothing written

  void validate() const {
    config.validate();
    if (mesh.empty()) throw ValidationError("job: mesh has no triangles");
    if (inputs.empty()) throw ValidationError("job: at least one input view is required");
    for (const auto& in : inputs) {
      in.camera.validate();
      if (in.image.width() != in.camera.width || in.image.height() != in.camera.height) {
        throw ValidationError("job: image " + in.name + " does not match its camera dimensions");
      }
      if (in.image.channels() != 3) throw ValidationError("job: image " + in.name + " is not RGB");
    }
  }
};

struct GroupRecord {
  std::vector<std::size_t> views;  // indices into the sorted generation list
  std::uint64_t atlas_version = 0;  // atlas version the priors were rendered from
  std::vector<std::size_t> mask_counts;  // at render time
  std::size_t generated = 0;        // bundles sent to the predictor
  double coverage_after = 0.0;
};

struct RunReport {
  double stage1_seconds = 0.0;
  double stage2_seconds = 0.0;
  double coverage_stage1 = 0.0;
  double simulated_start_coverage = 0.0;  // stage 1 + base views, before greedy picks
  std::vector<SelectedView> selected;
  std::vector<std::size_t> generation_mask_counts;  // sorted order, against the stage-1 atlas
  std::vector<double> coverage_trajectory;          // after stage 1, then after each group
  std::vector<GroupRecord> groups;
  std::size_t generation_views = 0;
  std::size_t generation_views_processed = 0;
  std::size_t predictor_calls = 0;
  double final_coverage = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["timings"] = {{"stage1_seconds", stage1_seconds}, {"stage2_seconds", stage2_seconds}};
    j["coverage_stage1"] = coverage_stage1;
    j["simulated_start_coverage"] = simulated_start_coverage;
    j["selected_views"] = nlohmann::json::array();
    for (const auto& s : selected) {
      j["selected_views"].push_back(
          {{"candidate", s.candidate_index}, {"gain", s.gain}, {"simulated_coverage", s.coverage_after}});
    }
    j["generation_mask_counts"] = generation_mask_counts;
    j["coverage_trajectory"] = coverage_trajectory;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : groups) {
      j["groups"].push_back({{"views", g.views},
                             {"atlas_version", g.atlas_version},
                             {"mask_counts", g.mask_counts},
                             {"generated", g.generated},
                             {"coverage_after", g.coverage_after}});
    }
    j["generation_views"] = generation_views;
    j["generation_views_processed"] = generation_views_processed;
    j["predictor_calls"] = predictor_calls;
    j["final_coverage"] = final_coverage;
    return j;
  }
};

// Rasterizes, projects and blends one material view.
inline void bake_view(UVMaterialAtlas& atlas, const TriangleMesh& mesh, const Camera& camera, const MaterialView& view,
                      const ViewGBuffer& view_g, const UVGBuffer& uv_g, const PipelineConfig& cfg) {
  blend(atlas, project_view_to_uv(mesh, camera, view, view_g, uv_g, cfg.lambda, {cfg.cosine_mode}));
}

// Known pixels (mask = 0) keep the prior exactly; masked pixels take the
// generated value.
inline MaterialView composite_with_prior(const MaterialView& generated, const ViewPriorBundle& b) {
  MaterialView out = generated;
  const auto& mask = b.generation_mask.values();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 0.5) continue;
    for (int c = 0; c < 3; ++c) out.albedo.values()[i * 3 + c] = b.albedo_prior.values()[i * 3 + c];
    for (int c = 0; c < 2; ++c) out.rm.values()[i * 2 + c] = b.rm_prior.values()[i * 2 + c];
  }
  return out;
}

class Reconstructor {
 public:
  Reconstructor(const ReconstructionJob& job, MaterialPredictor& predictor)
      : job_(job), predictor_(predictor), cfg_(job.config) {
    job_.validate();
    uv_g_ = rasterize_uv(job_.mesh, cfg_.uv_resolution);
    atlas_ = UVMaterialAtlas::empty(cfg_.uv_resolution);
  }

  const UVGBuffer& uv_gbuffer() const { return uv_g_; }
  const UVMaterialAtlas& atlas() const { return atlas_; }
  const RunReport& report() const { return report_; }
  const std::vector<MaterialView>& stage1_views() const { return stage1_views_; }

  // Progressive estimation: view 0 alone without reference, then rounds of up
  // to group_size inputs. Every prediction is baked as soon as it returns.
  void stage1_estimate() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& inputs = job_.inputs;
    std::size_t next = 0;
    while (next < inputs.size()) {
      const std::size_t count = next == 0 ? 1 : std::min<std::size_t>(cfg_.group_size, inputs.size() - next);
      PredictRequest req;
      for (std::size_t k = 0; k < count; ++k) {
        req.targets.push_back(inputs[next + k].image);
        req.cameras.push_back(inputs[next + k].camera);
      }
      req.reference = reference_;
      auto views = call([&] { return predictor_.predict(req); }, count);
      for (std::size_t k = 0; k < count; ++k) {
        const auto& in = inputs[next + k];
        const auto g = rasterize_view(job_.mesh, in.camera);
        bake_view(atlas_, job_.mesh, in.camera, views[k], g, uv_g_, cfg_);
        stage1_views_.push_back(views[k]);
      }
      update_reference(views, next == 0);
      next += count;
    }
    report_.coverage_stage1 = texel_coverage(atlas_, uv_g_, cfg_.tau);
    report_.coverage_trajectory.push_back(report_.coverage_stage1);
    report_.stage1_seconds = seconds_since(t0);
  }

  // Prior-guided generation over the base views plus greedily selected views,
  // ordered by generation-mask size and processed group by group against the
  // current atlas.
  void stage2_generate() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& mesh = job_.mesh;
    const std::vector<Camera> base = base_axis_views(mesh, cfg_.view_resolution, cfg_.target_fill);

    SelectionParams sp;
    sp.rho = cfg_.rho;
    sp.max_views = cfg_.max_extra_views;
    sp.tau = cfg_.tau;
    sp.lambda = cfg_.lambda;
    sp.min_cosine = cfg_.min_view_cosine;
    sp.sim_scale = cfg_.selection_scale;
    sp.cosine_mode = cfg_.cosine_mode;

    // Greedy selection starts from stage 1 plus the simulated base views.
    ImageBuffer simulated = atlas_.weights;
    std::vector<std::uint32_t> open;
    for (auto t : uv_g_.occupied) {
      if (simulated.values()[t] < cfg_.tau) open.push_back(t);
    }
    for (const auto& cam : base) {
      for (const auto& [t, w] : simulate_view_weights(mesh, cam, uv_g_, open, sp)) simulated.values()[t] += w;
    }
    report_.simulated_start_coverage = texel_coverage(simulated, uv_g_, cfg_.tau);
    const auto candidates = sample_sphere_candidates(cfg_.candidate_count, mesh, cfg_.seed, cfg_.view_resolution,
                                                     cfg_.target_fill);
    const auto selection = greedy_select(mesh, simulated, uv_g_, candidates, sp);
    report_.selected = selection.views;

    std::vector<Camera> generation = base;
    for (const auto& s : selection.views) generation.push_back(s.camera);
    report_.generation_views = generation.size();

    // Ordering uses masks against the post-stage-1 atlas, computed once.
    std::vector<std::size_t> counts;
    for (const auto& cam : generation) {
      const auto g = rasterize_view(mesh, cam);
      counts.push_back(render_material_priors(atlas_, mesh, cam, g, cfg_.tau).mask_count());
    }
    std::vector<Camera> ordered;
    for (auto i : mask_order(counts)) {
      ordered.push_back(generation[i]);
      report_.generation_mask_counts.push_back(counts[i]);
    }

    for (std::size_t start = 0; start < ordered.size(); start += cfg_.group_size) {
      if (texel_coverage(atlas_, uv_g_, cfg_.tau) >= cfg_.rho) break;
      const std::size_t end = std::min(ordered.size(), start + static_cast<std::size_t>(cfg_.group_size));
      GroupRecord rec;
      rec.atlas_version = atlas_.version;
      std::vector<ViewGBuffer> gbuffers;
      GenerateRequest req;
      req.reference = reference_;
      std::vector<std::size_t> active;
      for (std::size_t i = start; i < end; ++i) {
        rec.views.push_back(i);
        auto g = rasterize_view(mesh, ordered[i]);
        auto bundle = render_material_priors(atlas_, mesh, ordered[i], g, cfg_.tau);
        rec.mask_counts.push_back(bundle.mask_count());
        if (bundle.mask_count() == 0) continue;  // nothing to generate: no-op
        active.push_back(i);
        gbuffers.push_back(std::move(g));
        req.bundles.push_back(std::move(bundle));
      }
      report_.generation_views_processed += end - start;
      if (!req.bundles.empty()) {
        auto generated = call([&] { return predictor_.generate(req); }, req.bundles.size());
        std::vector<MaterialView> composited;
        for (std::size_t k = 0; k < generated.size(); ++k) {
          composited.push_back(composite_with_prior(generated[k], req.bundles[k]));
          bake_view(atlas_, mesh, ordered[active[k]], composited.back(), gbuffers[k], uv_g_, cfg_);
        }
        update_reference(composited, false);
        rec.generated = req.bundles.size();
      }
      rec.coverage_after = texel_coverage(atlas_, uv_g_, cfg_.tau);
      report_.coverage_trajectory.push_back(rec.coverage_after);
      report_.groups.push_back(std::move(rec));
    }
    report_.final_coverage = texel_coverage(atlas_, uv_g_, cfg_.tau);
    if (cfg_.dilation_radius > 0) atlas_ = dilate_atlas(atlas_, cfg_.dilation_radius);
    report_.stage2_seconds = seconds_since(t0);
  }

  void save(const std::filesystem::path& dir) const {
    save_atlas(atlas_, dir);
    write_text_file(dir / "report.json", report_.to_json().dump(2));
  }

 private:
  template <typename Fn>
  std::vector<MaterialView> call(Fn&& fn, std::size_t expected) {
    ++report_.predictor_calls;
    std::vector<MaterialView> out;
    try {
      out = fn();
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      save_partial();
      throw PredictorError(std::string("predictor ") + predictor_.name() + " failed: " + e.what());
    }
    if (out.size() != expected) {
      save_partial();
      throw PredictorError("predictor " + predictor_.name() + " returned " + std::to_string(out.size()) +
                           " views for " + std::to_string(expected) + " targets");
    }
    return out;
  }

  void save_partial() const {
    if (job_.output_dir.empty()) return;
    try {
      save_atlas(atlas_, job_.output_dir / "partial");
      spdlog::error("predictor failure; partial atlas saved to {}", (job_.output_dir / "partial").string());
    } catch (const std::exception& e) {
      spdlog::error("could not save partial atlas: {}", e.what());
    }
  }

  void update_reference(const std::vector<MaterialView>& views, bool first_round) {
    if (views.empty()) return;
    switch (cfg_.reference_policy) {
      case ReferencePolicy::First:
        if (first_round) reference_ = views.front();
        break;
      case ReferencePolicy::Previous:
        reference_ = views.back();
        break;
      case ReferencePolicy::None:
        break;
    }
  }

  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const ReconstructionJob& job_;
  MaterialPredictor& predictor_;
  PipelineConfig cfg_;
  UVGBuffer uv_g_;
  UVMaterialAtlas atlas_;
  RunReport report_;
  std::optional<MaterialView> reference_;
  std::vector<MaterialView> stage1_views_;
};

struct ReconstructionResult {
  UVMaterialAtlas atlas;
  RunReport report;
};

// Stage 1 then stage 2; writes the atlas files and report.json when the job
// names an output directory.
inline ReconstructionResult reconstruct(const ReconstructionJob& job, MaterialPredictor& predictor) {
  Reconstructor r(job, predictor);
  r.stage1_estimate();
  r.stage2_generate();
  if (!job.output_dir.empty()) r.save(job.output_dir);
  return {r.atlas(), r.report()};
}

}  // namespace matmart
