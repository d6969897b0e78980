#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "matmart/baking.hpp"
#include "matmart/image_io.hpp"
#include "matmart/mesh_io.hpp"
#include "matmart/metrics.hpp"
#include "matmart/parallel.hpp"
#include "matmart/pipeline.hpp"
#include "matmart/predictor.hpp"
#include "matmart/scene.hpp"
#include "matmart/view_selection.hpp"
#include "matmart/vmca_check.hpp"

namespace matmart::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct CliConfig {
  PipelineConfig pipeline;
  std::string scene_dir;
  std::string mesh;
  std::string cameras;
  std::vector<std::string> images;
  std::string output;
  std::string predictor = "oracle";
  std::string gt_albedo;
  std::string gt_rm;
  std::string reference_policy = "first";
  std::string cosine_mode = "per-texel";
  bool no_dilation = false;
  std::uint64_t predictor_seed = 0;
  int threads = 0;
  std::string log_level = "warn";

  // scene-gen
  std::string shape = "cube";
  std::string pattern = "checker";
  int checker = 8;
  int texture_res = 512;
  int views = 3;
  bool lambertian = false;

  // select-views / bake / evaluate
  std::string atlas;
  bool with_base_views = false;
  std::string view_albedo;
  std::string view_rm;
  std::string view_name;
  std::string space = "uv";
  int batches = 100;
};

namespace detail {

struct SceneFiles {
  std::string mesh, cameras, gt_albedo, gt_rm;
  std::vector<std::string> images;
};

inline SceneFiles read_scene_manifest(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dir / "scene.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene.json: ") + e.what());
  }
  SceneFiles s;
  try {
    s.mesh = (dir / j.at("mesh").get<std::string>()).string();
    s.cameras = (dir / j.at("cameras").get<std::string>()).string();
    s.gt_albedo = (dir / j.at("gt_albedo").get<std::string>()).string();
    s.gt_rm = (dir / j.at("gt_rm").get<std::string>()).string();
    for (const auto& im : j.at("images")) s.images.push_back((dir / im.get<std::string>()).string());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scene.json: ") + e.what());
  }
  return s;
}

// Fills empty path fields from --scene.
inline void apply_scene(CliConfig& c) {
  if (c.scene_dir.empty()) return;
  const auto s = read_scene_manifest(c.scene_dir);
  if (c.mesh.empty()) c.mesh = s.mesh;
  if (c.cameras.empty()) c.cameras = s.cameras;
  if (c.gt_albedo.empty()) c.gt_albedo = s.gt_albedo;
  if (c.gt_rm.empty()) c.gt_rm = s.gt_rm;
  if (c.images.empty()) c.images = s.images;
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing ") + flag);
}

inline void finish_config(CliConfig& c) {
  static const std::map<std::string, ReferencePolicy> policies{
      {"first", ReferencePolicy::First}, {"previous", ReferencePolicy::Previous}, {"none", ReferencePolicy::None}};
  static const std::map<std::string, CosineMode> modes{{"per-texel", CosineMode::PerTexel},
                                                       {"forward-axis", CosineMode::ForwardAxis}};
  c.pipeline.reference_policy = policies.at(c.reference_policy);
  c.pipeline.cosine_mode = modes.at(c.cosine_mode);
  if (c.no_dilation) c.pipeline.dilation_radius = 0;
  if (c.threads > 0) set_max_threads(c.threads);
  c.pipeline.validate();
}

inline std::unique_ptr<MaterialPredictor> make_predictor(const CliConfig& c, const TriangleMesh& mesh) {
  if (c.predictor == "toy") return std::make_unique<ToyVMCAPredictor>(c.predictor_seed);
  require(c.gt_albedo, "--gt-albedo (required by the oracle predictors)");
  require(c.gt_rm, "--gt-rm (required by the oracle predictors)");
  auto ga = load_image(c.gt_albedo, 3);
  auto grm = load_image(c.gt_rm, 2);
  if (c.predictor == "noisy-oracle") {
    return std::make_unique<NoisyOraclePredictor>(mesh, std::move(ga), std::move(grm), c.predictor_seed);
  }
  return std::make_unique<OraclePredictor>(mesh, std::move(ga), std::move(grm));
}

inline const NamedCamera& find_camera(const std::vector<NamedCamera>& cams, const std::string& name) {
  for (const auto& c : cams) {
    if (c.name == name) return c;
  }
  throw ValidationError("no camera named " + name);
}

inline nlohmann::json metrics_json(const AtlasMetrics& m) {
  return {{"si_psnr_albedo", m.si_psnr_albedo},
          {"ssim_albedo", m.ssim_albedo},
          {"mse_roughness", m.mse_roughness},
          {"mse_metallic", m.mse_metallic},
          {"coverage", m.coverage}};
}

}  // namespace detail

inline void cmd_reconstruct(CliConfig c, std::ostream& out) {
  detail::apply_scene(c);
  detail::require(c.mesh, "--mesh");
  detail::require(c.cameras, "--cameras");
  detail::require(c.output, "--output");
  detail::finish_config(c);
  ReconstructionJob job;
  job.mesh = load_mesh(c.mesh);
  job.config = c.pipeline;
  job.output_dir = c.output;
  const auto cams = load_cameras(c.cameras);
  if (c.images.size() != cams.size()) {
    throw ValidationError("got " + std::to_string(c.images.size()) + " images for " + std::to_string(cams.size()) +
                          " cameras");
  }
  for (std::size_t k = 0; k < cams.size(); ++k) {
    job.inputs.push_back({cams[k].name, load_image(c.images[k], 3), cams[k].camera});
  }
  job.validate();
  auto predictor = detail::make_predictor(c, job.mesh);
  const auto result = reconstruct(job, *predictor);
  out << nlohmann::json{{"output", c.output},
                        {"coverage_stage1", result.report.coverage_stage1},
                        {"final_coverage", result.report.final_coverage},
                        {"generation_views", result.report.generation_views}}
             .dump(2)
      << "\n";
}

inline void cmd_scene_gen(CliConfig c, std::ostream& out) {
  detail::require(c.output, "--output");
  SceneOptions opt;
  opt.shape = c.shape == "sphere" ? SceneShape::Sphere : SceneShape::Cube;
  opt.texture.pattern = c.pattern == "gradient" ? ScenePattern::Gradient : ScenePattern::Checker;
  opt.texture.checker = c.checker;
  opt.texture.resolution = c.texture_res;
  opt.texture.seed = c.pipeline.seed;
  opt.view_resolution = c.pipeline.view_resolution;
  opt.views = c.views;
  opt.lambertian = c.lambertian;
  if (c.checker < 1) throw ValidationError("--checker must be >= 1");
  if (c.texture_res < 1) throw ValidationError("--texture-res must be >= 1");
  if (c.views < 1) throw ValidationError("--views must be >= 1");
  if (c.pipeline.view_resolution < 2) throw ValidationError("--view-res must be >= 2");
  const auto scene = make_scene(opt);
  save_scene(scene, c.output);
  out << nlohmann::json{{"output", c.output}, {"views", scene.cameras.size()}}.dump(2) << "\n";
}

inline void cmd_select_views(CliConfig c, std::ostream& out) {
  detail::apply_scene(c);
  detail::require(c.mesh, "--mesh");
  detail::finish_config(c);
  const auto& p = c.pipeline;
  const auto mesh = load_mesh(c.mesh);
  mesh.validate();
  UVMaterialAtlas atlas = c.atlas.empty() ? UVMaterialAtlas::empty(p.uv_resolution) : load_atlas(c.atlas);
  const auto uv_g = rasterize_uv(mesh, atlas.resolution);
  SelectionParams sp{p.rho, p.max_extra_views, p.tau, p.lambda, p.min_view_cosine, p.selection_scale, p.cosine_mode};
  ImageBuffer weights = atlas.weights;
  if (c.with_base_views) {
    std::vector<std::uint32_t> open;
    for (auto t : uv_g.occupied) {
      if (weights.values()[t] < p.tau) open.push_back(t);
    }
    for (const auto& cam : base_axis_views(mesh, p.view_resolution, p.target_fill)) {
      for (const auto& [t, w] : simulate_view_weights(mesh, cam, uv_g, open, sp)) weights.values()[t] += w;
    }
  }
  const auto candidates = sample_sphere_candidates(p.candidate_count, mesh, p.seed, p.view_resolution, p.target_fill);
  const auto result = greedy_select(mesh, weights, uv_g, candidates, sp);
  nlohmann::json j;
  j["initial_coverage"] = result.initial_coverage;
  j["selected"] = nlohmann::json::array();
  for (const auto& v : result.views) {
    j["selected"].push_back({{"candidate", v.candidate_index},
                             {"gain", v.gain},
                             {"coverage", v.coverage_after},
                             {"camera", camera_to_json("candidate_" + std::to_string(v.candidate_index), v.camera)}});
  }
  out << j.dump(2) << "\n";
}

inline void cmd_bake(CliConfig c, std::ostream& out) {
  detail::apply_scene(c);
  detail::require(c.mesh, "--mesh");
  detail::require(c.cameras, "--cameras");
  detail::require(c.atlas, "--atlas");
  detail::require(c.view_albedo, "--albedo");
  detail::require(c.view_rm, "--rm");
  detail::require(c.view_name, "--view");
  detail::finish_config(c);
  const auto mesh = load_mesh(c.mesh);
  mesh.validate();
  const auto cam = detail::find_camera(load_cameras(c.cameras), c.view_name).camera;
  UVMaterialAtlas atlas = std::filesystem::exists(std::filesystem::path(c.atlas) / "atlas.json")
                              ? load_atlas(c.atlas)
                              : UVMaterialAtlas::empty(c.pipeline.uv_resolution);
  const auto view = MaterialView::make(load_image(c.view_albedo, 3), load_image(c.view_rm, 2));
  if (view.width() != cam.width || view.height() != cam.height) {
    throw ValidationError("bake: view images do not match the camera dimensions");
  }
  const auto uv_g = rasterize_uv(mesh, atlas.resolution);
  const auto g = rasterize_view(mesh, cam);
  bake_view(atlas, mesh, cam, view, g, uv_g, c.pipeline);
  save_atlas(atlas, c.atlas);
  out << nlohmann::json{{"atlas", c.atlas}, {"coverage", texel_coverage(atlas, uv_g, c.pipeline.tau)}}.dump(2) << "\n";
}

inline void cmd_evaluate(CliConfig c, std::ostream& out) {
  detail::apply_scene(c);
  detail::require(c.atlas, "--atlas");
  detail::require(c.mesh, "--mesh");
  detail::require(c.gt_albedo, "--gt-albedo");
  detail::require(c.gt_rm, "--gt-rm");
  detail::finish_config(c);
  const auto mesh = load_mesh(c.mesh);
  const auto atlas = load_atlas(c.atlas);
  const EvalSpace space = c.space == "view" ? EvalSpace::View : EvalSpace::UV;
  std::vector<Camera> cams;
  if (space == EvalSpace::View) {
    detail::require(c.cameras, "--cameras (required for --space view)");
    for (const auto& nc : load_cameras(c.cameras)) cams.push_back(nc.camera);
  }
  const auto m = evaluate_atlas(atlas, load_image(c.gt_albedo, 3), load_image(c.gt_rm, 2), mesh, c.pipeline.tau,
                                space, cams);
  out << detail::metrics_json(m).dump(2) << "\n";
}

// Returns false when any suite fails.
inline bool cmd_vmca_check(const CliConfig& c, std::ostream& out) {
  if (c.batches < 1) throw ValidationError("--batches must be >= 1");
  const auto r = attention::run_kernel_checks(c.batches, c.pipeline.seed);
  out << nlohmann::json{{"oracle", {{"pass", r.forward_pass}, {"total", r.forward_total}}},
                        {"gradient", {{"pass", r.gradient_pass}, {"total", r.gradient_total}}},
                        {"memory", {{"pass", r.memory_pass}, {"total", r.memory_total}}},
                        {"max_forward_error", r.max_forward_error},
                        {"max_gradient_error", r.max_gradient_error}}
             .dump(2)
      << "\n";
  return r.ok();
}

inline void add_pipeline_flags(CLI::App& app, CliConfig& c) {
  auto& p = c.pipeline;
  app.add_option("--uv-res", p.uv_resolution, "UV atlas resolution")->capture_default_str();
  app.add_option("--view-res", p.view_resolution, "generated view resolution")->capture_default_str();
  app.add_option("--rho", p.rho, "target texel coverage")->capture_default_str();
  app.add_option("--max-extra-views", p.max_extra_views, "greedy view budget N")->capture_default_str();
  app.add_option("--candidates", p.candidate_count, "candidate viewpoints on the sphere")->capture_default_str();
  app.add_option("--group-size", p.group_size, "views per inference group")->capture_default_str();
  app.add_option("--lambda", p.lambda, "cosine weight exponent")->capture_default_str();
  app.add_option("--tau", p.tau, "coverage weight threshold")->capture_default_str();
  app.add_option("--seed", p.seed, "random seed")->capture_default_str();
  app.add_option("--target-fill", p.target_fill, "fraction of the frame the object fills")->capture_default_str();
  app.add_option("--min-view-cosine", p.min_view_cosine, "cosine floor for greedy gain")->capture_default_str();
  app.add_option("--selection-scale", p.selection_scale, "image scale for greedy simulation")
      ->capture_default_str();
  app.add_option("--dilation", p.dilation_radius, "export dilation radius in texels")->capture_default_str();
  app.add_flag("--no-dilation", c.no_dilation, "disable export dilation");
  app.add_option("--cosine-mode", c.cosine_mode, "per-texel or forward-axis")
      ->check(CLI::IsMember({"per-texel", "forward-axis"}))
      ->capture_default_str();
  app.add_option("--threads", c.threads, "worker thread cap (0 = MATMART_THREADS or hardware)")
      ->capture_default_str();
}

inline void add_scene_flags(CLI::App& app, CliConfig& c) {
  app.add_option("--scene", c.scene_dir, "scene directory written by scene-gen");
  app.add_option("--mesh", c.mesh, "OBJ mesh with uvs and normals");
  app.add_option("--cameras", c.cameras, "cameras JSON");
  app.add_option("--gt-albedo", c.gt_albedo, "ground-truth albedo texture");
  app.add_option("--gt-rm", c.gt_rm, "ground-truth roughness/metallic texture");
}

// Parses and runs one command line. Output goes to `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CliConfig c;
  CLI::App app{"matmart: PBR material reconstruction on UV-mapped meshes"};
  app.require_subcommand(1);
  app.add_option("--log-level", c.log_level, "trace, debug, info, warn, error, off")->capture_default_str();

  auto* rec = app.add_subcommand("reconstruct", "run both stages and write the material atlas");
  add_pipeline_flags(*rec, c);
  add_scene_flags(*rec, c);
  rec->add_option("--images", c.images, "input images, one per camera in order");
  rec->add_option("--output,-o", c.output, "output directory");
  rec->add_option("--predictor", c.predictor, "oracle, noisy-oracle or toy")
      ->check(CLI::IsMember({"oracle", "noisy-oracle", "toy"}))
      ->capture_default_str();
  rec->add_option("--predictor-seed", c.predictor_seed, "seed of the noisy or toy predictor")->capture_default_str();
  rec->add_option("--reference-policy", c.reference_policy, "first, previous or none")
      ->check(CLI::IsMember({"first", "previous", "none"}))
      ->capture_default_str();

  auto* gen = app.add_subcommand("scene-gen", "write a synthetic cube or sphere fixture");
  add_pipeline_flags(*gen, c);
  gen->add_option("--output,-o", c.output, "output directory");
  gen->add_option("--shape", c.shape, "cube or sphere")->check(CLI::IsMember({"cube", "sphere"}))->capture_default_str();
  gen->add_option("--pattern", c.pattern, "checker or gradient")
      ->check(CLI::IsMember({"checker", "gradient"}))
      ->capture_default_str();
  gen->add_option("--checker", c.checker, "checker cells per side")->capture_default_str();
  gen->add_option("--texture-res", c.texture_res, "ground-truth texture resolution")->capture_default_str();
  gen->add_option("--views", c.views, "number of input views")->capture_default_str();
  gen->add_flag("--lambertian", c.lambertian, "shade inputs with a headlight");

  auto* sel = app.add_subcommand("select-views", "greedy next-best-view selection against an atlas");
  add_pipeline_flags(*sel, c);
  add_scene_flags(*sel, c);
  sel->add_option("--atlas", c.atlas, "atlas directory (default: empty atlas)");
  sel->add_flag("--with-base-views", c.with_base_views, "count the six axis views before selecting");

  auto* bake = app.add_subcommand("bake", "blend one material view into an atlas on disk");
  add_pipeline_flags(*bake, c);
  add_scene_flags(*bake, c);
  bake->add_option("--atlas", c.atlas, "atlas directory, created when missing");
  bake->add_option("--albedo", c.view_albedo, "view-space albedo image");
  bake->add_option("--rm", c.view_rm, "view-space roughness/metallic image");
  bake->add_option("--view", c.view_name, "camera name in the cameras file");

  auto* eval = app.add_subcommand("evaluate", "compare an atlas with ground-truth textures");
  add_pipeline_flags(*eval, c);
  add_scene_flags(*eval, c);
  eval->add_option("--atlas", c.atlas, "atlas directory");
  eval->add_option("--space", c.space, "uv or view")->check(CLI::IsMember({"uv", "view"}))->capture_default_str();

  auto* vm = app.add_subcommand("vmca-check", "run the attention kernel checks");
  vm->add_option("--batches", c.batches, "random batches")->capture_default_str();
  vm->add_option("--seed", c.pipeline.seed, "random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kExitValidation;
  }

  spdlog::set_level(spdlog::level::from_str(c.log_level));
  try {
    if (*rec) {
      cmd_reconstruct(c, out);
    } else if (*gen) {
      cmd_scene_gen(c, out);
    } else if (*sel) {
      cmd_select_views(c, out);
    } else if (*bake) {
      cmd_bake(c, out);
    } else if (*eval) {
      cmd_evaluate(c, out);
    } else if (*vm) {
      return cmd_vmca_check(c, out) ? kExitOk : kExitRuntime;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    if (std::string_view(e.what()).starts_with("missing ")) err << "run with --help for usage\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"matmart"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace matmart::cli
