#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "matmart/cli.hpp"
#include "support/oracles.hpp"

using namespace matmart;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small scene shared by the tests of this file.
const fs::path& scene_dir() {
  static const fs::path dir = [] {
    const auto d = oracle::temp_dir("cli_scene");
    const auto r = run({"scene-gen", "--output", d.string(), "--view-res", "96", "--texture-res", "128"});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

const std::vector<std::string> kSmall{"--uv-res", "128", "--view-res", "96", "--candidates", "40"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST(Cli, HelpListsDefaults) {
  const auto r = run({"reconstruct", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* s : {"--uv-res", "1024", "--view-res", "512", "--rho", "0.95", "--max-extra-views", "10",
                        "--candidates", "300", "--group-size", "3", "--lambda", "6", "--tau", "0.001", "--seed"}) {
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  }
}

TEST(Cli, BinaryPrintsHelp) {
  const std::string cmd = std::string(MATMART_CLI_PATH) + " --help";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string text;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) text += buf;
  EXPECT_EQ(pclose(pipe), 0);
  for (const char* s : {"reconstruct", "scene-gen", "select-views", "bake", "evaluate", "vmca-check"}) {
    EXPECT_NE(text.find(s), std::string::npos) << s;
  }
}

TEST(Cli, MissingMeshIsAUsageError) {
  const auto out = oracle::temp_dir("cli_missing_mesh");
  const auto r = run({"reconstruct", "--output", out.string(), "--cameras", "x.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--mesh"), std::string::npos);
  EXPECT_NE(r.err.find("--help"), std::string::npos);
  EXPECT_EQ(run({"reconstruct", "--bogus"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST(Cli, MeshWithoutUvsNamesTheFace) {
  const auto dir = oracle::temp_dir("cli_no_uv");
  std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n";
  const auto r = run({"reconstruct", "--mesh", (dir / "bad.obj").string(), "--cameras",
                      (scene_dir() / "cameras.json").string(), "--output", (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("face 1"), std::string::npos) << r.err;
  fs::remove_all(dir);
}

TEST(Cli, OracleReconstructionWritesOutputs) {
  const auto out = oracle::temp_dir("cli_reconstruct");
  const auto r = run(with_small({"reconstruct", "--scene", scene_dir().string(), "--output", out.string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(out)) files += e.is_regular_file();
  EXPECT_EQ(files, 5u);
  for (const char* f : {"albedo.png", "rm.png", "weights.png", "atlas.json", "report.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto report = nlohmann::json::parse(read_text_file(out / "report.json"));
  EXPECT_GE(report.at("final_coverage").get<double>(), 0.95);
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_TRUE(summary.contains("final_coverage"));

  const auto e = run({"evaluate", "--scene", scene_dir().string(), "--atlas", out.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto m = nlohmann::json::parse(e.out);
  for (const char* k : {"si_psnr_albedo", "ssim_albedo", "mse_roughness", "mse_metallic", "coverage"}) {
    EXPECT_TRUE(m.contains(k)) << k;
  }
  const auto direct = evaluate_atlas(load_atlas(out), load_image(scene_dir() / "gt_albedo.png", 3),
                                     load_image(scene_dir() / "gt_rm.png", 2), load_mesh(scene_dir() / "mesh.obj"), 1e-3);
  EXPECT_DOUBLE_EQ(m.at("si_psnr_albedo").get<double>(), direct.si_psnr_albedo);
  EXPECT_DOUBLE_EQ(m.at("mse_metallic").get<double>(), direct.mse_metallic);
  const auto v = run({"evaluate", "--scene", scene_dir().string(), "--atlas", out.string(), "--space", "view"});
  ASSERT_EQ(v.code, 0) << v.err;
  EXPECT_TRUE(nlohmann::json::parse(v.out).contains("ssim_albedo"));
  fs::remove_all(out);
}

TEST(Cli, UnknownPredictorAndBadValuesAreRejected) {
  const auto out = oracle::temp_dir("cli_bad_values");
  EXPECT_EQ(run({"reconstruct", "--scene", scene_dir().string(), "--output", out.string(), "--predictor", "magic"}).code, 1);
  EXPECT_EQ(run({"reconstruct", "--scene", scene_dir().string(), "--output", out.string(), "--rho", "1.5"}).code, 1);
  EXPECT_EQ(run({"reconstruct", "--scene", scene_dir().string(), "--output", out.string(), "--images", "a.png"}).code, 1);
  fs::remove_all(out);
}

TEST(Cli, SceneGenIsDeterministic) {
  const auto a = oracle::temp_dir("cli_scene_a");
  const auto b = oracle::temp_dir("cli_scene_b");
  for (const auto& d : {a, b}) {
    ASSERT_EQ(run({"scene-gen", "--output", d.string(), "--view-res", "64", "--texture-res", "64", "--shape", "sphere"}).code, 0);
  }
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(oracle::read_bytes(e.path()), oracle::read_bytes(b / e.path().filename())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 7u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SceneImagesMatchReRendering) {
  const auto mesh = load_mesh(scene_dir() / "mesh.obj");
  const auto gt = load_image(scene_dir() / "gt_albedo.png", 3);
  const auto cams = load_cameras(scene_dir() / "cameras.json");
  ASSERT_EQ(cams.size(), 3u);
  for (const auto& c : cams) {
    const auto img = load_image(scene_dir() / (c.name + ".png"), 3);
    const auto again = render_input_image(mesh, gt, c.camera, false);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < img.values().size(); ++i) bad += std::abs(img.values()[i] - again.values()[i]) > 2.0 / 255;
    EXPECT_EQ(bad, 0u) << c.name;
  }
}

TEST(Cli, SelectViewsOnCoveredAtlasSelectsNothing) {
  const auto dir = oracle::temp_dir("cli_select");
  auto atlas = UVMaterialAtlas::empty(64);
  atlas.weights.fill(1.0);
  save_atlas(atlas, dir / "atlas");
  const auto r = run({"select-views", "--scene", scene_dir().string(), "--atlas", (dir / "atlas").string(),
                      "--candidates", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.at("selected").empty());
  EXPECT_EQ(j.at("initial_coverage").get<double>(), 1.0);

  const auto e = run(with_small({"select-views", "--scene", scene_dir().string(), "--max-extra-views", "3"}));
  ASSERT_EQ(e.code, 0) << e.err;
  const auto je = nlohmann::json::parse(e.out);
  EXPECT_EQ(je.at("selected").size(), 3u);
  const auto wb = run(with_small({"select-views", "--scene", scene_dir().string(), "--with-base-views"}));
  ASSERT_EQ(wb.code, 0) << wb.err;
  EXPECT_LT(nlohmann::json::parse(wb.out).at("selected").size(), 10u);
  fs::remove_all(dir);
}

TEST(Cli, BakingTheSameViewTwiceIsStable) {
  const auto dir = oracle::temp_dir("cli_bake");
  const auto mesh = load_mesh(scene_dir() / "mesh.obj");
  const auto cams = load_cameras(scene_dir() / "cameras.json");
  OraclePredictor p(mesh, load_image(scene_dir() / "gt_albedo.png", 3), load_image(scene_dir() / "gt_rm.png", 2));
  const auto view = p.render(cams[0].camera);
  save_png(dir / "a.png", view.albedo);
  save_png(dir / "rm.png", view.rm);
  const std::vector<std::string> args{"bake",   "--scene", scene_dir().string(), "--atlas", (dir / "atlas").string(),
                                      "--albedo", (dir / "a.png").string(), "--rm", (dir / "rm.png").string(),
                                      "--view", cams[0].name, "--uv-res", "128"};
  ASSERT_EQ(run(args).code, 0);
  const auto first = load_atlas(dir / "atlas");
  EXPECT_GT(first.max_weight(), 0.0);
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto second = load_atlas(dir / "atlas");
  double worst = 0.0;
  for (std::size_t i = 0; i < first.albedo.values().size(); ++i) {
    worst = std::max(worst, std::abs(first.albedo.values()[i] - second.albedo.values()[i]));
  }
  for (std::size_t i = 0; i < first.rm.values().size(); ++i) {
    worst = std::max(worst, std::abs(first.rm.values()[i] - second.rm.values()[i]));
  }
  EXPECT_LE(worst, 1e-5);
  auto bad = args;
  bad[10] = "nope";
  EXPECT_EQ(run(bad).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, VmcaCheckPasses) {
  const auto r = run({"vmca-check", "--batches", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("oracle").at("pass"), 10);
  EXPECT_EQ(j.at("gradient").at("pass"), 10);
  EXPECT_EQ(j.at("memory").at("pass"), j.at("memory").at("total"));
}
