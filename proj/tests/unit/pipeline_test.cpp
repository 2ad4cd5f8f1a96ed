#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cpr/npy.hpp"
#include "cpr/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Relative path -> contents of every regular file under `root`.
std::map<std::string, std::string> snapshot(const fs::path& root, const std::string& extension = "") {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (!extension.empty() && e.path().extension() != extension) continue;
    out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cpr_pipeline_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

cpr::PipelineConfig small_config() {
  cpr::PipelineConfig cfg;
  cfg.seed = 5;
  cfg.synth.count = 3;
  cfg.synth.height = 32;
  cfg.synth.width = 32;
  cfg.head.epochs = 3;
  cfg.adapt.epochs = 2;
  return cfg;
}

int run_cli(const std::string& args, const fs::path& err) {
  const std::string cmd = std::string(CPR_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, RunAllEqualsStageByStage) {
  const auto cfg = small_config();
  const fs::path a = fresh_dir("all"), b = fresh_dir("stages");
  cpr::stage::run_all(cfg, std::nullopt, a);

  const fs::path corpus = b / "corpus";
  cpr::stage::synth(cfg, corpus);
  cpr::stage::pseudo_label(cfg, corpus, b);
  cpr::stage::train_head(cfg, corpus, b);
  cpr::stage::refine(cfg, corpus, b);
  cpr::stage::denoise(cfg, corpus, b);
  cpr::stage::adapt(cfg, corpus, b);
  cpr::stage::evaluate(cfg, corpus, b);

  const auto left = snapshot(a), right = snapshot(b);
  ASSERT_EQ(left.size(), right.size());
  for (const auto& [path, bytes] : left) {
    ASSERT_TRUE(right.count(path)) << path;
    EXPECT_TRUE(bytes == right.at(path)) << path;
  }
}

TEST(Pipeline, ThreadCountDoesNotChangeOutputs) {
  auto cfg = small_config();
  const fs::path a = fresh_dir("one_thread"), b = fresh_dir("three_threads");
  cpr::stage::run_all(cfg, std::nullopt, a);
  cfg.threads = 3;
  cpr::stage::run_all(cfg, std::nullopt, b);
  const auto left = snapshot(a, ".npy"), right = snapshot(b, ".npy");
  ASSERT_EQ(left.size(), right.size());
  for (const auto& [path, bytes] : left) EXPECT_TRUE(bytes == right.at(path)) << path;
}

TEST(Pipeline, ManifestsListEveryArray) {
  const auto cfg = small_config();
  const fs::path work = fresh_dir("manifests");
  cpr::stage::run_all(cfg, std::nullopt, work);

  std::set<std::string> listed;
  auto collect = [&](const fs::path& manifest_dir, const fs::path& root) {
    for (const auto& e : fs::directory_iterator(manifest_dir)) {
      const auto j = nlohmann::json::parse(slurp(e.path()));
      EXPECT_TRUE(j.contains("stage_seed"));
      EXPECT_TRUE(j.contains("config"));
      for (const auto& out : j["outputs"]) {
        EXPECT_EQ(out["fnv1a64"].get<std::string>().size(), 16u);
        listed.insert((root / out["path"].get<std::string>()).lexically_normal().generic_string());
      }
    }
  };
  collect(work / "manifests", work);
  collect(work / "corpus" / "manifests", work / "corpus");
  for (const auto& e : fs::recursive_directory_iterator(work)) {
    if (e.path().extension() != ".npy") continue;
    EXPECT_TRUE(listed.count(e.path().lexically_normal().generic_string())) << e.path();
  }
  for (const char* stage : {"pseudo-label", "train-head", "refine", "denoise", "adapt", "evaluate"}) {
    EXPECT_TRUE(fs::exists(work / "manifests" / (std::string(stage) + ".json"))) << stage;
  }
}

TEST(Pipeline, ReportHasEveryLabelSet) {
  const auto cfg = small_config();
  const fs::path work = fresh_dir("report");
  const auto report = cpr::stage::run_all(cfg, std::nullopt, work);
  EXPECT_EQ(report["image_count"], 3);
  for (const char* set : {"initial", "refined", "adapted"}) {
    ASSERT_TRUE(report["mean"].contains(set)) << set;
    EXPECT_TRUE(report["mean"][set]["cup"]["dice"].is_number());
    EXPECT_TRUE(report["mean"][set]["disc"]["dice"].is_number());
  }
  EXPECT_EQ(report["images"].size(), 3u);
  EXPECT_EQ(nlohmann::json::parse(slurp(work / "evaluate" / "report.json")), report);
}

TEST(Pipeline, InMemoryRunMatchesFiles) {
  const auto cfg = small_config();
  const fs::path work = fresh_dir("in_memory");
  cpr::stage::run_all(cfg, std::nullopt, work);
  std::vector<cpr::ImageData> images;
  for (std::size_t i = 0; i < cfg.synth.count; ++i) images.push_back(cpr::synthesize_image(cfg, i));
  const auto run = cpr::run_pipeline(cfg, images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto refined = cpr::load_tensor(work / "refine" / images[i].id / "prob.npy");
    EXPECT_TRUE(cpr::bitwise_equal(refined, run.refined[i].calibrated.tensor())) << images[i].id;
    const auto pred = cpr::load_tensor(work / "adapt" / images[i].id / "pred.npy");
    EXPECT_TRUE(cpr::bitwise_equal(pred, run.predictions[i].tensor())) << images[i].id;
  }
}

TEST(Pipeline, LoadImageRejectsMismatchedShapes) {
  const auto cfg = small_config();
  const fs::path corpus = fresh_dir("bad_corpus");
  cpr::stage::synth(cfg, corpus);
  cpr::save_tensor(cpr::Tensor(cpr::Shape{4, 4, 8}), corpus / "img_001" / "feat_l.npy");
  try {
    cpr::load_image(corpus, "img_001");
    FAIL() << "expected a shape error";
  } catch (const cpr::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("feat_l.npy"), std::string::npos) << e.what();
  }
}

TEST(Cli, UnknownConfigKeyFails) {
  const fs::path dir = fresh_dir("cli_config");
  std::ofstream(dir / "bad.ini") << "[refine]\nbetta = 2\n";
  const int code = run_cli("run-all --config " + (dir / "bad.ini").string() + " --out " + (dir / "work").string(),
                           dir / "err.txt");
  EXPECT_EQ(code, 2);
  const auto err = nlohmann::json::parse(slurp(dir / "err.txt"));
  EXPECT_EQ(err["error"]["kind"], "config");
  EXPECT_NE(err["error"]["message"].get<std::string>().find("refine.betta"), std::string::npos);
}

TEST(Cli, EvaluateIdenticalMasks) {
  const fs::path dir = fresh_dir("cli_eval");
  cpr::Tensor mask(cpr::Shape{8, 8, 2});
  for (std::size_t y = 2; y < 6; ++y) {
    for (std::size_t x = 2; x < 6; ++x) mask[(y * 8 + x) * 2] = mask[(y * 8 + x) * 2 + 1] = 1.0f;
  }
  cpr::save_tensor(mask, dir / "a.npy");
  const std::string cmd = std::string(CPR_CLI_PATH) + " evaluate --pred " + (dir / "a.npy").string() + " --truth " +
                          (dir / "a.npy").string() + " > " + (dir / "out.json").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto j = nlohmann::json::parse(slurp(dir / "out.json"));
  EXPECT_EQ(j["cup"]["dice"], 100.0);
  EXPECT_EQ(j["cup"]["asd"], 0.0);
  EXPECT_EQ(j["disc"]["dice"], 100.0);
}

TEST(Cli, MissingInputNamesTheFile) {
  const fs::path dir = fresh_dir("cli_missing");
  fs::create_directories(dir / "corpus" / "img_000");
  const int code = run_cli("pseudo-label --in " + (dir / "corpus").string() + " --out " + (dir / "work").string(),
                           dir / "err.txt");
  EXPECT_NE(code, 0);
  const auto err = nlohmann::json::parse(slurp(dir / "err.txt"));
  EXPECT_NE(err["error"]["message"].get<std::string>().find("probs.npy"), std::string::npos) << err.dump();
}
