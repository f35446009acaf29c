#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "stsr/pipeline.hpp"
#include "test_support.hpp"

namespace stsr {
namespace {

namespace fs = std::filesystem;

// A pipeline small enough to run in seconds.
ExperimentConfig tiny_experiment() {
  auto cfg = ExperimentConfig::desk();
  auto& scene = cfg.dataset.synthetic->scene;
  scene.hr_size = 32;
  scene.scale_factor = 4;
  scene.n_timesteps = 3;
  scene.max_building_size = 8;
  cfg.dataset.synthetic->n_aois = 3;
  cfg.dataset.train_count = 2;
  cfg.dataset.test_count = 1;
  cfg.sr.generator = GeneratorConfig::tiny();
  cfg.sr.generator.patch_size = 16;
  cfg.sr.train.max_steps = 2;
  cfg.sr.train.batch_size = 1;
  cfg.tracker.config.enlarge = 1;
  cfg.tracker.config.patch = 32;
  cfg.tracker.config.widths = {4, 8};
  cfg.tracker.train.max_steps = 2;
  cfg.tracker.train.batch_size = 2;
  return cfg;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

TEST(Variants, Presets) {
  EXPECT_EQ(variant_weights("ead", LossWeights{}).lambda2, 0.0);
  EXPECT_EQ(variant_weights("ead-lpips", LossWeights{}).lambda2, 10.0);
  EXPECT_EQ(variant_weights("ead-lpips", LossWeights{}).lambda1, 100.0);
  EXPECT_EQ(variant_generator("pix2pix", GeneratorConfig::desk()).variant, GeneratorVariant::Pix2Pix);
  EXPECT_EQ(variant_generator("ead", GeneratorConfig::desk()).variant, GeneratorVariant::Ead);
  EXPECT_THROW(require_variant("srgan"), ValidationError);
}

TEST(ExperimentConfig, PresetsValidateAndRoundTrip) {
  for (const auto& name : {"desk", "paper"}) {
    auto cfg = ExperimentConfig::preset_named(name);
    EXPECT_NO_THROW(cfg.validate());
    auto j = cfg.to_json();
    EXPECT_EQ(ExperimentConfig::from_json(j).to_json(), j);
  }
  EXPECT_THROW(ExperimentConfig::preset_named("laptop"), ValidationError);
  auto desk = ExperimentConfig::desk();
  EXPECT_EQ(desk.dataset.synthetic->scene.hr_size, 64);
  EXPECT_EQ(desk.dataset.synthetic->scene.scale_factor, 8);
  EXPECT_EQ(desk.dataset.synthetic->scene.n_timesteps, 8);
  EXPECT_EQ(desk.dataset.train_count, 10u);
  EXPECT_EQ(desk.dataset.test_count, 3u);
  EXPECT_EQ(ExperimentConfig::paper().sr.generator.patch_size, 256);
}

TEST(ExperimentConfig, PartialJsonKeepsBase) {
  auto j = nlohmann::json::parse(R"({"seed": 9, "sr": {"variants": ["ead", "pix2pix"]},
                                     "evaluation": {"sources": ["hr", "lr", "ead"], "ours": "ead"}})");
  auto cfg = ExperimentConfig::from_json(j);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.sr.variants, (std::vector<std::string>{"ead", "pix2pix"}));
  EXPECT_EQ(cfg.sr.train.max_steps, ExperimentConfig::desk().sr.train.max_steps);
  // Sources must name a trained variant.
  j["evaluation"]["sources"] = {"hr", "ead-lpips"};
  EXPECT_THROW(ExperimentConfig::from_json(j), ValidationError);
}

TEST(ConfigHash, StableAndSensitive) {
  auto a = tiny_experiment().to_json();
  EXPECT_EQ(config_hash(a), config_hash(tiny_experiment().to_json()));
  auto b = a;
  b["seed"] = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  // FNV-1a 64 of the empty string is the offset basis.
  EXPECT_EQ(hex(0xcbf29ce484222325ULL), "cbf29ce484222325");
  EXPECT_EQ(hex(config_hash(nlohmann::json(""))), hex(config_hash(nlohmann::json(""))));
}

TEST(RunPipeline, UnknownVariantFailsBeforeAnyStage) {
  auto dir = testing::scratch_dir("pipe_bad");
  auto cfg = tiny_experiment();
  cfg.sr.variants = {"srgan"};
  EXPECT_THROW(run_pipeline(cfg, dir / "run"), ValidationError);
  EXPECT_FALSE(fs::exists(dir / "run" / "manifest.json"));
  cfg = tiny_experiment();
  cfg.evaluation.sources = {"hr", "dbpn"};
  EXPECT_THROW(run_pipeline(cfg, dir / "run"), ValidationError);
}

TEST(RunPipeline, FullRunCacheAndInvalidation) {
  auto dir = testing::scratch_dir("pipe_run");
  const auto run = dir / "run";
  auto cfg = tiny_experiment();
  auto first = run_pipeline(cfg, run);
  EXPECT_TRUE(first.skipped.empty());
  for (const auto& stage : {"data", "split", "train-sr/ead-lpips", "generate/ead-lpips",
                            "train-tracker/hr", "track/hr", "track/lr", "track/ead-lpips",
                            "evaluate/ead-lpips", "compare"}) {
    EXPECT_TRUE(contains(first.executed, stage)) << stage;
  }
  EXPECT_TRUE(fs::exists(run / "manifest.json"));
  EXPECT_TRUE(fs::exists(run / "sr" / "ead-lpips" / "model.ckpt"));
  EXPECT_TRUE(fs::exists(run / "sr" / "ead-lpips" / "train_log.csv"));
  EXPECT_TRUE(fs::exists(run / "tracker" / "hr" / "model.ckpt"));
  EXPECT_TRUE(fs::exists(run / "report.json"));
  EXPECT_TRUE(fs::exists(run / "report.txt"));
  EXPECT_FALSE(fs::is_empty(run / "figures"));

  auto report = nlohmann::json::parse(std::ifstream(run / "report.json"));
  EXPECT_EQ(report["order"].size(), 3u);
  for (const auto& [name, r] : report["sources"].items()) {
    for (const auto* key : {"acc", "iou", "fwiou", "ts"}) {
      EXPECT_GE(r[key].get<double>(), 0.0) << name;
      EXPECT_LE(r[key].get<double>(), 1.0) << name;
    }
  }

  auto again = run_pipeline(cfg, run);
  EXPECT_TRUE(again.executed.empty());
  EXPECT_EQ(again.skipped.size(), first.executed.size());

  // A tracker change reruns the tracker and everything downstream of it only.
  cfg.tracker.train.max_steps = 3;
  auto third = run_pipeline(cfg, run);
  EXPECT_TRUE(contains(third.skipped, "train-sr/ead-lpips"));
  EXPECT_TRUE(contains(third.skipped, "generate/ead-lpips"));
  EXPECT_TRUE(contains(third.executed, "train-tracker/hr"));
  EXPECT_TRUE(contains(third.executed, "track/lr"));
  EXPECT_TRUE(contains(third.executed, "compare"));

  // Deleting an output forces that stage and its dependents to rerun.
  fs::remove_all(run / "images");
  auto fourth = run_pipeline(cfg, run);
  EXPECT_TRUE(contains(fourth.skipped, "train-sr/ead-lpips"));
  EXPECT_TRUE(contains(fourth.executed, "generate/ead-lpips"));
  EXPECT_TRUE(contains(fourth.executed, "track/ead-lpips"));
  EXPECT_TRUE(contains(fourth.skipped, "track/hr"));
}

TEST(RunPipeline, StageFailureNamesStageAndKeepsLog) {
  auto dir = testing::scratch_dir("pipe_fail");
  auto cfg = tiny_experiment();
  cfg.evaluation.external["srgan"] = dir / "does_not_exist";
  cfg.evaluation.sources = {"hr", "srgan"};
  try {
    run_pipeline(cfg, dir / "run");
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'track/srgan'"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(dir / "run" / "logs" / "track_srgan.log"));
}

TEST(CompareSources, SelfEvaluationAndOrdering) {
  auto dir = testing::scratch_dir("pipe_cmp");
  const auto run = dir / "run";
  auto cfg = tiny_experiment();
  run_pipeline(cfg, run);

  // Predictions equal to the labels score perfectly.
  auto split = nlohmann::json::parse(std::ifstream(run / "split.json"));
  fs::create_directories(run / "labels_as_pred");
  for (const auto& id : split["test"]) {
    auto rec = load_aoi(run / "data" / id.get<std::string>());
    write_geojson(run / "labels_as_pred" / (id.get<std::string>() + ".geojson"), *rec.labels);
  }
  auto self = evaluate_run(run / "labels_as_pred", run / "data");
  EXPECT_EQ(self.ts, 1.0);

  auto cmp = compare_sources(cfg, run);
  EXPECT_EQ(cmp.rows.size(), 3u);
  EXPECT_EQ(cmp.ours, "ead-lpips");
  const auto ts = [&](const std::string& name) {
    for (const auto& [n, r] : cmp.rows) {
      if (n == name) return r.ts;
    }
    return -1.0;
  };
  EXPECT_EQ(cmp.hr_ge_ours, ts("hr") >= ts("ead-lpips"));
  EXPECT_EQ(cmp.ours_gt_lr, ts("ead-lpips") > ts("lr"));
  const auto table = cmp.table();
  EXPECT_NE(table.find("hr"), std::string::npos);
  EXPECT_NE(table.find("lr"), std::string::npos);

  // A source without a report is listed as missing, the rest proceed.
  fs::remove_all(run / "reports" / "lr");
  auto partial = compare_sources(cfg, run);
  EXPECT_EQ(partial.rows.size(), 2u);
  EXPECT_EQ(partial.missing, std::vector<std::string>{"lr"});
}

TEST(PanelFigure, Shape) {
  auto s = testing::constant_series("a", 2, 3, 8, 8);
  FootprintSet labels{{testing::building("g", testing::rect(1, 1, 4, 4), 0)}};
  auto fig = panel_figure({s, s}, {labels, {}}, labels, 2);
  EXPECT_EQ(fig.size(0), 3);
  EXPECT_EQ(fig.size(1), 16);
  EXPECT_GE(fig.size(2), 32);
  EXPECT_THROW(panel_figure({s, s}, {labels}, labels, 2), ValidationError);
}

}  // namespace
}  // namespace stsr
