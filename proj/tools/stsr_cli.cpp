// Command-line front end: one subcommand per pipeline stage plus `run`.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stsr/dataset.hpp"
#include "stsr/generator.hpp"
#include "stsr/metrics.hpp"
#include "stsr/patch_inference.hpp"
#include "stsr/pipeline.hpp"
#include "stsr/tracker.hpp"
#include "stsr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stsr;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string preset = "desk";
  bool preset_given = false;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    std::ifstream in(g.config);
    if (!in) throw ValidationError("cannot read config " + g.config);
    const auto j = json::parse(in);
    const auto base = g.preset_given ? g.preset : j.value("preset", g.preset);
    cfg = ExperimentConfig::from_json(j, ExperimentConfig::preset_named(base));
  } else {
    cfg = ExperimentConfig::preset_named(g.preset);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.deterministic) cfg.deterministic = true;
  if (cfg.deterministic) at::set_num_threads(1);
  return cfg;
}

std::vector<std::string> aois_or_all(const std::vector<std::string>& aois, const fs::path& root) {
  return aois.empty() ? list_aois(root) : aois;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-temporal super-resolution and building tracking"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s; }, "Random seed");
  (void)seed_opt;
  app.add_flag("--deterministic", g.deterministic, "Single-threaded, seed-determined execution");
  app.add_option_function<std::string>(
         "--preset",
         [&](const std::string& p) {
           g.preset = p;
           g.preset_given = true;
         },
         "Hyperparameter preset")
      ->check(CLI::IsMember({"paper", "desk"}));

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  fs::path synth_out;
  std::optional<std::size_t> n_aois;
  synth->add_option("--out", synth_out, "Dataset root")->required();
  synth->add_option_function<std::size_t>("--n-aois", [&](std::size_t n) { n_aois = n; },
                                          "Number of AOIs");
  synth->callback([&] {
    const auto cfg = resolve(g);
    auto spec = cfg.dataset.synthetic.value_or(SyntheticDatasetSpec{});
    spec.scene.seed = cfg.seed;
    if (n_aois) spec.n_aois = *n_aois;
    const auto ids = write_synthetic_dataset(synth_out, spec);
    std::cout << "wrote " << ids.size() << " AOIs to " << synth_out << '\n';
  });

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate an AOI dataset and copy it");
  fs::path ingest_src, ingest_out;
  ingest->add_option("--src", ingest_src, "Source dataset root")->required()->check(
      CLI::ExistingDirectory);
  ingest->add_option("--out", ingest_out, "Destination root")->required();
  ingest->callback([&] {
    const auto cfg = resolve(g);
    json summary = json::array();
    std::size_t total_pairs = 0;
    for (const auto& id : list_aois(ingest_src)) {
      auto rec = load_aoi(ingest_src / id);
      validate(rec.hr);
      validate(rec.lr);
      if (rec.labels) validate(*rec.labels, static_cast<int>(rec.hr.size()));
      const auto aligned = align_usable(rec, cfg.dataset.occlusion_threshold);
      const auto k = aligned.lr.size();
      total_pairs += k;
      write_aoi(ingest_out / id, rec);
      summary.push_back({{"aoi_id", id},
                         {"hr_frames", rec.hr.size()},
                         {"lr_frames", rec.lr.size()},
                         {"usable_pairs", k},
                         {"labelled", rec.labels.has_value()}});
    }
    std::ofstream(ingest_out / "ingest.json") << summary.dump(2) << '\n';
    std::cout << summary.size() << " AOIs, " << total_pairs << " usable LR-HR pairs\n";
  });

  // pair
  auto* pair = app.add_subcommand("pair", "List training and inference pairs");
  fs::path pair_data, pair_out;
  std::vector<std::string> pair_aois;
  pair->add_option("--data", pair_data, "Dataset root")->required()->check(
      CLI::ExistingDirectory);
  pair->add_option("--aois", pair_aois, "AOI ids (default: all)")->delimiter(',');
  pair->add_option("--out", pair_out, "Output JSON (default: stdout)");
  pair->callback([&] {
    const auto cfg = resolve(g);
    json out = json::object();
    for (const auto& id : aois_or_all(pair_aois, pair_data)) {
      const auto rec = load_aoi(pair_data / id);
      const auto aligned = align_usable(rec, cfg.dataset.occlusion_threshold);
      json train = json::array(), infer = json::array();
      if (aligned.lr.size() >= 2) {
        for (const auto& s : make_training_pairs(aligned.lr, aligned.hr)) {
          train.push_back({{"target_month", s.lr_target.timestamp},
                           {"reference_month", s.hr_reference.timestamp},
                           {"time", s.time}});
        }
      }
      const auto lr = filter_usable(rec.lr, rec.lr_occlusion(), cfg.dataset.occlusion_threshold);
      const auto hr = filter_usable(rec.hr, rec.hr_occlusion(), cfg.dataset.occlusion_threshold);
      for (const auto& s : make_inference_pairs(lr, hr.frames.back())) {
        infer.push_back({{"target_month", s.lr_target.timestamp},
                         {"reference_month", s.hr_reference.timestamp},
                         {"time", s.time}});
      }
      out[id] = {{"training", train}, {"inference", infer}};
    }
    if (pair_out.empty()) {
      print_json(out);
    } else {
      std::ofstream(pair_out) << out.dump(2) << '\n';
    }
  });

  // train-sr
  auto* train_sr_cmd = app.add_subcommand("train-sr", "Train the super-resolution model");
  fs::path sr_data, sr_out;
  std::vector<std::string> sr_aois;
  std::string variant = "ead-lpips";
  std::optional<double> lambda1, lambda2;
  std::optional<int> sr_steps, sr_batch;
  train_sr_cmd->add_option("--data", sr_data, "Dataset root")->required()->check(
      CLI::ExistingDirectory);
  train_sr_cmd->add_option("--out", sr_out, "Output directory")->required();
  train_sr_cmd->add_option("--aois", sr_aois, "Training AOI ids (default: all)")->delimiter(',');
  train_sr_cmd->add_option("--variant", variant, "Generator/objective variant")
      ->check(CLI::IsMember(kSrVariants));
  train_sr_cmd->add_option_function<double>("--lambda1", [&](double v) { lambda1 = v; },
                                            "L1 weight");
  train_sr_cmd->add_option_function<double>("--lambda2", [&](double v) { lambda2 = v; },
                                            "Perceptual weight");
  train_sr_cmd->add_option_function<int>("--steps", [&](int v) { sr_steps = v; },
                                         "Training steps");
  train_sr_cmd->add_option_function<int>("--batch", [&](int v) { sr_batch = v; }, "Batch size");
  train_sr_cmd->callback([&] {
    const auto cfg = resolve(g);
    const auto gcfg = variant_generator(variant, cfg.sr.generator);
    auto weights = variant_weights(variant, cfg.sr.weights);
    if (lambda1) weights.lambda1 = *lambda1;
    if (lambda2) weights.lambda2 = *lambda2;
    auto tc = cfg.sr.train;
    if (sr_steps) tc.max_steps = *sr_steps;
    if (sr_batch) tc.batch_size = *sr_batch;
    tc.seed = cfg.seed;
    tc.deterministic = cfg.deterministic;
    tc.log_csv = sr_out / "train_log.csv";
    if (tc.checkpoint_every > 0) tc.checkpoint_dir = sr_out / "checkpoints";
    torch::manual_seed(cfg.seed);
    Generator gen(gcfg);
    Discriminator disc(gcfg);
    PerceptualNet lpips(gcfg.bands);
    const auto pairs =
        training_pairs(sr_data, aois_or_all(sr_aois, sr_data), cfg.dataset.occlusion_threshold);
    std::cout << pairs.size() << " training pairs\n";
    const auto res = train_sr(pairs, gen, disc, lpips, weights, tc);
    save_sr_checkpoint(sr_out / "model.ckpt", gen, disc,
                       {{"variant", variant},
                        {"lambda1", weights.lambda1},
                        {"lambda2", weights.lambda2},
                        {"steps", tc.max_steps},
                        {"seed", cfg.seed}});
    if (!res.log.empty()) {
      const auto& a = res.log.front();
      const auto& b = res.log.back();
      std::cout << "l1 " << a.l1 << " -> " << b.l1 << ", lpips " << a.lpips << " -> " << b.lpips
                << '\n';
    }
    std::cout << "checkpoint: " << (sr_out / "model.ckpt").string() << '\n';
  });

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Synthesize an HR series for one AOI");
  fs::path gen_ckpt, gen_aoi, gen_out;
  int gen_patch = 0;
  gen_cmd->add_option("--checkpoint", gen_ckpt, "SR checkpoint")->required()->check(
      CLI::ExistingFile);
  gen_cmd->add_option("--aoi", gen_aoi, "AOI directory")->required()->check(
      CLI::ExistingDirectory);
  gen_cmd->add_option("--patch", gen_patch, "Tile size (default: training patch)");
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  gen_cmd->callback([&] {
    const auto cfg = resolve(g);
    auto models = load_sr_checkpoint(gen_ckpt);
    const int patch = gen_patch > 0 ? gen_patch : models.gen->config().patch_size;
    const auto rec = load_aoi(gen_aoi);
    const auto series = generate_series(rec, models.gen, patch, cfg.dataset.occlusion_threshold);
    write_series_dir(gen_out, series);
    const auto& last = series.frames.back().pixels;
    std::cout << series.size() << " frames written to " << gen_out.string()
              << ", seam ratio " << seam_ratio(last, plan_tiles(last.size(1), last.size(2), patch))
              << '\n';
  });

  // train-tracker
  auto* tt_cmd = app.add_subcommand("train-tracker", "Train the building segmenter");
  fs::path tt_data, tt_out, tt_images;
  std::vector<std::string> tt_aois;
  std::optional<int> tt_steps;
  tt_cmd->add_option("--data", tt_data, "Dataset root with labels")->required()->check(
      CLI::ExistingDirectory);
  tt_cmd->add_option("--out", tt_out, "Output directory")->required();
  tt_cmd->add_option("--aois", tt_aois, "Training AOI ids (default: all)")->delimiter(',');
  tt_cmd->add_option("--images", tt_images,
                     "Train on <images>/<aoi> series instead of the HR frames");
  tt_cmd->add_option_function<int>("--steps", [&](int v) { tt_steps = v; }, "Training steps");
  tt_cmd->callback([&] {
    const auto cfg = resolve(g);
    torch::manual_seed(cfg.seed);
    Segmenter seg(cfg.tracker.config);
    std::vector<TrackerSample> samples;
    for (const auto& id : aois_or_all(tt_aois, tt_data)) {
      const auto rec = load_aoi(tt_data / id);
      if (!rec.labels) throw ValidationError("AOI " + id + " has no labels");
      const auto series = tt_images.empty() ? rec.hr : read_series_dir(tt_images / id);
      auto s = tracker_samples(series, *rec.labels);
      std::move(s.begin(), s.end(), std::back_inserter(samples));
    }
    auto tc = cfg.tracker.train;
    tc.seed = cfg.seed;
    if (tt_steps) tc.max_steps = *tt_steps;
    const auto res = train_tracker(samples, seg, cfg.tracker.config, tc);
    save_tracker_checkpoint(tt_out / "model.ckpt", seg, cfg.tracker.config, {{"seed", cfg.seed}});
    if (!res.losses.empty()) {
      std::cout << "bce " << res.losses.front() << " -> " << res.losses.back() << '\n';
    }
    std::cout << "training IoU " << segmentation_iou(samples, seg, cfg.tracker.config) << '\n';
  });

  // track
  auto* track_cmd = app.add_subcommand("track", "Track buildings through an image series");
  fs::path tr_ckpt, tr_images, tr_out;
  bool tr_lr = false;
  track_cmd->add_option("--checkpoint", tr_ckpt, "Tracker checkpoint")->required()->check(
      CLI::ExistingFile);
  track_cmd->add_option("--images", tr_images, "AOI or generated-series directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  track_cmd->add_flag("--lr", tr_lr, "Track the upsampled LR frames instead of the HR frames");
  track_cmd->add_option("--out", tr_out, "Output GeoJSON")->required();
  track_cmd->callback([&] {
    resolve(g);
    auto model = load_tracker_checkpoint(tr_ckpt);
    const auto rec = load_aoi(tr_images);
    const auto series = tr_lr ? upsampled_lr(rec) : rec.hr;
    const auto fp = track(series, model.seg, model.cfg);
    if (tr_out.has_parent_path()) fs::create_directories(tr_out.parent_path());
    write_geojson(tr_out, fp);
    std::cout << fp.size() << " buildings tracked\n";
  });

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predicted footprints against labels");
  fs::path ev_pred, ev_labels, ev_out;
  std::vector<std::string> ev_aois;
  eval_cmd->add_option("--pred", ev_pred, "Directory of <aoi>.geojson predictions")->required();
  eval_cmd->add_option("--labels", ev_labels, "Labelled dataset root")->required()->check(
      CLI::ExistingDirectory);
  eval_cmd->add_option("--aois", ev_aois, "AOI ids (default: all labelled)")->delimiter(',');
  eval_cmd->add_option("--out", ev_out, "Report directory");
  eval_cmd->callback([&] {
    resolve(g);
    const auto report = evaluate_run(ev_pred, ev_labels, ev_aois);
    if (!ev_out.empty()) write_report(ev_out, report, ev_pred.filename().string());
    std::cout << report.table(ev_pred.filename().string());
  });

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "Compare image sources of a pipeline run");
  fs::path cmp_run;
  cmp_cmd->add_option("--run", cmp_run, "Run directory")->required()->check(
      CLI::ExistingDirectory);
  cmp_cmd->callback([&] {
    ExperimentConfig cfg;
    if (g.config.empty() && fs::exists(cmp_run / "manifest.json")) {
      const auto m = json::parse(std::ifstream(cmp_run / "manifest.json"));
      const auto& c = m.at("config");
      cfg = ExperimentConfig::from_json(
          c, ExperimentConfig::preset_named(c.value("preset", std::string("desk"))));
    } else {
      cfg = resolve(g);
    }
    std::cout << compare_sources(cfg, cmp_run).table();
  });

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the full pipeline");
  fs::path run_out;
  run_cmd->add_option("--out", run_out, "Run directory")->required();
  run_cmd->callback([&] {
    const auto cfg = resolve(g);
    const auto res = run_pipeline(cfg, run_out);
    std::cout << res.executed.size() << " stages run, " << res.skipped.size()
              << " reused from cache\n";
    std::ifstream table(run_out / "report.txt");
    std::cout << table.rdbuf();
  });

  // describe
  auto* desc_cmd = app.add_subcommand("describe", "Print architectures and parameter counts");
  fs::path desc_ckpt;
  std::string desc_variant = "ead-lpips";
  desc_cmd->add_option("--checkpoint", desc_ckpt, "SR or tracker checkpoint")->check(
      CLI::ExistingFile);
  desc_cmd->add_option("--variant", desc_variant, "Variant when no checkpoint is given")
      ->check(CLI::IsMember(kSrVariants));
  desc_cmd->callback([&] {
    const auto cfg = resolve(g);
    if (!desc_ckpt.empty()) {
      const auto meta = load_checkpoint(desc_ckpt).meta;
      if (meta.value("kind", std::string()) == "tracker") {
        auto m = load_tracker_checkpoint(desc_ckpt);
        std::cout << "tracker " << m.cfg.to_json().dump() << "\nparameters "
                  << parameter_count(*m.seg) << '\n';
        return;
      }
      auto m = load_sr_checkpoint(desc_ckpt);
      std::cout << describe(m.gen, m.disc);
      return;
    }
    const auto gcfg = variant_generator(desc_variant, cfg.sr.generator);
    Generator gen(gcfg);
    Discriminator disc(gcfg);
    Segmenter seg(cfg.tracker.config);
    std::cout << describe(gen, disc) << "tracker parameters " << parameter_count(*seg) << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
