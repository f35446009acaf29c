#include "stsr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "stsr/image_io.hpp"
#include "stsr/patch_inference.hpp"

namespace stsr {

namespace fs = std::filesystem;
using nlohmann::json;

void require_variant(const std::string& name) {
  if (std::find(kSrVariants.begin(), kSrVariants.end(), name) == kSrVariants.end()) {
    throw ValidationError("unknown SR variant '" + name + "' (expected ead, ead-lpips or pix2pix)");
  }
}

GeneratorConfig variant_generator(const std::string& name, GeneratorConfig base) {
  require_variant(name);
  base.variant = name == "pix2pix" ? GeneratorVariant::Pix2Pix : GeneratorVariant::Ead;
  return base;
}

LossWeights variant_weights(const std::string& name, LossWeights base) {
  require_variant(name);
  if (name == "ead") base.lambda2 = 0.0;
  return base;
}

// ---- Config -----------------------------------------------------------------

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.preset = "desk";
  SyntheticDatasetSpec syn;
  syn.n_aois = 13;
  c.dataset.synthetic = syn;
  c.dataset.train_count = 10;
  c.dataset.test_count = 3;
  c.sr.generator = GeneratorConfig::desk();
  c.sr.train.batch_size = 4;
  c.sr.train.max_steps = 2000;
  c.tracker.config = TrackerConfig::desk();
  c.tracker.train.batch_size = 8;
  c.tracker.train.max_steps = 1500;
  return c;
}

ExperimentConfig ExperimentConfig::paper() {
  ExperimentConfig c = desk();
  c.preset = "paper";
  c.dataset.synthetic->scene.hr_size = 1024;
  c.dataset.synthetic->scene.n_timesteps = 24;
  c.dataset.synthetic->scene.min_building_size = 20;
  c.dataset.synthetic->scene.max_building_size = 80;
  c.dataset.synthetic->scene.min_buildings = 40;
  c.dataset.synthetic->scene.max_buildings = 120;
  c.sr.generator = GeneratorConfig::paper();
  c.sr.train.batch_size = 4;
  c.sr.train.max_steps = 100000;
  c.sr.train.checkpoint_every = 5000;
  c.sr.inference_patch = 256;
  c.tracker.config = TrackerConfig::paper();
  c.tracker.train.batch_size = 4;
  c.tracker.train.max_steps = 20000;
  return c;
}

ExperimentConfig ExperimentConfig::preset_named(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ValidationError("unknown preset '" + name + "' (expected paper or desk)");
}

void ExperimentConfig::validate() const {
  if (!dataset.synthetic && dataset.root.empty()) {
    throw ValidationError("config: dataset needs a root or a synthetic spec");
  }
  if (dataset.synthetic) dataset.synthetic->scene.validate();
  if (dataset.train_count == 0 || dataset.test_count == 0) {
    throw ValidationError("config: train and test AOI counts must be >= 1");
  }
  if (sr.variants.empty()) throw ValidationError("config: sr.variants is empty");
  for (const auto& v : sr.variants) require_variant(v);
  sr.generator.validate();
  sr.weights.validate();
  sr.train.validate();
  if (sr.inference_patch < 0) throw ValidationError("config: inference_patch must be >= 0");
  tracker.config.validate();
  if (tracker.setting != "hr" && tracker.setting != "per-source") {
    throw ValidationError("config: tracker.setting must be hr or per-source");
  }
  for (const auto& s : evaluation.sources) {
    const bool known = s == "hr" || s == "lr" || evaluation.external.count(s) ||
                       std::find(sr.variants.begin(), sr.variants.end(), s) != sr.variants.end();
    if (!known) throw ValidationError("config: unknown evaluation source '" + s + "'");
  }
}

json ExperimentConfig::to_json() const {
  json ext = json::object();
  for (const auto& [k, v] : evaluation.external) ext[k] = v.string();
  json ds = {{"root", dataset.root.string()},
             {"train_count", dataset.train_count},
             {"test_count", dataset.test_count},
             {"occlusion_threshold", dataset.occlusion_threshold}};
  ds["synthetic"] = dataset.synthetic ? dataset.synthetic->to_json() : json(nullptr);
  return {{"preset", preset},
          {"seed", seed},
          {"deterministic", deterministic},
          {"dataset", ds},
          {"sr",
           {{"variants", sr.variants},
            {"generator", sr.generator.to_json()},
            {"lambda1", sr.weights.lambda1},
            {"lambda2", sr.weights.lambda2},
            {"train", sr.train.to_json()},
            {"inference_patch", sr.inference_patch}}},
          {"tracker",
           {{"config", tracker.config.to_json()},
            {"train", tracker.train.to_json()},
            {"setting", tracker.setting}}},
          {"evaluation",
           {{"sources", evaluation.sources}, {"external", ext}, {"ours", evaluation.ours}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, ExperimentConfig c) {
  c.preset = j.value("preset", c.preset);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset.root = d.value("root", c.dataset.root.string());
    if (d.contains("synthetic")) {
      if (d.at("synthetic").is_null()) {
        c.dataset.synthetic.reset();
      } else {
        c.dataset.synthetic = SyntheticDatasetSpec::from_json(d.at("synthetic"));
      }
    }
    c.dataset.train_count = d.value("train_count", c.dataset.train_count);
    c.dataset.test_count = d.value("test_count", c.dataset.test_count);
    c.dataset.occlusion_threshold = d.value("occlusion_threshold", c.dataset.occlusion_threshold);
  }
  if (j.contains("sr")) {
    const auto& s = j.at("sr");
    c.sr.variants = s.value("variants", c.sr.variants);
    if (s.contains("generator")) c.sr.generator = GeneratorConfig::from_json(s.at("generator"));
    c.sr.weights.lambda1 = s.value("lambda1", c.sr.weights.lambda1);
    c.sr.weights.lambda2 = s.value("lambda2", c.sr.weights.lambda2);
    if (s.contains("train")) {
      auto merged = c.sr.train.to_json();
      merged.merge_patch(s.at("train"));
      c.sr.train = TrainConfig::from_json(merged);
    }
    c.sr.inference_patch = s.value("inference_patch", c.sr.inference_patch);
  }
  if (j.contains("tracker")) {
    const auto& t = j.at("tracker");
    if (t.contains("config")) c.tracker.config = TrackerConfig::from_json(t.at("config"));
    if (t.contains("train")) {
      auto merged = c.tracker.train.to_json();
      merged.merge_patch(t.at("train"));
      c.tracker.train = TrackerTrainConfig::from_json(merged);
    }
    c.tracker.setting = t.value("setting", c.tracker.setting);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    c.evaluation.sources = e.value("sources", c.evaluation.sources);
    if (e.contains("external")) {
      c.evaluation.external.clear();
      for (const auto& [k, v] : e.at("external").items()) {
        c.evaluation.external[k] = v.get<std::string>();
      }
    }
    c.evaluation.ours = e.value("ours", c.evaluation.ours);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  const auto j = json::parse(in);
  const auto base = preset_named(j.value("preset", std::string("desk")));
  return from_json(j, base);
}

std::uint64_t config_hash(const json& j) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  const auto s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- Building blocks --------------------------------------------------------

std::vector<PairedSample> training_pairs(const fs::path& root, const std::vector<std::string>& aois,
                                         double occlusion_threshold) {
  std::vector<PairedSample> out;
  for (const auto& id : aois) {
    const auto rec = load_aoi(root / id);
    const auto aligned = align_usable(rec, occlusion_threshold);
    if (aligned.lr.size() < 2) continue;
    auto pairs = make_training_pairs(aligned.lr, aligned.hr);
    std::move(pairs.begin(), pairs.end(), std::back_inserter(out));
  }
  if (out.empty()) throw ValidationError("no training pairs in " + root.string());
  return out;
}

ImageTimeSeries generate_series(const AoiRecord& aoi, Generator& gen, std::int64_t patch,
                                double occlusion_threshold) {
  const auto lr = filter_usable(aoi.lr, aoi.lr_occlusion(), occlusion_threshold);
  const auto hr = filter_usable(aoi.hr, aoi.hr_occlusion(), occlusion_threshold);
  const auto pairs = make_inference_pairs(lr, hr.frames.back());
  ImageTimeSeries out{aoi.manifest.aoi_id, {}};
  for (const auto& s : pairs) {
    auto img = from_model_space(generate_full(s, s.time, gen, patch));
    img.pixels = img.pixels.clamp(0.0, 1.0).contiguous();
    out.frames.push_back(std::move(img));
  }
  return out;
}

void write_series_dir(const fs::path& dir, const ImageTimeSeries& series) {
  AoiRecord rec;
  rec.manifest.aoi_id = series.aoi_id;
  rec.hr = series;
  for (std::size_t i = 0; i < series.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "hr/%03zu.png", i);
    rec.manifest.hr.push_back({name, series.frames[i].timestamp, series.frames[i].gsd, 0.0});
  }
  fs::create_directories(dir / "hr");
  write_aoi(dir, rec);
}

ImageTimeSeries read_series_dir(const fs::path& dir) {
  auto rec = load_aoi(dir);
  if (rec.hr.empty()) throw ValidationError(dir.string() + " lists no frames");
  return rec.hr;
}

ImageTimeSeries upsampled_lr(const AoiRecord& aoi) {
  if (aoi.hr.empty()) throw ValidationError("upsampled_lr: AOI has no HR frame to size against");
  const auto h = aoi.hr.frames.front().height();
  const auto w = aoi.hr.frames.front().width();
  ImageTimeSeries out{aoi.manifest.aoi_id, {}};
  for (const auto& f : aoi.lr.frames) out.frames.push_back(resize_to(f, h, w));
  return out;
}

std::vector<TrackerSample> tracker_samples(const ImageTimeSeries& series,
                                           const FootprintSet& labels) {
  std::vector<TrackerSample> out;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& f = series.frames[k];
    out.push_back({f, frame_mask(labels, static_cast<int>(k), f.height(), f.width())});
  }
  return out;
}

// ---- Stage engine -----------------------------------------------------------

namespace {

class StageRunner {
 public:
  StageRunner(fs::path run_dir, RunResult& result) : dir_(std::move(run_dir)), result_(result) {
    fs::create_directories(dir_ / "logs");
    const auto path = dir_ / "manifest.json";
    if (fs::exists(path)) {
      manifest_ = json::parse(std::ifstream(path));
    }
    if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  }

  void set_config(const json& cfg) {
    manifest_["config"] = cfg;
    save();
  }

  // Runs `body` unless the stage is recorded with the same hash and all its
  // outputs still exist. Returns the stage's stamp: its hash mixed with the
  // serial of its last execution. Downstream stages hash the stamp, so a
  // re-executed stage invalidates everything that depends on it.
  std::uint64_t run(const std::string& name, std::uint64_t hash,
                    const std::vector<fs::path>& outputs, const std::function<void()>& body) {
    const auto& stages = manifest_["stages"];
    if (stages.contains(name) && stages[name].value("hash", std::string()) == hex(hash)) {
      const bool present = std::all_of(outputs.begin(), outputs.end(),
                                       [&](const fs::path& p) { return fs::exists(dir_ / p); });
      if (present) {
        result_.skipped.push_back(name);
        return stamp(hash, stages[name].value("serial", std::uint64_t{0}));
      }
    }
    std::cerr << "[stage] " << name << '\n';
    for (const auto& p : outputs) fs::remove_all(dir_ / p);
    try {
      body();
    } catch (const std::exception& e) {
      std::string log_name = name;
      std::replace(log_name.begin(), log_name.end(), '/', '_');
      std::ofstream(dir_ / "logs" / (log_name + ".log")) << e.what() << '\n';
      manifest_["stages"].erase(name);
      save();
      throw PipelineError("stage '" + name + "' failed: " + e.what());
    }
    json outs = json::array();
    for (const auto& p : outputs) outs.push_back(p.generic_string());
    const std::uint64_t serial = manifest_.value("serial", std::uint64_t{0}) + 1;
    manifest_["serial"] = serial;
    manifest_["stages"][name] = {{"hash", hex(hash)}, {"outputs", outs}, {"serial", serial}};
    save();
    result_.executed.push_back(name);
    return stamp(hash, serial);
  }

 private:
  static std::uint64_t stamp(std::uint64_t hash, std::uint64_t serial) {
    return config_hash({hex(hash), serial});
  }

  void save() const { std::ofstream(dir_ / "manifest.json") << manifest_.dump(2) << '\n'; }

  fs::path dir_;
  RunResult& result_;
  json manifest_;
};

void seed_everything(const ExperimentConfig& cfg, std::uint64_t salt) {
  if (cfg.deterministic) at::set_num_threads(1);
  torch::manual_seed(cfg.seed ^ salt);
}

std::uint64_t salt_of(const std::string& s) { return config_hash(json(s)); }

AoiSplit read_split(const fs::path& path) {
  const auto j = json::parse(std::ifstream(path));
  AoiSplit s;
  s.train_aois = j.at("train").get<std::vector<std::string>>();
  s.test_aois = j.at("test").get<std::vector<std::string>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

bool is_variant(const ExperimentConfig& cfg, const std::string& s) {
  return std::find(cfg.sr.variants.begin(), cfg.sr.variants.end(), s) != cfg.sr.variants.end();
}

std::string ours_of(const ExperimentConfig& cfg) {
  if (!cfg.evaluation.ours.empty()) return cfg.evaluation.ours;
  for (const auto& s : cfg.evaluation.sources) {
    if (is_variant(cfg, s)) return s;
  }
  return {};
}

fs::path data_root(const ExperimentConfig& cfg, const fs::path& run_dir) {
  return cfg.dataset.root.empty() ? run_dir / "data" : cfg.dataset.root;
}

}  // namespace

RunResult run_pipeline(const ExperimentConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  RunResult result;
  result.run_dir = run_dir;
  fs::create_directories(run_dir);
  StageRunner runner(run_dir, result);
  runner.set_config(cfg.to_json());
  const auto cfg_json = cfg.to_json();
  const auto root = data_root(cfg, run_dir);

  // data
  auto data_hash = config_hash({{"stage", "data"}, {"dataset", cfg_json["dataset"]}});
  if (cfg.dataset.synthetic) {
    const bool inside = cfg.dataset.root.empty();
    data_hash = runner.run("data", data_hash, {inside ? fs::path("data") : fs::path("data.done")}, [&] {
      write_synthetic_dataset(root, *cfg.dataset.synthetic);
      if (!inside) std::ofstream(run_dir / "data.done") << root.string() << '\n';
    });
  } else if (list_aois(root).empty()) {
    throw PipelineError("stage 'data' failed: no AOIs under " + root.string());
  }

  // split
  auto split_hash = config_hash({{"stage", "split"},
                                       {"data", data_hash},
                                       {"seed", cfg.seed},
                                       {"train", cfg.dataset.train_count},
                                       {"test", cfg.dataset.test_count}});
  split_hash = runner.run("split", split_hash, {"split.json"}, [&] {
    const auto s = split_aois(list_aois(root), cfg.dataset.train_count, cfg.dataset.test_count,
                              cfg.seed);
    std::ofstream(run_dir / "split.json")
        << json{{"train", s.train_aois}, {"test", s.test_aois}, {"seed", s.seed}}.dump(2) << '\n';
  });
  const auto split = read_split(run_dir / "split.json");
  const bool per_source = cfg.tracker.setting == "per-source";

  // SR training and generation per variant
  std::map<std::string, std::uint64_t> source_hash;
  source_hash["hr"] = split_hash;
  source_hash["lr"] = split_hash;
  for (const auto& [name, dir] : cfg.evaluation.external) {
    source_hash[name] = config_hash({{"external", dir.string()}});
  }
  for (const auto& v : cfg.sr.variants) {
    const auto gcfg = variant_generator(v, cfg.sr.generator);
    const auto weights = variant_weights(v, cfg.sr.weights);
    auto sr_hash = config_hash({{"stage", "sr"},
                                      {"split", split_hash},
                                      {"variant", v},
                                      {"generator", gcfg.to_json()},
                                      {"lambda1", weights.lambda1},
                                      {"lambda2", weights.lambda2},
                                      {"train", cfg_json["sr"]["train"]},
                                      {"seed", cfg.seed},
                                      {"deterministic", cfg.deterministic}});
    const fs::path sr_dir = fs::path("sr") / v;
    sr_hash = runner.run("train-sr/" + v, sr_hash, {sr_dir}, [&] {
      seed_everything(cfg, salt_of("sr/" + v));
      Generator gen(gcfg);
      Discriminator disc(gcfg);
      PerceptualNet lpips(gcfg.bands);
      auto tc = cfg.sr.train;
      tc.seed = cfg.seed;
      tc.deterministic = cfg.deterministic;
      tc.log_csv = run_dir / sr_dir / "train_log.csv";
      tc.checkpoint_dir = tc.checkpoint_every > 0 ? run_dir / sr_dir / "checkpoints" : fs::path();
      const auto pairs = training_pairs(root, split.train_aois, cfg.dataset.occlusion_threshold);
      fs::create_directories(run_dir / sr_dir);
      train_sr(pairs, gen, disc, lpips, weights, tc);
      save_sr_checkpoint(run_dir / sr_dir / "model.ckpt", gen, disc,
                         {{"variant", v},
                          {"lambda1", weights.lambda1},
                          {"lambda2", weights.lambda2},
                          {"steps", tc.max_steps},
                          {"seed", cfg.seed}});
    });

    const auto patch = cfg.sr.inference_patch > 0 ? cfg.sr.inference_patch : gcfg.patch_size;
    auto gen_hash = config_hash({{"stage", "generate"},
                                       {"sr", sr_hash},
                                       {"patch", patch},
                                       {"per_source", per_source},
                                       {"occlusion", cfg.dataset.occlusion_threshold}});
    const fs::path img_dir = fs::path("images") / v;
    gen_hash = runner.run("generate/" + v, gen_hash, {img_dir}, [&] {
      auto models = load_sr_checkpoint(run_dir / sr_dir / "model.ckpt");
      auto aois = split.test_aois;
      if (per_source) aois.insert(aois.end(), split.train_aois.begin(), split.train_aois.end());
      json seams = json::object();
      for (const auto& id : aois) {
        const auto rec = load_aoi(root / id);
        const auto series =
            generate_series(rec, models.gen, patch, cfg.dataset.occlusion_threshold);
        write_series_dir(run_dir / img_dir / id, series);
        const auto& last = series.frames.back().pixels;
        seams[id] = seam_ratio(last, plan_tiles(last.size(1), last.size(2), patch));
      }
      std::ofstream(run_dir / img_dir / "seams.json") << seams.dump(2) << '\n';
    });
    source_hash[v] = gen_hash;
  }

  auto source_series = [&](const std::string& source, const std::string& aoi) {
    if (source == "hr") return load_aoi(root / aoi).hr;
    if (source == "lr") return upsampled_lr(load_aoi(root / aoi));
    if (is_variant(cfg, source)) return read_series_dir(run_dir / "images" / source / aoi);
    return read_series_dir(cfg.evaluation.external.at(source) / aoi);
  };

  // Trackers
  const auto tracker_json = json{{"config", cfg_json["tracker"]["config"]},
                                 {"train", cfg_json["tracker"]["train"]},
                                 {"seed", cfg.seed},
                                 {"deterministic", cfg.deterministic}};
  std::map<std::string, std::uint64_t> tracker_hash;
  auto train_tracker_on = [&](const std::string& source) {
    auto h = config_hash({{"stage", "tracker"},
                                {"source", source},
                                {"images", source_hash.at(source)},
                                {"split", split_hash},
                                {"tracker", tracker_json}});
    const fs::path out = fs::path("tracker") / source;
    h = runner.run("train-tracker/" + source, h, {out}, [&] {
      seed_everything(cfg, salt_of("tracker/" + source));
      Segmenter seg(cfg.tracker.config);
      std::vector<TrackerSample> samples;
      for (const auto& id : split.train_aois) {
        const auto rec = load_aoi(root / id);
        if (!rec.labels) throw ValidationError("AOI " + id + " has no labels");
        auto s = tracker_samples(source_series(source, id), *rec.labels);
        std::move(s.begin(), s.end(), std::back_inserter(samples));
      }
      auto tc = cfg.tracker.train;
      tc.seed = cfg.seed;
      const auto res = train_tracker(samples, seg, cfg.tracker.config, tc);
      fs::create_directories(run_dir / out);
      std::ofstream log(run_dir / out / "train_log.csv");
      log << "step,bce\n";
      for (std::size_t i = 0; i < res.losses.size(); ++i) {
        log << i + 1 << ',' << res.losses[i] << '\n';
      }
      save_tracker_checkpoint(run_dir / out / "model.ckpt", seg, cfg.tracker.config,
                              {{"source", source}, {"seed", cfg.seed}});
    });
    tracker_hash[source] = h;
  };
  if (per_source) {
    for (const auto& s : cfg.evaluation.sources) train_tracker_on(s);
  } else {
    train_tracker_on("hr");
  }

  // Track and evaluate each source
  std::map<std::string, std::uint64_t> eval_hash;
  for (const auto& source : cfg.evaluation.sources) {
    const auto tracker_source = per_source ? source : std::string("hr");
    auto th = config_hash({{"stage", "track"},
                                 {"tracker", tracker_hash.at(tracker_source)},
                                 {"images", source_hash.at(source)},
                                 {"test", split.test_aois}});
    const fs::path track_dir = fs::path("tracks") / source;
    th = runner.run("track/" + source, th, {track_dir}, [&] {
      auto model = load_tracker_checkpoint(run_dir / "tracker" / tracker_source / "model.ckpt");
      fs::create_directories(run_dir / track_dir);
      for (const auto& id : split.test_aois) {
        const auto fp = track(source_series(source, id), model.seg, model.cfg);
        write_geojson(run_dir / track_dir / (id + ".geojson"), fp);
      }
    });
    auto eh = config_hash({{"stage", "evaluate"}, {"track", th}});
    const fs::path rep_dir = fs::path("reports") / source;
    eval_hash[source] = runner.run("evaluate/" + source, eh, {rep_dir / "report.json"}, [&] {
      auto report = evaluate_run(run_dir / track_dir, root, split.test_aois);
      report.meta = {{"source", source},
                     {"preset", cfg.preset},
                     {"seed", cfg.seed},
                     {"tracker", tracker_source}};
      if (is_variant(cfg, source)) {
        report.meta["checkpoint"] = (run_dir / "sr" / source / "model.ckpt").string();
      }
      write_report(run_dir / rep_dir, report, source);
    });
  }

  const auto ch = config_hash(
      {{"stage", "compare"}, {"evaluate", json(eval_hash)}, {"evaluation", cfg_json["evaluation"]}});
  runner.run("compare", ch, {"report.json", "report.txt", "figures"},
             [&] { compare_sources(cfg, run_dir); });
  return result;
}

// ---- Comparison -------------------------------------------------------------

json Comparison::to_json() const {
  json sources = json::object();
  json order = json::array();
  for (const auto& [name, r] : rows) {
    sources[name] = r.to_json();
    order.push_back(name);
  }
  return {{"sources", sources},
          {"order", order},
          {"missing", missing},
          {"ours", ours},
          {"hr_ge_ours", hr_ge_ours},
          {"ours_gt_lr", ours_gt_lr}};
}

std::string Comparison::table() const {
  auto t = format_table(rows);
  if (!ours.empty()) {
    t += std::string("TS(hr) >= TS(") + ours + "): " + (hr_ge_ours ? "yes" : "no") + '\n';
    t += std::string("TS(") + ours + ") > TS(lr): " + (ours_gt_lr ? "yes" : "no") + '\n';
  }
  return t;
}

namespace {

void draw_outline(torch::Tensor& rgb, const Mask& m, std::array<float, 3> colour, int zoom) {
  auto acc = rgb.accessor<float, 3>();
  for (std::int64_t r = 0; r < m.height(); ++r) {
    for (std::int64_t c = 0; c < m.width(); ++c) {
      if (!m(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == m.height() || c + 1 == m.width() ||
                        !m(r - 1, c) || !m(r + 1, c) || !m(r, c - 1) || !m(r, c + 1);
      if (!edge) continue;
      for (int dr = 0; dr < zoom; ++dr) {
        for (int dc = 0; dc < zoom; ++dc) {
          for (int k = 0; k < 3; ++k) acc[k][r * zoom + dr][c * zoom + dc] = colour[k];
        }
      }
    }
  }
}

}  // namespace

torch::Tensor panel_figure(const std::vector<ImageTimeSeries>& sources,
                           const std::vector<FootprintSet>& predictions,
                           const FootprintSet& labels, int zoom) {
  if (sources.empty() || sources.size() != predictions.size() || zoom < 1) {
    throw ValidationError("panel_figure: need one prediction per source");
  }
  constexpr int kGap = 4;
  std::vector<torch::Tensor> panels;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& frame = sources[i].frames.back();
    auto img = frame.pixels.clamp(0.0, 1.0);
    img = img.size(0) == 3 ? img : img.slice(0, 0, 1).repeat({3, 1, 1});
    img = img.repeat_interleave(zoom, 1).repeat_interleave(zoom, 2).contiguous();
    const int last = static_cast<int>(sources[i].size()) - 1;
    draw_outline(img, frame_mask(labels, last, frame.height(), frame.width()), {0.f, 1.f, 0.f},
                 zoom);
    for (const auto& f : at_frame(predictions[i], last).polygons) {
      draw_outline(img, rasterize(f.vertices, frame.height(), frame.width()), {1.f, 0.f, 0.f},
                   zoom);
    }
    if (!panels.empty()) panels.push_back(torch::ones({3, img.size(1), kGap}));
    panels.push_back(img);
  }
  return torch::cat(panels, 2);
}

Comparison compare_sources(const ExperimentConfig& cfg, const fs::path& run_dir) {
  Comparison cmp;
  cmp.ours = ours_of(cfg);
  for (const auto& source : cfg.evaluation.sources) {
    const auto path = run_dir / "reports" / source / "report.json";
    if (!fs::exists(path)) {
      std::cerr << "warning: no report for source " << source << '\n';
      cmp.missing.push_back(source);
      continue;
    }
    cmp.rows.emplace_back(source, MetricsReport::from_json(json::parse(std::ifstream(path))));
  }
  if (cmp.rows.empty()) throw ValidationError("compare_sources: no source reports found");
  auto ts_of = [&](const std::string& s) -> std::optional<double> {
    for (const auto& [name, r] : cmp.rows) {
      if (name == s) return r.ts;
    }
    return std::nullopt;
  };
  const auto hr = ts_of("hr"), lr = ts_of("lr"), ours = ts_of(cmp.ours);
  cmp.hr_ge_ours = hr && ours && *hr >= *ours;
  cmp.ours_gt_lr = ours && lr && *ours > *lr;

  auto j = cmp.to_json();
  j["meta"] = {{"preset", cfg.preset}, {"seed", cfg.seed}};
  std::ofstream(run_dir / "report.json") << j.dump(2) << '\n';
  std::ofstream(run_dir / "report.txt") << cmp.table();

  // Panel figures for the test AOIs.
  const auto split_path = run_dir / "split.json";
  fs::create_directories(run_dir / "figures");
  if (!fs::exists(split_path)) return cmp;
  const auto root = data_root(cfg, run_dir);
  for (const auto& id : read_split(split_path).test_aois) {
    std::vector<ImageTimeSeries> series;
    std::vector<FootprintSet> preds;
    const auto rec = load_aoi(root / id);
    for (const auto& [source, report] : cmp.rows) {
      const auto pred_path = run_dir / "tracks" / source / (id + ".geojson");
      if (!fs::exists(pred_path)) continue;
      ImageTimeSeries s;
      if (source == "hr") {
        s = rec.hr;
      } else if (source == "lr") {
        s = upsampled_lr(rec);
      } else if (is_variant(cfg, source)) {
        s = read_series_dir(run_dir / "images" / source / id);
      } else {
        s = read_series_dir(cfg.evaluation.external.at(source) / id);
      }
      series.push_back(std::move(s));
      preds.push_back(read_geojson(pred_path));
    }
    if (series.empty() || !rec.labels) continue;
    write_png(run_dir / "figures" / (id + ".png"), panel_figure(series, preds, *rec.labels));
  }
  return cmp;
}

}  // namespace stsr
