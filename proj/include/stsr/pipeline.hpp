#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stsr/dataset.hpp"
#include "stsr/generator.hpp"
#include "stsr/metrics.hpp"
#include "stsr/objective.hpp"
#include "stsr/tracker.hpp"
#include "stsr/training.hpp"

namespace stsr {

// Raised when a pipeline stage fails; the message starts with the stage name.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SR training presets: `ead` drops the perceptual term, `ead-lpips` keeps it,
// `pix2pix` swaps in the encoder-decoder generator.
inline const std::vector<std::string> kSrVariants{"ead", "ead-lpips", "pix2pix"};

void require_variant(const std::string& name);
GeneratorConfig variant_generator(const std::string& name, GeneratorConfig base);
LossWeights variant_weights(const std::string& name, LossWeights base);

struct DatasetSection {
  std::filesystem::path root;  // empty with a synthetic spec: <run>/data
  std::optional<SyntheticDatasetSpec> synthetic;
  std::size_t train_count = 10;
  std::size_t test_count = 3;
  double occlusion_threshold = 0.5;
};

struct SrSection {
  std::vector<std::string> variants{"ead-lpips"};
  GeneratorConfig generator;
  LossWeights weights;
  TrainConfig train;
  int inference_patch = 0;  // 0: generator patch size
};

// `hr` trains one tracker on ground-truth HR frames; `per-source` trains one
// per image source on that source's imagery of the training AOIs.
struct TrackerSection {
  TrackerConfig config;
  TrackerTrainConfig train;
  std::string setting = "hr";
};

struct EvaluationSection {
  // hr, lr, any trained variant, or an external name.
  std::vector<std::string> sources{"hr", "lr", "ead-lpips"};
  // External imagery: <dir>/<aoi>/manifest.json with the frames listed as hr.
  std::map<std::string, std::filesystem::path> external;
  std::string ours;  // source checked against hr and lr; default: first variant
};

struct ExperimentConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  bool deterministic = true;
  DatasetSection dataset;
  SrSection sr;
  TrackerSection tracker;
  EvaluationSection evaluation;

  static ExperimentConfig desk();
  static ExperimentConfig paper();
  static ExperimentConfig preset_named(const std::string& name);

  void validate() const;
  nlohmann::json to_json() const;
  // Fields absent from `j` keep the values of `base`.
  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base = desk());
  static ExperimentConfig load(const std::filesystem::path& path);
};

// 64-bit FNV-1a over the compact dump of a JSON value (keys sorted).
std::uint64_t config_hash(const nlohmann::json& j);
std::string hex(std::uint64_t v);

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
};

// Runs data -> split -> train-sr -> generate -> train-tracker -> track ->
// evaluate -> compare in <run_dir>. Stages whose recorded hash matches and
// whose outputs exist are skipped.
RunResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// ---- Building blocks shared with the command-line tool ---------------------

// Training pairs over every usable AOI in `aois`.
std::vector<PairedSample> training_pairs(const std::filesystem::path& root,
                                         const std::vector<std::string>& aois,
                                         double occlusion_threshold);

// Synthesized HR series of one AOI: one generated frame per usable LR frame,
// referencing the most recent usable HR frame.
ImageTimeSeries generate_series(const AoiRecord& aoi, Generator& gen, std::int64_t patch,
                                double occlusion_threshold);

// Writes a series as an AOI directory whose manifest lists the frames as hr.
void write_series_dir(const std::filesystem::path& dir, const ImageTimeSeries& series);
ImageTimeSeries read_series_dir(const std::filesystem::path& dir);

// LR frames bilinearly resized to the HR frame size.
ImageTimeSeries upsampled_lr(const AoiRecord& aoi);

// HR frames paired with their per-frame building masks.
std::vector<TrackerSample> tracker_samples(const ImageTimeSeries& series,
                                           const FootprintSet& labels);

// ---- Comparison ------------------------------------------------------------

struct Comparison {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<std::string> missing;
  std::string ours;
  bool hr_ge_ours = false;
  bool ours_gt_lr = false;

  nlohmann::json to_json() const;
  std::string table() const;
};

// Reads <run_dir>/reports/<source>/report.json for every configured source,
// writes <run_dir>/report.json, report.txt and one panel figure per test AOI
// under <run_dir>/figures.
Comparison compare_sources(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// Side-by-side panel of the last frame of each source with ground-truth
// (green) and predicted (red) outlines, nearest-neighbour enlarged by `zoom`.
torch::Tensor panel_figure(const std::vector<ImageTimeSeries>& sources,
                           const std::vector<FootprintSet>& predictions,
                           const FootprintSet& labels, int zoom = 4);

}  // namespace stsr
