#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stsr/footprint.hpp"
#include "stsr/raster.hpp"

namespace stsr {

// One generator input: the LR frame at the target month, an HR frame from a
// different (training) or the latest (inference) month, and for training the
// HR frame at the target month.
struct PairedSample {
  RasterImage lr_target;
  RasterImage hr_reference;
  std::optional<RasterImage> hr_target;
  int t_index = 0;
  int t_ref_index = 0;
  double time = 0.0;  // target month normalized to [0,1]

  bool is_training() const { return hr_target.has_value(); }
};

struct AoiSplit {
  std::vector<std::string> train_aois;
  std::vector<std::string> test_aois;
  std::uint64_t seed = 0;
};

// Procedural scene: textured background plus rectangular buildings that
// appear at a sampled month and stay.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::string aoi_id = "synthetic";
  int n_timesteps = 8;
  int hr_size = 64;
  int scale_factor = 8;
  int bands = 3;
  int first_month = 0;
  double gsd = 4.0;
  int min_buildings = 3;
  int max_buildings = 6;
  int min_building_size = 5;
  int max_building_size = 12;
  double rotated_fraction = 0.3;
  double initial_fraction = 0.3;  // share of buildings present from step 0
  double noise_sigma = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

struct SyntheticScene {
  ImageTimeSeries hr;
  FootprintSet footprints;
};

// Returns the occlusion fraction (clouds, haze) of a frame, in [0,1].
using OcclusionEstimator = std::function<double(const RasterImage&)>;

// Drops frames whose occlusion fraction exceeds `threshold`; order preserved.
ImageTimeSeries filter_usable(const ImageTimeSeries& series, std::span<const double> fractions,
                              double threshold);
ImageTimeSeries filter_usable(const ImageTimeSeries& series, const OcclusionEstimator& estimator,
                              double threshold);

// All ordered (t, t') pairs with t != t' over the timestamps shared by both
// series, target-major. K shared timestamps give K(K-1) samples.
std::vector<PairedSample> make_training_pairs(const ImageTimeSeries& lr, const ImageTimeSeries& hr);

// One sample per LR frame, each referencing `hr_latest`.
std::vector<PairedSample> make_inference_pairs(const ImageTimeSeries& lr,
                                               const RasterImage& hr_latest);

AoiSplit split_aois(std::vector<std::string> aoi_ids, std::size_t train_count,
                    std::size_t test_count, std::uint64_t seed);

SyntheticScene synthesize_scene(const SceneSpec& spec);

// Gaussian blur, scale_factor x area-average, additive Gaussian noise clipped
// to [0,1]. gsd is multiplied by scale_factor.
RasterImage degrade(const RasterImage& hr, int scale_factor, double blur_sigma,
                    double noise_sigma, std::uint64_t seed);

// ---------------------------------------------------------------------------
// AOI directory layout
//
//   <root>/<aoi>/manifest.json
//   <root>/<aoi>/hr/*.png   <root>/<aoi>/lr/*.png
//   <root>/<aoi>/labels.geojson
// ---------------------------------------------------------------------------

struct FrameRecord {
  std::string filename;  // relative to the AOI directory
  int timestamp = 0;
  double gsd = 1.0;
  double occlusion = 0.0;
};

struct AoiManifest {
  std::string aoi_id;
  std::vector<FrameRecord> hr;
  std::vector<FrameRecord> lr;

  nlohmann::json to_json() const;
  static AoiManifest from_json(const nlohmann::json& j);
};

struct AoiRecord {
  AoiManifest manifest;
  ImageTimeSeries hr;
  ImageTimeSeries lr;
  std::optional<FootprintSet> labels;

  std::vector<double> lr_occlusion() const;
  std::vector<double> hr_occlusion() const;
};

AoiRecord load_aoi(const std::filesystem::path& dir);
void write_aoi(const std::filesystem::path& dir, const AoiRecord& record);

// AOI ids (sub-directories holding manifest.json), sorted.
std::vector<std::string> list_aois(const std::filesystem::path& root);

// HR/LR frames sharing a timestamp after the occlusion filter; these are the
// LR-HR pairs a dataset is counted in.
struct AlignedSeries {
  ImageTimeSeries lr;
  ImageTimeSeries hr;
};
AlignedSeries align_usable(const AoiRecord& record, double occlusion_threshold);

struct SyntheticDatasetSpec {
  SceneSpec scene;
  std::size_t n_aois = 13;
  double lr_blur_sigma = 2.0;
  double lr_noise_sigma = 0.005;
  std::string aoi_prefix = "aoi";

  nlohmann::json to_json() const;
  static SyntheticDatasetSpec from_json(const nlohmann::json& j);
};

// Writes n_aois synthetic AOIs under root, each with its own derived seed.
std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& root,
                                                 const SyntheticDatasetSpec& spec);

}  // namespace stsr
