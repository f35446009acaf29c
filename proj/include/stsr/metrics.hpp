#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stsr/footprint.hpp"
#include "stsr/grid.hpp"

namespace stsr {

enum PixelClass : int { kBackground = 0, kBuilding = 1 };

// n[g][p]: pixels with ground-truth class g predicted as p.
struct ConfusionCounts {
  std::array<std::array<std::int64_t, 2>, 2> n{};

  std::int64_t total() const { return n[0][0] + n[0][1] + n[1][0] + n[1][1]; }
  void add(const Mask& pred, const Mask& gt);
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

double pixel_accuracy(const ConfusionCounts& c);
// 1.0 when the class is absent from both prediction and ground truth.
double iou(const ConfusionCounts& c, int cls);
double mean_iou(const ConfusionCounts& c);
double fwiou(const ConfusionCounts& c);

// Masks are binary (zero / non-zero).
double pixel_accuracy(const Mask& pred, const Mask& gt);
double iou(const Mask& pred, const Mask& gt, int cls);
double fwiou(const Mask& pred, const Mask& gt);

inline constexpr double kTrackIouThreshold = 0.25;

struct TrackMatch {
  // matches[k][i] = index of the gt building matched to pred track i in
  // frame k, or -1.
  std::vector<std::vector<int>> matches;
  std::vector<bool> correct;  // per pred track
  double score = 0.0;
};

// Track-level F1. Per frame, present polygons are matched one-to-one by
// descending mask IoU (>= iou_thresh; ties by pred then gt index). A pred
// track is correct when every match it gets is the same gt building and it
// is matched in every frame from the later of the two appearance steps to
// the end of the series.
TrackMatch match_tracks(const FootprintSet& pred, const FootprintSet& gt, int n_frames,
                        std::int64_t height, std::int64_t width,
                        double iou_thresh = kTrackIouThreshold);
double tracking_score(const FootprintSet& pred, const FootprintSet& gt, int n_frames,
                      std::int64_t height, std::int64_t width,
                      double iou_thresh = kTrackIouThreshold);

struct AoiMetrics {
  std::string aoi_id;
  double acc = 0.0;
  double iou = 0.0;  // mean over background and building
  double fwiou = 0.0;
  double ts = 0.0;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;

  nlohmann::json to_json() const;
  static AoiMetrics from_json(const nlohmann::json& j);
};

// Acc, IoU and FWIoU pool confusion counts over the per-frame masks.
AoiMetrics evaluate_aoi(const std::string& aoi_id, const FootprintSet& pred,
                        const FootprintSet& gt, int n_frames, std::int64_t height,
                        std::int64_t width);

struct MetricsReport {
  double acc = 0.0;
  double iou = 0.0;
  double fwiou = 0.0;
  double ts = 0.0;
  std::vector<AoiMetrics> per_aoi;
  std::vector<std::string> missing;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  std::string table(const std::string& label = "run") const;
};

// Unweighted mean over AOIs.
MetricsReport aggregate(std::vector<AoiMetrics> per_aoi);

// Fixed-width table, one row per (label, report), columns Acc IoU FWIoU TS.
std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

// Scores <pred_dir>/<aoi>.geojson against <label_root>/<aoi>/labels.geojson
// for every labelled AOI. AOIs without a prediction are listed in `missing`
// and skipped; an empty prediction directory is an error.
MetricsReport evaluate_run(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& label_root,
                           const std::vector<std::string>& aois = {});

void write_report(const std::filesystem::path& dir, const MetricsReport& report,
                  const std::string& label = "run");

}  // namespace stsr
