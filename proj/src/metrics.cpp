#include "stsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <tuple>

#include "stsr/dataset.hpp"
#include "stsr/image_io.hpp"

namespace stsr {

void ConfusionCounts::add(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "confusion");
  const auto p = pred.values();
  const auto g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) ++n[g[i] != 0][p[i] != 0];
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  for (int g = 0; g < 2; ++g) {
    for (int p = 0; p < 2; ++p) n[g][p] += o.n[g][p];
  }
  return *this;
}

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  ConfusionCounts c;
  c.add(pred, gt);
  return c;
}

double pixel_accuracy(const ConfusionCounts& c) {
  const auto total = c.total();
  if (total == 0) throw ValidationError("pixel_accuracy: empty masks");
  return static_cast<double>(c.n[0][0] + c.n[1][1]) / static_cast<double>(total);
}

double iou(const ConfusionCounts& c, int cls) {
  if (cls != kBackground && cls != kBuilding) throw ValidationError("iou: class must be 0 or 1");
  const int o = 1 - cls;
  const auto inter = c.n[cls][cls];
  const auto uni = inter + c.n[cls][o] + c.n[o][cls];
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_iou(const ConfusionCounts& c) {
  return 0.5 * (iou(c, kBackground) + iou(c, kBuilding));
}

double fwiou(const ConfusionCounts& c) {
  const auto total = c.total();
  if (total == 0) throw ValidationError("fwiou: empty masks");
  double s = 0.0;
  for (int cls = 0; cls < 2; ++cls) {
    const auto freq = c.n[cls][0] + c.n[cls][1];
    if (freq > 0) s += static_cast<double>(freq) / static_cast<double>(total) * iou(c, cls);
  }
  return s;
}

double pixel_accuracy(const Mask& pred, const Mask& gt) {
  return pixel_accuracy(confusion(pred, gt));
}
double iou(const Mask& pred, const Mask& gt, int cls) { return iou(confusion(pred, gt), cls); }
double fwiou(const Mask& pred, const Mask& gt) { return fwiou(confusion(pred, gt)); }

namespace {

void require_well_formed(const FootprintSet& set, int n_frames, const char* side) {
  for (const auto& f : set.polygons) {
    bool finite = f.vertices.size() >= 3;
    for (const auto& p : f.vertices) finite = finite && std::isfinite(p.x) && std::isfinite(p.y);
    if (!finite || !(polygon_area(f.vertices) > 0.0)) {
      throw ValidationError(std::string("tracking_score: malformed ") + side + " polygon '" +
                            f.building_id + "'");
    }
    if (f.appear_t < 0 || f.appear_t >= n_frames) {
      throw ValidationError(std::string("tracking_score: ") + side + " polygon '" +
                            f.building_id + "' has appear_t outside the series");
    }
  }
}

std::vector<std::vector<std::int64_t>> pixel_lists(const FootprintSet& set, std::int64_t h,
                                                   std::int64_t w) {
  std::vector<std::vector<std::int64_t>> out;
  for (const auto& f : set.polygons) {
    const auto m = rasterize(f.vertices, h, w);
    std::vector<std::int64_t> px;
    const auto v = m.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i]) px.push_back(static_cast<std::int64_t>(i));
    }
    out.push_back(std::move(px));
  }
  return out;
}

double list_iou(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const auto uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

TrackMatch match_tracks(const FootprintSet& pred, const FootprintSet& gt, int n_frames,
                        std::int64_t height, std::int64_t width, double iou_thresh) {
  if (n_frames < 1) throw ValidationError("tracking_score: series length must be >= 1");
  require_well_formed(pred, n_frames, "predicted");
  require_well_formed(gt, n_frames, "ground-truth");
  const auto np = pred.size();
  const auto ng = gt.size();
  TrackMatch tm;
  tm.matches.assign(static_cast<std::size_t>(n_frames), std::vector<int>(np, -1));
  tm.correct.assign(np, false);

  const auto pp = pixel_lists(pred, height, width);
  const auto gp = pixel_lists(gt, height, width);
  // Polygons are static, so pair IoUs are computed once; only presence
  // changes between frames.
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      const double v = list_iou(pp[i], gp[j]);
      if (v >= iou_thresh && v > 0.0) pairs.emplace_back(v, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });

  for (int k = 0; k < n_frames; ++k) {
    std::vector<bool> gt_used(ng, false);
    auto& row = tm.matches[static_cast<std::size_t>(k)];
    for (const auto& [v, i, j] : pairs) {
      if (pred.polygons[i].appear_t > k || gt.polygons[j].appear_t > k) continue;
      if (row[i] >= 0 || gt_used[j]) continue;
      row[i] = static_cast<int>(j);
      gt_used[j] = true;
    }
  }

  std::size_t n_correct = 0;
  for (std::size_t i = 0; i < np; ++i) {
    int target = -1;
    bool ok = true;
    for (int k = 0; k < n_frames && ok; ++k) {
      const int m = tm.matches[static_cast<std::size_t>(k)][i];
      if (m < 0) continue;
      if (target < 0) target = m;
      ok = m == target;
    }
    if (!ok || target < 0) continue;
    const int from = std::max(pred.polygons[i].appear_t,
                              gt.polygons[static_cast<std::size_t>(target)].appear_t);
    for (int k = from; k < n_frames && ok; ++k) {
      ok = tm.matches[static_cast<std::size_t>(k)][i] == target;
    }
    tm.correct[i] = ok;
    n_correct += ok;
  }

  if (np == 0 && ng == 0) {
    tm.score = 1.0;
  } else {
    // 2PR/(P+R) with P = c/np and R = c/ng reduces to 2c/(np+ng).
    tm.score = 2.0 * static_cast<double>(n_correct) / static_cast<double>(np + ng);
  }
  return tm;
}

double tracking_score(const FootprintSet& pred, const FootprintSet& gt, int n_frames,
                      std::int64_t height, std::int64_t width, double iou_thresh) {
  return match_tracks(pred, gt, n_frames, height, width, iou_thresh).score;
}

nlohmann::json AoiMetrics::to_json() const {
  return {{"aoi_id", aoi_id}, {"acc", acc},       {"iou", iou},  {"fwiou", fwiou},
          {"ts", ts},         {"n_pred", n_pred}, {"n_gt", n_gt}};
}

AoiMetrics AoiMetrics::from_json(const nlohmann::json& j) {
  AoiMetrics m;
  m.aoi_id = j.at("aoi_id").get<std::string>();
  m.acc = j.at("acc").get<double>();
  m.iou = j.at("iou").get<double>();
  m.fwiou = j.at("fwiou").get<double>();
  m.ts = j.at("ts").get<double>();
  m.n_pred = j.value("n_pred", std::size_t{0});
  m.n_gt = j.value("n_gt", std::size_t{0});
  return m;
}

AoiMetrics evaluate_aoi(const std::string& aoi_id, const FootprintSet& pred,
                        const FootprintSet& gt, int n_frames, std::int64_t height,
                        std::int64_t width) {
  AoiMetrics m;
  m.aoi_id = aoi_id;
  ConfusionCounts c;
  for (int k = 0; k < n_frames; ++k) {
    c.add(frame_mask(pred, k, height, width), frame_mask(gt, k, height, width));
  }
  m.acc = pixel_accuracy(c);
  m.iou = mean_iou(c);
  m.fwiou = fwiou(c);
  m.ts = tracking_score(pred, gt, n_frames, height, width);
  m.n_pred = pred.size();
  m.n_gt = gt.size();
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& a : per_aoi) per.push_back(a.to_json());
  return {{"acc", acc},   {"iou", iou},         {"fwiou", fwiou}, {"ts", ts},
          {"per_aoi", per}, {"missing", missing}, {"meta", meta}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.acc = j.at("acc").get<double>();
  r.iou = j.at("iou").get<double>();
  r.fwiou = j.at("fwiou").get<double>();
  r.ts = j.at("ts").get<double>();
  for (const auto& a : j.value("per_aoi", nlohmann::json::array())) {
    r.per_aoi.push_back(AoiMetrics::from_json(a));
  }
  r.missing = j.value("missing", std::vector<std::string>{});
  r.meta = j.value("meta", nlohmann::json::object());
  return r;
}

std::string MetricsReport::table(const std::string& label) const {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& a : per_aoi) {
    MetricsReport one;
    one.acc = a.acc;
    one.iou = a.iou;
    one.fwiou = a.fwiou;
    one.ts = a.ts;
    rows.emplace_back("  " + a.aoi_id, one);
  }
  MetricsReport summary = *this;
  rows.emplace_back(label, summary);
  return format_table(rows);
}

MetricsReport aggregate(std::vector<AoiMetrics> per_aoi) {
  if (per_aoi.empty()) throw ValidationError("aggregate: no AOIs to aggregate");
  MetricsReport r;
  for (const auto& a : per_aoi) {
    r.acc += a.acc;
    r.iou += a.iou;
    r.fwiou += a.fwiou;
    r.ts += a.ts;
  }
  const double n = static_cast<double>(per_aoi.size());
  r.acc /= n;
  r.iou /= n;
  r.fwiou /= n;
  r.ts /= n;
  r.per_aoi = std::move(per_aoi);
  return r;
}

std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [label, r] : rows) width = std::max(width, label.size());
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s\n", static_cast<int>(width), "source",
                "Acc", "IoU", "FWIoU", "TS");
  out << buf;
  for (const auto& [label, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.4f %8.4f %8.4f %8.4f\n", static_cast<int>(width),
                  label.c_str(), r.acc, r.iou, r.fwiou, r.ts);
    out << buf;
  }
  return out.str();
}

MetricsReport evaluate_run(const std::filesystem::path& pred_dir,
                           const std::filesystem::path& label_root,
                           const std::vector<std::string>& aois) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(pred_dir)) {
    throw ValidationError("evaluate_run: " + pred_dir.string() + " is not a directory");
  }
  std::set<std::string> available;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.path().extension() == ".geojson") available.insert(e.path().stem().string());
  }
  if (available.empty()) {
    throw ValidationError("evaluate_run: no predictions in " + pred_dir.string());
  }
  const auto ids = aois.empty() ? list_aois(label_root) : aois;
  std::vector<AoiMetrics> per;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!available.count(id)) {
      std::cerr << "warning: no prediction for AOI " << id << ", skipped\n";
      missing.push_back(id);
      continue;
    }
    const auto dir = label_root / id;
    const auto manifest =
        AoiManifest::from_json(nlohmann::json::parse(std::ifstream(dir / "manifest.json")));
    if (manifest.hr.empty()) throw ValidationError("evaluate_run: AOI " + id + " has no frames");
    const auto first = read_raster_pixels(dir / manifest.hr.front().filename);
    const auto gt = read_geojson(dir / "labels.geojson");
    const auto pred = read_geojson(pred_dir / (id + ".geojson"));
    per.push_back(evaluate_aoi(id, pred, gt, static_cast<int>(manifest.hr.size()), first.size(1),
                               first.size(2)));
  }
  if (per.empty()) throw ValidationError("evaluate_run: no labelled AOI has a prediction");
  auto report = aggregate(std::move(per));
  report.missing = std::move(missing);
  return report;
}

void write_report(const std::filesystem::path& dir, const MetricsReport& report,
                  const std::string& label) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << report.to_json().dump(2) << '\n';
  std::ofstream(dir / "report.txt") << report.table(label);
}

}  // namespace stsr
