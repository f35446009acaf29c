#include "stsr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "stsr/image_io.hpp"

namespace stsr {

namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// SceneSpec
// ---------------------------------------------------------------------------

void SceneSpec::validate() const {
  if (n_timesteps < 1) throw ValidationError("SceneSpec.n_timesteps must be >= 1");
  if (scale_factor < 2) throw ValidationError("SceneSpec.scale_factor must be >= 2");
  if (hr_size < 1 || hr_size % scale_factor != 0) {
    throw ValidationError("SceneSpec.hr_size must be divisible by scale_factor");
  }
  if (bands < 1) throw ValidationError("SceneSpec.bands must be >= 1");
  if (min_buildings < 0 || max_buildings < min_buildings) {
    throw ValidationError("SceneSpec building count range is invalid");
  }
  if (min_building_size < 2 || max_building_size < min_building_size ||
      max_building_size + 4 > hr_size) {
    throw ValidationError("SceneSpec building size range is invalid");
  }
  if (noise_sigma < 0.0) throw ValidationError("SceneSpec.noise_sigma must be >= 0");
  if (!(gsd > 0.0)) throw ValidationError("SceneSpec.gsd must be > 0");
}

nlohmann::json SceneSpec::to_json() const {
  return {{"seed", seed},
          {"aoi_id", aoi_id},
          {"n_timesteps", n_timesteps},
          {"hr_size", hr_size},
          {"scale_factor", scale_factor},
          {"bands", bands},
          {"first_month", first_month},
          {"gsd", gsd},
          {"min_buildings", min_buildings},
          {"max_buildings", max_buildings},
          {"min_building_size", min_building_size},
          {"max_building_size", max_building_size},
          {"rotated_fraction", rotated_fraction},
          {"initial_fraction", initial_fraction},
          {"noise_sigma", noise_sigma}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.seed = j.value("seed", s.seed);
  s.aoi_id = j.value("aoi_id", s.aoi_id);
  s.n_timesteps = j.value("n_timesteps", s.n_timesteps);
  s.hr_size = j.value("hr_size", s.hr_size);
  s.scale_factor = j.value("scale_factor", s.scale_factor);
  s.bands = j.value("bands", s.bands);
  s.first_month = j.value("first_month", s.first_month);
  s.gsd = j.value("gsd", s.gsd);
  s.min_buildings = j.value("min_buildings", s.min_buildings);
  s.max_buildings = j.value("max_buildings", s.max_buildings);
  s.min_building_size = j.value("min_building_size", s.min_building_size);
  s.max_building_size = j.value("max_building_size", s.max_building_size);
  s.rotated_fraction = j.value("rotated_fraction", s.rotated_fraction);
  s.initial_fraction = j.value("initial_fraction", s.initial_fraction);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  return s;
}

// ---------------------------------------------------------------------------
// Filtering and pairing
// ---------------------------------------------------------------------------

ImageTimeSeries filter_usable(const ImageTimeSeries& series, std::span<const double> fractions,
                              double threshold) {
  if (fractions.size() != series.frames.size()) {
    throw ValidationError("filter_usable: one occlusion fraction per frame is required");
  }
  ImageTimeSeries out{series.aoi_id, {}};
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double f = fractions[i];
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ValidationError("filter_usable: occlusion fraction outside [0,1]");
    }
    if (f <= threshold) {
      out.frames.push_back(series.frames[i]);
    }
  }
  if (out.frames.empty()) {
    throw ValidationError("filter_usable: every frame of AOI '" + series.aoi_id +
                          "' was excluded");
  }
  return out;
}

ImageTimeSeries filter_usable(const ImageTimeSeries& series, const OcclusionEstimator& estimator,
                              double threshold) {
  std::vector<double> fractions;
  fractions.reserve(series.frames.size());
  for (const auto& f : series.frames) {
    fractions.push_back(estimator(f));
  }
  return filter_usable(series, fractions, threshold);
}

std::vector<PairedSample> make_training_pairs(const ImageTimeSeries& lr,
                                              const ImageTimeSeries& hr) {
  if (lr.aoi_id != hr.aoi_id) {
    throw ValidationError("make_training_pairs: LR and HR series cover different AOIs");
  }
  std::map<int, std::size_t> hr_by_month;
  for (std::size_t i = 0; i < hr.frames.size(); ++i) {
    hr_by_month[hr.frames[i].timestamp] = i;
  }
  // (lr index, hr index) for each shared month, in month order.
  std::vector<std::pair<std::size_t, std::size_t>> shared;
  for (std::size_t i = 0; i < lr.frames.size(); ++i) {
    auto it = hr_by_month.find(lr.frames[i].timestamp);
    if (it != hr_by_month.end()) {
      shared.emplace_back(i, it->second);
    }
  }
  if (shared.size() < 2) {
    throw ValidationError("make_training_pairs: need at least 2 shared timestamps, got " +
                          std::to_string(shared.size()));
  }
  const int first = lr.frames[shared.front().first].timestamp;
  const int last = lr.frames[shared.back().first].timestamp;

  std::vector<PairedSample> out;
  out.reserve(shared.size() * (shared.size() - 1));
  for (std::size_t t = 0; t < shared.size(); ++t) {
    for (std::size_t r = 0; r < shared.size(); ++r) {
      if (r == t) continue;
      PairedSample s;
      s.lr_target = lr.frames[shared[t].first];
      s.hr_reference = hr.frames[shared[r].second];
      s.hr_target = hr.frames[shared[t].second];
      s.t_index = static_cast<int>(t);
      s.t_ref_index = static_cast<int>(r);
      s.time = normalized_time(s.lr_target.timestamp, first, last);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<PairedSample> make_inference_pairs(const ImageTimeSeries& lr,
                                               const RasterImage& hr_latest) {
  if (lr.empty()) {
    throw ValidationError("make_inference_pairs: empty LR series");
  }
  if (hr_latest.aoi_id != lr.aoi_id) {
    throw ValidationError("make_inference_pairs: HR reference covers a different AOI");
  }
  for (const auto& f : lr.frames) {
    if (f.timestamp > hr_latest.timestamp) {
      throw ValidationError("make_inference_pairs: HR reference (month " +
                            std::to_string(hr_latest.timestamp) +
                            ") is older than LR frame at month " + std::to_string(f.timestamp));
    }
  }
  const int first = lr.first_timestamp();
  const int last = hr_latest.timestamp;
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < lr.frames.size(); ++i) {
    PairedSample s;
    s.lr_target = lr.frames[i];
    s.hr_reference = hr_latest;
    s.t_index = static_cast<int>(i);
    s.t_ref_index = -1;
    s.time = normalized_time(lr.frames[i].timestamp, first, last);
    out.push_back(std::move(s));
  }
  return out;
}

AoiSplit split_aois(std::vector<std::string> aoi_ids, std::size_t train_count,
                    std::size_t test_count, std::uint64_t seed) {
  if (train_count + test_count > aoi_ids.size()) {
    throw ValidationError("split_aois: requested " + std::to_string(train_count + test_count) +
                          " AOIs but only " + std::to_string(aoi_ids.size()) + " exist");
  }
  std::sort(aoi_ids.begin(), aoi_ids.end());
  if (std::adjacent_find(aoi_ids.begin(), aoi_ids.end()) != aoi_ids.end()) {
    throw ValidationError("split_aois: duplicate AOI id");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(aoi_ids.begin(), aoi_ids.end(), rng);
  AoiSplit split;
  split.seed = seed;
  split.train_aois.assign(aoi_ids.begin(), aoi_ids.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test_aois.assign(aoi_ids.begin() + static_cast<std::ptrdiff_t>(train_count),
                         aoi_ids.begin() + static_cast<std::ptrdiff_t>(train_count + test_count));
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

namespace {

struct Building {
  Ring ring;
  int appear_t = 0;
  std::array<float, 3> roof{};
  double min_x, min_y, max_x, max_y;
};

Ring rectangle(double cx, double cy, double w, double h, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const std::array<std::pair<double, double>, 4> corners = {
      {{-w / 2, -h / 2}, {w / 2, -h / 2}, {w / 2, h / 2}, {-w / 2, h / 2}}};
  Ring ring;
  for (const auto& [dx, dy] : corners) {
    ring.push_back({cx + c * dx - s * dy, cy + s * dx + c * dy});
  }
  return ring;
}

}  // namespace

SyntheticScene synthesize_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.hr_size;
  const int bands = spec.bands;

  // Background: a base colour, a few low-frequency undulations and a static
  // fine-grained texture.
  static constexpr std::array<float, 3> kSoil = {0.42f, 0.38f, 0.28f};
  auto background = torch::empty({bands, n, n}, torch::kFloat32);
  {
    std::array<double, 3> base{};
    for (int b = 0; b < 3; ++b) base[b] = kSoil[b] + 0.06 * (unit(rng) - 0.5);
    struct Wave { double fx, fy, phase, amp; };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i) {
      waves.push_back({(unit(rng) * 2 - 1) * 3.0, (unit(rng) * 2 - 1) * 3.0,
                       unit(rng) * 2 * std::numbers::pi, 0.02 + 0.03 * unit(rng)});
    }
    std::normal_distribution<double> grain(0.0, 0.015);
    auto acc = background.accessor<float, 3>();
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        double wave = 0.0;
        for (const auto& w : waves) {
          wave += w.amp * std::sin(2 * std::numbers::pi * (w.fx * c + w.fy * r) / n + w.phase);
        }
        const double g = grain(rng);
        for (int b = 0; b < bands; ++b) {
          const double v = base[static_cast<std::size_t>(b % 3)] + wave * (b == 1 ? 1.3 : 1.0) + g;
          acc[b][r][c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }

  // Buildings: non-overlapping rectangles with a 2 px gap.
  std::vector<Building> buildings;
  std::uniform_int_distribution<int> count_dist(spec.min_buildings, spec.max_buildings);
  std::uniform_int_distribution<int> size_dist(spec.min_building_size, spec.max_building_size);
  const int target = count_dist(rng);
  static constexpr std::array<std::array<float, 3>, 4> kRoofs = {
      {{0.78f, 0.77f, 0.74f}, {0.72f, 0.32f, 0.26f}, {0.92f, 0.91f, 0.88f}, {0.52f, 0.62f, 0.78f}}};
  for (int i = 0; i < target; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double w = size_dist(rng);
      const double h = size_dist(rng);
      const double angle = unit(rng) < spec.rotated_fraction
                               ? (unit(rng) - 0.5) * std::numbers::pi / 3.0
                               : 0.0;
      const double cx = 2.0 + unit(rng) * (n - 4.0);
      const double cy = 2.0 + unit(rng) * (n - 4.0);
      Building b;
      b.ring = rectangle(std::round(cx), std::round(cy), w, h, angle);
      b.min_x = b.max_x = b.ring[0].x;
      b.min_y = b.max_y = b.ring[0].y;
      for (const auto& p : b.ring) {
        b.min_x = std::min(b.min_x, p.x);
        b.max_x = std::max(b.max_x, p.x);
        b.min_y = std::min(b.min_y, p.y);
        b.max_y = std::max(b.max_y, p.y);
      }
      if (b.min_x < 1.0 || b.min_y < 1.0 || b.max_x > n - 2.0 || b.max_y > n - 2.0) continue;
      const bool clash = std::any_of(buildings.begin(), buildings.end(), [&](const Building& o) {
        return b.min_x < o.max_x + 2.0 && o.min_x < b.max_x + 2.0 && b.min_y < o.max_y + 2.0 &&
               o.min_y < b.max_y + 2.0;
      });
      if (clash) continue;
      const auto footprint = rasterize(b.ring, n, n);
      if (std::count(footprint.values().begin(), footprint.values().end(), 1) < 9) continue;
      b.appear_t = (spec.n_timesteps == 1 || unit(rng) < spec.initial_fraction)
                       ? 0
                       : 1 + static_cast<int>(unit(rng) * (spec.n_timesteps - 1));
      b.appear_t = std::min(b.appear_t, spec.n_timesteps - 1);
      const auto& roof = kRoofs[static_cast<std::size_t>(unit(rng) * kRoofs.size()) % kRoofs.size()];
      for (int k = 0; k < 3; ++k) {
        b.roof[static_cast<std::size_t>(k)] =
            std::clamp(roof[static_cast<std::size_t>(k)] + static_cast<float>(0.06 * (unit(rng) - 0.5)), 0.0f, 1.0f);
      }
      buildings.push_back(std::move(b));
      break;
    }
  }

  SyntheticScene scene;
  scene.hr.aoi_id = spec.aoi_id;
  for (std::size_t i = 0; i < buildings.size(); ++i) {
    std::ostringstream id;
    id << "b" << std::setw(3) << std::setfill('0') << i;
    scene.footprints.polygons.push_back({id.str(), buildings[i].ring, buildings[i].appear_t});
  }

  std::vector<Mask> masks;
  for (const auto& b : buildings) masks.push_back(rasterize(b.ring, n, n));

  for (int k = 0; k < spec.n_timesteps; ++k) {
    auto frame = background.clone();
    auto acc = frame.accessor<float, 3>();
    for (std::size_t i = 0; i < buildings.size(); ++i) {
      if (k < buildings[i].appear_t) continue;
      const auto& m = masks[i];
      // Shadow cast one pixel down-right.
      for (int r = 0; r + 1 < n; ++r) {
        for (int c = 0; c + 1 < n; ++c) {
          if (m(r, c) && !m(r + 1, c + 1)) {
            for (int b = 0; b < bands; ++b) acc[b][r + 1][c + 1] *= 0.55f;
          }
        }
      }
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          if (!m(r, c)) continue;
          for (int b = 0; b < bands; ++b) {
            acc[b][r][c] = buildings[i].roof[static_cast<std::size_t>(b % 3)];
          }
        }
      }
    }
    if (spec.noise_sigma > 0.0) {
      std::mt19937_64 noise_rng(spec.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k + 1)));
      std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
      auto* p = frame.data_ptr<float>();
      for (std::int64_t i = 0; i < frame.numel(); ++i) p[i] += noise(noise_rng);
    }
    frame.clamp_(0.0f, 1.0f);
    scene.hr.frames.push_back(
        make_raster(frame, spec.first_month + k, spec.aoi_id, spec.gsd));
  }
  return scene;
}

RasterImage degrade(const RasterImage& hr, int scale_factor, double blur_sigma,
                    double noise_sigma, std::uint64_t seed) {
  if (scale_factor < 1 || hr.height() % scale_factor != 0 || hr.width() % scale_factor != 0) {
    throw ValidationError("degrade: image dimensions " + std::to_string(hr.height()) + "x" +
                          std::to_string(hr.width()) + " not divisible by " +
                          std::to_string(scale_factor));
  }
  auto x = hr.pixels.unsqueeze(0);  // [1,C,H,W]
  if (blur_sigma > 0.0) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * blur_sigma)));
    auto kernel = torch::empty({2 * radius + 1}, torch::kFloat32);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      const double w = std::exp(-0.5 * i * i / (blur_sigma * blur_sigma));
      kernel[i + radius] = static_cast<float>(w);
      total += w;
    }
    kernel /= static_cast<float>(total);
    const auto c = hr.bands();
    auto kx = kernel.view({1, 1, 1, -1}).repeat({c, 1, 1, 1});
    auto ky = kernel.view({1, 1, -1, 1}).repeat({c, 1, 1, 1});
    x = F::pad(x, F::PadFuncOptions({radius, radius, radius, radius}).mode(torch::kReplicate));
    x = F::conv2d(x, kx, F::Conv2dFuncOptions().groups(c));
    x = F::conv2d(x, ky, F::Conv2dFuncOptions().groups(c));
  }
  if (scale_factor > 1) {
    x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(scale_factor).stride(scale_factor));
  }
  x = x.squeeze(0).contiguous();
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(noise_sigma));
    auto* p = x.data_ptr<float>();
    for (std::int64_t i = 0; i < x.numel(); ++i) p[i] += noise(rng);
  }
  x = x.clamp(0.0f, 1.0f);
  RasterImage out = hr;
  out.pixels = x.contiguous();
  out.gsd = hr.gsd * scale_factor;
  return out;
}

// ---------------------------------------------------------------------------
// AOI directories
// ---------------------------------------------------------------------------

namespace {

nlohmann::json frames_to_json(const std::vector<FrameRecord>& frames) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : frames) {
    arr.push_back({{"filename", f.filename},
                   {"timestamp", f.timestamp},
                   {"gsd", f.gsd},
                   {"occlusion", f.occlusion}});
  }
  return arr;
}

std::vector<FrameRecord> frames_from_json(const nlohmann::json& arr) {
  std::vector<FrameRecord> out;
  for (const auto& f : arr) {
    out.push_back({f.at("filename").get<std::string>(), f.at("timestamp").get<int>(),
                   f.value("gsd", 1.0), f.value("occlusion", 0.0)});
  }
  std::sort(out.begin(), out.end(),
            [](const FrameRecord& a, const FrameRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

ImageTimeSeries load_frames(const std::filesystem::path& dir, const std::string& aoi,
                            const std::vector<FrameRecord>& frames) {
  ImageTimeSeries series{aoi, {}};
  for (const auto& f : frames) {
    series.frames.push_back(make_raster(read_raster_pixels(dir / f.filename), f.timestamp, aoi, f.gsd));
  }
  validate(series);
  return series;
}

}  // namespace

nlohmann::json AoiManifest::to_json() const {
  return {{"aoi_id", aoi_id}, {"hr", frames_to_json(hr)}, {"lr", frames_to_json(lr)}};
}

AoiManifest AoiManifest::from_json(const nlohmann::json& j) {
  AoiManifest m;
  m.aoi_id = j.at("aoi_id").get<std::string>();
  m.hr = frames_from_json(j.at("hr"));
  m.lr = frames_from_json(j.at("lr"));
  return m;
}

std::vector<double> AoiRecord::lr_occlusion() const {
  std::vector<double> out;
  for (const auto& f : manifest.lr) out.push_back(f.occlusion);
  return out;
}

std::vector<double> AoiRecord::hr_occlusion() const {
  std::vector<double> out;
  for (const auto& f : manifest.hr) out.push_back(f.occlusion);
  return out;
}

AoiRecord load_aoi(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) {
    throw ValidationError("missing manifest.json in " + dir.string());
  }
  AoiRecord rec;
  rec.manifest = AoiManifest::from_json(nlohmann::json::parse(in));
  rec.hr = load_frames(dir, rec.manifest.aoi_id, rec.manifest.hr);
  rec.lr = load_frames(dir, rec.manifest.aoi_id, rec.manifest.lr);
  if (std::filesystem::exists(dir / "labels.geojson")) {
    rec.labels = read_geojson(dir / "labels.geojson");
  }
  return rec;
}

void write_aoi(const std::filesystem::path& dir, const AoiRecord& record) {
  std::filesystem::create_directories(dir);
  const auto write_series = [&](const ImageTimeSeries& s, const std::vector<FrameRecord>& recs) {
    if (s.frames.size() != recs.size()) {
      throw ValidationError("write_aoi: manifest and series lengths differ");
    }
    for (std::size_t i = 0; i < recs.size(); ++i) {
      write_raster_pixels(dir / recs[i].filename, s.frames[i].pixels);
    }
  };
  write_series(record.hr, record.manifest.hr);
  write_series(record.lr, record.manifest.lr);
  if (record.labels) {
    write_geojson(dir / "labels.geojson", *record.labels);
  }
  std::ofstream out(dir / "manifest.json");
  out << record.manifest.to_json().dump(1) << '\n';
}

std::vector<std::string> list_aois(const std::filesystem::path& root) {
  std::vector<std::string> ids;
  if (!std::filesystem::is_directory(root)) {
    throw ValidationError("dataset root " + root.string() + " is not a directory");
  }
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

AlignedSeries align_usable(const AoiRecord& record, double occlusion_threshold) {
  const auto lr = filter_usable(record.lr, record.lr_occlusion(), occlusion_threshold);
  const auto hr = filter_usable(record.hr, record.hr_occlusion(), occlusion_threshold);
  std::map<int, const RasterImage*> hr_by_month;
  for (const auto& f : hr.frames) hr_by_month[f.timestamp] = &f;
  AlignedSeries out{{record.manifest.aoi_id, {}}, {record.manifest.aoi_id, {}}};
  for (const auto& f : lr.frames) {
    auto it = hr_by_month.find(f.timestamp);
    if (it != hr_by_month.end()) {
      out.lr.frames.push_back(f);
      out.hr.frames.push_back(*it->second);
    }
  }
  return out;
}

nlohmann::json SyntheticDatasetSpec::to_json() const {
  return {{"scene", scene.to_json()},
          {"n_aois", n_aois},
          {"lr_blur_sigma", lr_blur_sigma},
          {"lr_noise_sigma", lr_noise_sigma},
          {"aoi_prefix", aoi_prefix}};
}

SyntheticDatasetSpec SyntheticDatasetSpec::from_json(const nlohmann::json& j) {
  SyntheticDatasetSpec s;
  if (j.contains("scene")) s.scene = SceneSpec::from_json(j.at("scene"));
  s.n_aois = j.value("n_aois", s.n_aois);
  s.lr_blur_sigma = j.value("lr_blur_sigma", s.lr_blur_sigma);
  s.lr_noise_sigma = j.value("lr_noise_sigma", s.lr_noise_sigma);
  s.aoi_prefix = j.value("aoi_prefix", s.aoi_prefix);
  return s;
}

std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& root,
                                                 const SyntheticDatasetSpec& spec) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.n_aois; ++i) {
    std::ostringstream name;
    name << spec.aoi_prefix << std::setw(3) << std::setfill('0') << i;
    SceneSpec scene_spec = spec.scene;
    scene_spec.aoi_id = name.str();
    scene_spec.seed = spec.scene.seed * 1000003ULL + i;
    const auto scene = synthesize_scene(scene_spec);

    AoiRecord rec;
    rec.manifest.aoi_id = scene_spec.aoi_id;
    rec.hr = scene.hr;
    rec.lr.aoi_id = scene_spec.aoi_id;
    for (std::size_t k = 0; k < scene.hr.frames.size(); ++k) {
      const auto& f = scene.hr.frames[k];
      std::ostringstream fname;
      fname << std::setw(3) << std::setfill('0') << f.timestamp << ".png";
      rec.manifest.hr.push_back({"hr/" + fname.str(), f.timestamp, f.gsd, 0.0});
      auto lr = degrade(f, scene_spec.scale_factor, spec.lr_blur_sigma, spec.lr_noise_sigma,
                        scene_spec.seed * 7919ULL + k);
      rec.manifest.lr.push_back({"lr/" + fname.str(), f.timestamp, lr.gsd, 0.0});
      rec.lr.frames.push_back(std::move(lr));
    }
    rec.labels = scene.footprints;
    write_aoi(root / scene_spec.aoi_id, rec);
    ids.push_back(scene_spec.aoi_id);
  }
  return ids;
}

}  // namespace stsr
