#include "stsr/tracker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace stsr {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TrackerConfig TrackerConfig::paper() {
  TrackerConfig c;
  c.widths = {32, 64, 128, 256};
  c.enlarge = 3;
  c.patch = 512;
  return c;
}

TrackerConfig TrackerConfig::desk() {
  TrackerConfig c;
  c.widths = {8, 16, 32};
  c.enlarge = 2;
  c.patch = 64;
  return c;
}

void TrackerConfig::validate() const {
  if (bands < 1) throw ValidationError("TrackerConfig.bands must be >= 1");
  if (widths.empty()) throw ValidationError("TrackerConfig.widths must be non-empty");
  for (int w : widths) {
    if (w < 1) throw ValidationError("TrackerConfig.widths must be >= 1");
  }
  if (enlarge < 1) throw ValidationError("TrackerConfig.enlarge must be >= 1");
  const int divisor = 1 << (widths.size() - 1);
  if (patch < 1 || patch % divisor != 0) {
    throw ValidationError("TrackerConfig.patch must be a positive multiple of " +
                          std::to_string(divisor));
  }
  if (!(tau_bin > 0.0 && tau_bin < 1.0) || !(tau_app > 0.0 && tau_app < 1.0)) {
    throw ValidationError("TrackerConfig thresholds must lie in (0,1)");
  }
  if (min_area < 0.0) throw ValidationError("TrackerConfig.min_area must be >= 0");
}

nlohmann::json TrackerConfig::to_json() const {
  return {{"bands", bands},     {"widths", widths},   {"enlarge", enlarge},
          {"patch", patch},     {"tau_bin", tau_bin}, {"tau_app", tau_app},
          {"min_area", min_area}};
}

TrackerConfig TrackerConfig::from_json(const nlohmann::json& j) {
  TrackerConfig c;
  c.bands = j.value("bands", c.bands);
  c.widths = j.value("widths", c.widths);
  c.enlarge = j.value("enlarge", c.enlarge);
  c.patch = j.value("patch", c.patch);
  c.tau_bin = j.value("tau_bin", c.tau_bin);
  c.tau_app = j.value("tau_app", c.tau_app);
  c.min_area = j.value("min_area", c.min_area);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Segmenter
// ---------------------------------------------------------------------------

namespace {

// Group norm keeps from-scratch training out of the all-background plateau
// and behaves identically in training and inference.
nn::GroupNorm group_norm(int channels) {
  const int groups = std::gcd(channels, 4);
  return nn::GroupNorm(nn::GroupNormOptions(groups, channels));
}

nn::Sequential double_conv(int in, int out) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)), group_norm(out),
                        nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)),
                        group_norm(out), nn::ReLU());
}

}  // namespace

SegmenterImpl::SegmenterImpl(const TrackerConfig& cfg) {
  cfg.validate();
  enc_ = register_module("enc", nn::ModuleList());
  dec_ = register_module("dec", nn::ModuleList());
  up_ = register_module("up", nn::ModuleList());
  const auto& w = cfg.widths;
  for (std::size_t i = 0; i < w.size(); ++i) {
    enc_->push_back(double_conv(i == 0 ? cfg.bands : w[i - 1], w[i]));
  }
  for (std::size_t i = w.size() - 1; i >= 1; --i) {
    up_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(w[i], w[i - 1], 2).stride(2)));
    dec_->push_back(double_conv(2 * w[i - 1], w[i - 1]));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(w[0], 1, 1)));
}

std::int64_t SegmenterImpl::size_divisor() const {
  return std::int64_t{1} << (enc_->size() - 1);
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  auto h = x;
  for (std::size_t i = 0; i < enc_->size(); ++i) {
    if (i > 0) {
      skips.push_back(h);
      h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
    }
    h = enc_[i]->as<nn::Sequential>()->forward(h);
  }
  for (std::size_t i = 0; i < up_->size(); ++i) {
    h = up_[i]->as<nn::ConvTranspose2d>()->forward(h);
    h = torch::cat({h, skips[skips.size() - 1 - i]}, 1);
    h = dec_[i]->as<nn::Sequential>()->forward(h);
  }
  return head_(h);
}

// ---------------------------------------------------------------------------
// Patch preprocessing
// ---------------------------------------------------------------------------

PatchSet preprocess_tensor(const torch::Tensor& chw, const TrackerConfig& cfg) {
  cfg.validate();
  PatchSet out;
  auto& L = out.layout;
  L.height = chw.size(1);
  L.width = chw.size(2);
  L.factor = cfg.enlarge;
  L.patch = cfg.patch;
  L.enlarged_height = L.height * cfg.enlarge;
  L.enlarged_width = L.width * cfg.enlarge;
  L.padded_height = (L.enlarged_height + cfg.patch - 1) / cfg.patch * cfg.patch;
  L.padded_width = (L.enlarged_width + cfg.patch - 1) / cfg.patch * cfg.patch;

  auto x = resize_bilinear(chw, L.enlarged_height, L.enlarged_width).unsqueeze(0);
  const auto pad_h = L.padded_height - L.enlarged_height;
  const auto pad_w = L.padded_width - L.enlarged_width;
  if (pad_h > 0 || pad_w > 0) {
    const bool can_reflect = pad_h < L.enlarged_height && pad_w < L.enlarged_width;
    auto opts = F::PadFuncOptions({0, pad_w, 0, pad_h});
    if (can_reflect) {
      opts.mode(torch::kReflect);
    } else {
      opts.mode(torch::kReplicate);
    }
    x = F::pad(x, opts);
  }
  x = x.squeeze(0);
  for (std::int64_t r = 0; r < L.padded_height; r += cfg.patch) {
    for (std::int64_t c = 0; c < L.padded_width; c += cfg.patch) {
      L.origins.emplace_back(r, c);
      out.patches.push_back(
          x.slice(1, r, r + cfg.patch).slice(2, c, c + cfg.patch).contiguous());
    }
  }
  return out;
}

PatchSet preprocess_frame(const RasterImage& img, const TrackerConfig& cfg) {
  return preprocess_tensor(img.pixels, cfg);
}

torch::Tensor reassemble(const PatchLayout& layout, const std::vector<torch::Tensor>& patches) {
  if (patches.size() != layout.origins.size() || patches.empty()) {
    throw ValidationError("reassemble: expected one patch per origin");
  }
  const auto k = patches.front().size(0);
  auto canvas = torch::zeros({k, layout.padded_height, layout.padded_width},
                             patches.front().options());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto [r, c] = layout.origins[i];
    canvas.slice(1, r, r + layout.patch).slice(2, c, c + layout.patch).copy_(patches[i]);
  }
  auto enlarged =
      canvas.slice(1, 0, layout.enlarged_height).slice(2, 0, layout.enlarged_width).unsqueeze(0);
  if (layout.factor > 1) {
    enlarged = F::avg_pool2d(enlarged, F::AvgPool2dFuncOptions(layout.factor).stride(layout.factor));
  }
  return enlarged.squeeze(0).contiguous();
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

void validate(const ProbabilityMapSeries& probs) {
  for (const auto& m : probs) {
    require_same_shape(m, probs.front(), "ProbabilityMapSeries");
    for (float v : m.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw ValidationError("ProbabilityMapSeries values must lie in [0,1]");
      }
    }
  }
}

ProbabilityMap segment_frame(const RasterImage& frame, Segmenter& seg, const TrackerConfig& cfg) {
  if (frame.bands() != cfg.bands) {
    throw ValidationError("segment: frame has " + std::to_string(frame.bands()) +
                          " bands, tracker expects " + std::to_string(cfg.bands));
  }
  torch::NoGradGuard no_grad;
  const auto set = preprocess_frame(to_model_space(frame), cfg);
  std::vector<torch::Tensor> outs;
  outs.reserve(set.patches.size());
  for (const auto& p : set.patches) {
    outs.push_back(torch::sigmoid(seg->forward(p.unsqueeze(0))).squeeze(0));
  }
  auto prob = reassemble(set.layout, outs).clamp(0.0, 1.0);
  ProbabilityMap map(frame.height(), frame.width());
  auto acc = prob.accessor<float, 3>();
  for (std::int64_t r = 0; r < map.height(); ++r) {
    for (std::int64_t c = 0; c < map.width(); ++c) map(r, c) = acc[0][r][c];
  }
  return map;
}

ProbabilityMapSeries segment_series(const ImageTimeSeries& series, Segmenter& seg,
                                    const TrackerConfig& cfg) {
  ProbabilityMapSeries out;
  out.reserve(series.frames.size());
  for (const auto& f : series.frames) {
    out.push_back(segment_frame(f, seg, cfg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collapse
// ---------------------------------------------------------------------------

ProbabilityMap temporal_collapse(const ProbabilityMapSeries& probs) {
  if (probs.empty()) {
    throw ValidationError("temporal_collapse: empty series");
  }
  ProbabilityMap out = probs.front();
  for (std::size_t t = 1; t < probs.size(); ++t) {
    require_same_shape(out, probs[t], "temporal_collapse");
    auto dst = out.values();
    auto src = probs[t].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  }
  return out;
}

Grid2D<std::int32_t> label_components(const Mask& mask, std::int32_t* count) {
  Grid2D<std::int32_t> labels(mask.height(), mask.width(), 0);
  std::int32_t next = 0;
  std::deque<std::pair<std::int64_t, std::int64_t>> queue;
  static constexpr std::array<std::pair<int, int>, 4> kNeighbours = {
      {{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
  for (std::int64_t r = 0; r < mask.height(); ++r) {
    for (std::int64_t c = 0; c < mask.width(); ++c) {
      if (!mask(r, c) || labels(r, c) != 0) continue;
      labels(r, c) = ++next;
      queue.emplace_back(r, c);
      while (!queue.empty()) {
        const auto [pr, pc] = queue.front();
        queue.pop_front();
        for (const auto& [dr, dc] : kNeighbours) {
          const auto nr = pr + dr;
          const auto nc = pc + dc;
          if (mask.contains(nr, nc) && mask(nr, nc) && labels(nr, nc) == 0) {
            labels(nr, nc) = next;
            queue.emplace_back(nr, nc);
          }
        }
      }
    }
  }
  if (count != nullptr) *count = next;
  return labels;
}

namespace {

struct Edge {
  std::int64_t x0, y0, x1, y1;
};

std::int64_t vertex_key(std::int64_t x, std::int64_t y) { return (y << 32) | x; }

Ring simplify(const std::vector<std::pair<std::int64_t, std::int64_t>>& loop) {
  Ring ring;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& prev = loop[(i + n - 1) % n];
    const auto& cur = loop[i];
    const auto& next = loop[(i + 1) % n];
    const auto cross = (cur.first - prev.first) * (next.second - cur.second) -
                       (cur.second - prev.second) * (next.first - cur.first);
    if (cross != 0) {
      ring.push_back({static_cast<double>(cur.first), static_cast<double>(cur.second)});
    }
  }
  return ring;
}

// A component touching itself diagonally visits the same corner twice.
// Both visits turn right around a pixel of the component, so pulling each
// one a little along its corner bisector separates them without moving the
// outline off any pixel centre.
void separate_pinches(Ring& ring) {
  constexpr double kNudge = 1e-3;
  const std::size_t n = ring.size();
  std::map<std::pair<double, double>, int> seen;
  for (const auto& p : ring) ++seen[{p.x, p.y}];
  Ring out = ring;
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[{ring[i].x, ring[i].y}] < 2) continue;
    const auto& prev = ring[(i + n - 1) % n];
    const auto& next = ring[(i + 1) % n];
    const double px = prev.x - ring[i].x, py = prev.y - ring[i].y;
    const double nx = next.x - ring[i].x, ny = next.y - ring[i].y;
    const double lp = std::hypot(px, py), ln = std::hypot(nx, ny);
    out[i].x += kNudge * (px / lp + nx / ln);
    out[i].y += kNudge * (py / lp + ny / ln);
  }
  ring = std::move(out);
}

}  // namespace

Ring trace_outer_boundary(const Grid2D<std::int32_t>& labels, std::int32_t id) {
  const auto in = [&](std::int64_t r, std::int64_t c) {
    return labels.contains(r, c) && labels(r, c) == id;
  };
  // Directed boundary edges, interior to the right of travel on screen.
  std::vector<Edge> edges;
  for (std::int64_t r = 0; r < labels.height(); ++r) {
    for (std::int64_t c = 0; c < labels.width(); ++c) {
      if (labels(r, c) != id) continue;
      if (!in(r - 1, c)) edges.push_back({c, r, c + 1, r});
      if (!in(r, c + 1)) edges.push_back({c + 1, r, c + 1, r + 1});
      if (!in(r + 1, c)) edges.push_back({c + 1, r + 1, c, r + 1});
      if (!in(r, c - 1)) edges.push_back({c, r + 1, c, r});
    }
  }
  if (edges.empty()) return {};

  std::map<std::int64_t, std::vector<std::size_t>> outgoing;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    outgoing[vertex_key(edges[i].x0, edges[i].y0)].push_back(i);
  }
  // Successor of each edge: prefer a right turn, then straight, then left.
  // Hugging the current pixel keeps diagonal neighbours (not 4-connected)
  // apart, and makes the successor map a permutation whose cycles are the
  // boundary loops.
  std::vector<std::size_t> successor(edges.size(), edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    const auto dx = e.x1 - e.x0;
    const auto dy = e.y1 - e.y0;
    const auto& candidates = outgoing[vertex_key(e.x1, e.y1)];
    const std::array<std::pair<std::int64_t, std::int64_t>, 3> preference = {
        {{-dy, dx}, {dx, dy}, {dy, -dx}}};
    for (const auto& [ndx, ndy] : preference) {
      for (std::size_t cand : candidates) {
        const auto& ce = edges[cand];
        if (ce.x1 - ce.x0 == ndx && ce.y1 - ce.y0 == ndy) {
          successor[i] = cand;
          break;
        }
      }
      if (successor[i] != edges.size()) break;
    }
  }
  std::vector<bool> used(edges.size(), false);
  Ring best;
  double best_area = 0.0;
  for (std::size_t start = 0; start < edges.size(); ++start) {
    if (used[start]) continue;
    std::vector<std::pair<std::int64_t, std::int64_t>> loop;
    std::size_t cur = start;
    while (cur < edges.size() && !used[cur]) {
      used[cur] = true;
      loop.emplace_back(edges[cur].x0, edges[cur].y0);
      cur = successor[cur];
    }
    Ring ring = simplify(loop);
    separate_pinches(ring);
    const double area = signed_area(ring);
    if (area > best_area) {
      best_area = area;
      best = std::move(ring);
    }
  }
  return best;
}

std::vector<TracedPolygon> polygonize(const ProbabilityMap& map, double tau_bin, double min_area) {
  Mask mask(map.height(), map.width(), 0);
  for (std::int64_t r = 0; r < map.height(); ++r) {
    for (std::int64_t c = 0; c < map.width(); ++c) {
      mask(r, c) = map(r, c) > tau_bin ? 1 : 0;
    }
  }
  std::int32_t count = 0;
  const auto labels = label_components(mask, &count);
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(count) + 1, 0);
  for (auto v : labels.values()) ++sizes[static_cast<std::size_t>(v)];

  std::vector<TracedPolygon> out;
  for (std::int32_t id = 1; id <= count; ++id) {
    const auto n = sizes[static_cast<std::size_t>(id)];
    if (static_cast<double>(n) < min_area) continue;
    out.push_back({trace_outer_boundary(labels, id), n});
  }
  return out;
}

std::vector<double> interior_means(const Mask& mask, const ProbabilityMapSeries& probs) {
  std::vector<double> means;
  for (const auto& p : probs) {
    require_same_shape(mask, p, "interior_means");
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask.values()[i]) {
        sum += p.values()[i];
        ++n;
      }
    }
    means.push_back(n > 0 ? sum / static_cast<double>(n) : 0.0);
  }
  return means;
}

FootprintSet spatial_collapse(const std::vector<TracedPolygon>& polygons,
                              const ProbabilityMapSeries& probs, double tau_app) {
  FootprintSet out;
  if (probs.empty()) return out;
  struct Kept {
    Footprint fp;
    Point c;
    std::size_t order;
  };
  std::vector<Kept> kept;
  for (std::size_t i = 0; i < polygons.size(); ++i) {
    const auto mask = rasterize(polygons[i].vertices, probs.front().height(), probs.front().width());
    const auto means = interior_means(mask, probs);
    const auto it = std::find_if(means.begin(), means.end(), [&](double m) { return m >= tau_app; });
    if (it == means.end()) continue;
    Footprint fp;
    fp.vertices = polygons[i].vertices;
    fp.appear_t = static_cast<int>(it - means.begin());
    kept.push_back({std::move(fp), centroid(polygons[i].vertices), i});
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Kept& a, const Kept& b) {
    if (a.c.y != b.c.y) return a.c.y < b.c.y;
    if (a.c.x != b.c.x) return a.c.x < b.c.x;
    return a.order < b.order;
  });
  for (std::size_t i = 0; i < kept.size(); ++i) {
    std::ostringstream id;
    id << "t" << std::setw(4) << std::setfill('0') << i;
    kept[i].fp.building_id = id.str();
    out.polygons.push_back(std::move(kept[i].fp));
  }
  return out;
}

FootprintSet track_probabilities(const ProbabilityMapSeries& probs, const TrackerConfig& cfg) {
  const auto collapsed = temporal_collapse(probs);
  return spatial_collapse(polygonize(collapsed, cfg.tau_bin, cfg.min_area), probs, cfg.tau_app);
}

FootprintSet track(const ImageTimeSeries& series, Segmenter& seg, const TrackerConfig& cfg) {
  if (series.empty()) return {};
  return track_probabilities(segment_series(series, seg, cfg), cfg);
}

}  // namespace stsr
