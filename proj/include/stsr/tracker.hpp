#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "stsr/footprint.hpp"
#include "stsr/grid.hpp"
#include "stsr/raster.hpp"

namespace stsr {

struct TrackerConfig {
  int bands = 3;
  std::vector<int> widths{8, 16, 32};  // U-shaped segmentation backbone
  int enlarge = 3;
  int patch = 512;
  double tau_bin = 0.5;
  double tau_app = 0.5;
  double min_area = 4.0;  // pixels

  static TrackerConfig paper();
  static TrackerConfig desk();

  void validate() const;
  nlohmann::json to_json() const;
  static TrackerConfig from_json(const nlohmann::json& j);
};

// Small U-shaped segmentation network emitting one logit per pixel.
class SegmenterImpl : public torch::nn::Module {
 public:
  explicit SegmenterImpl(const TrackerConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);  // [B,C,H,W] -> [B,1,H,W] logits
  std::int64_t size_divisor() const;

 private:
  torch::nn::ModuleList enc_, dec_, up_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Segmenter);

// Non-overlapping patches of an enlarged frame, with what is needed to map
// patch outputs back to the original grid.
struct PatchLayout {
  std::int64_t height = 0, width = 0;                    // original
  std::int64_t enlarged_height = 0, enlarged_width = 0;  // after enlargement
  std::int64_t padded_height = 0, padded_width = 0;      // after reflect padding
  int factor = 1;
  int patch = 1;
  std::vector<std::pair<std::int64_t, std::int64_t>> origins;  // row-major
};

struct PatchSet {
  PatchLayout layout;
  std::vector<torch::Tensor> patches;  // each [C, patch, patch]
};

// Bilinear enlargement, reflect padding up to a multiple of the patch size
// (replicate padding where reflection would exceed the frame), row-major
// tiling.
PatchSet preprocess_frame(const RasterImage& img, const TrackerConfig& cfg);
PatchSet preprocess_tensor(const torch::Tensor& chw, const TrackerConfig& cfg);

// Places per-patch maps [K,P,P] back, drops padding and area-averages down by
// the enlargement factor. Returns [K, height, width].
torch::Tensor reassemble(const PatchLayout& layout, const std::vector<torch::Tensor>& patches);

using ProbabilityMapSeries = std::vector<ProbabilityMap>;

void validate(const ProbabilityMapSeries& probs);

ProbabilityMapSeries segment_series(const ImageTimeSeries& series, Segmenter& seg,
                                    const TrackerConfig& cfg);
ProbabilityMap segment_frame(const RasterImage& frame, Segmenter& seg, const TrackerConfig& cfg);

// Pixelwise maximum over time.
ProbabilityMap temporal_collapse(const ProbabilityMapSeries& probs);

struct TracedPolygon {
  Ring vertices;            // outer boundary along pixel edges
  std::int64_t pixel_count = 0;  // pixels in the 4-connected component
};

// Binarise (value > tau_bin), 4-connected components, outer boundary of
// each, drop components with fewer than min_area pixels. Deterministic
// order: components by first pixel in row-major order.
std::vector<TracedPolygon> polygonize(const ProbabilityMap& map, double tau_bin, double min_area);

// Component labels (0 = background, 1..n) of a binary mask, 4-connectivity,
// numbered by first pixel in row-major order.
Grid2D<std::int32_t> label_components(const Mask& mask, std::int32_t* count = nullptr);

// Outer boundary of label `id` along pixel edges, clockwise on screen
// (interior to the right of travel, positive signed_area) with collinear
// vertices removed. Diagonal contacts are not crossed.
Ring trace_outer_boundary(const Grid2D<std::int32_t>& labels, std::int32_t id);

// Mean probability inside `mask` in each frame.
std::vector<double> interior_means(const Mask& mask, const ProbabilityMapSeries& probs);

// appear_t = first frame whose interior mean reaches tau_app; polygons that
// never reach it are dropped. Ids are assigned by centroid, row-major.
FootprintSet spatial_collapse(const std::vector<TracedPolygon>& polygons,
                              const ProbabilityMapSeries& probs, double tau_app);

FootprintSet track_probabilities(const ProbabilityMapSeries& probs, const TrackerConfig& cfg);
FootprintSet track(const ImageTimeSeries& series, Segmenter& seg, const TrackerConfig& cfg);

}  // namespace stsr
