#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "stsr/dataset.hpp"
#include "stsr/generator.hpp"
#include "stsr/raster.hpp"

namespace stsr {

// Non-overlapping P x P tiling of a full frame. Origins are row-major.
struct TilePlan {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t patch = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> origins;  // (row, col)

  std::size_t size() const { return origins.size(); }
  // Global coordinate grid of tile i.
  CoordinateGrid grid(std::size_t i) const;
  void validate() const;
};

TilePlan plan_tiles(std::int64_t height, std::int64_t width, std::int64_t patch);

// One [C,P,P] tensor per origin, in plan order.
std::vector<torch::Tensor> crop_tiles(const torch::Tensor& chw, const TilePlan& plan);

struct Tile {
  std::pair<std::int64_t, std::int64_t> origin;
  torch::Tensor pixels;  // [C,P,P]
};

// Placement only. Every plan origin needs exactly one tile; order is free.
torch::Tensor stitch(const std::vector<Tile>& tiles, const TilePlan& plan);
RasterImage stitch(const std::vector<Tile>& tiles, const TilePlan& plan, const RasterImage& like);

// Generates a full frame tile by tile. The LR frame is resized to the full HR
// size once and cropped per tile; each tile sees its global coordinates.
// Output is in model space with the LR timestamp.
RasterImage generate_full(const PairedSample& sample, double t, Generator& gen,
                          std::int64_t patch);

// Mean absolute jump across tile borders divided by the mean absolute jump
// between neighbouring pixels inside tiles. About 1 when seams are invisible.
double seam_ratio(const torch::Tensor& chw, const TilePlan& plan);

}  // namespace stsr
