#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "stsr/grid.hpp"

namespace stsr {

// A C x H x W image of one AOI at one month.
//
// `pixels` is a contiguous float32 tensor. Operations never write into an
// existing RasterImage; they return new ones, so sharing storage between
// copies is harmless.
//
// Storage space is [0,1]; model space is [-1,1]. Conversion is always
// explicit through to_model_space / from_model_space.
struct RasterImage {
  torch::Tensor pixels;
  int timestamp = 0;
  std::string aoi_id;
  double gsd = 1.0;

  std::int64_t bands() const { return pixels.size(0); }
  std::int64_t height() const { return pixels.size(1); }
  std::int64_t width() const { return pixels.size(2); }
};

// Builds a RasterImage, checking rank, dimensions, finiteness and gsd.
RasterImage make_raster(torch::Tensor pixels, int timestamp = 0, std::string aoi_id = {},
                        double gsd = 1.0);

void validate(const RasterImage& img);

// Throws ValidationError naming the band and extremum if any pixel falls
// outside [lo, hi].
void require_range(const RasterImage& img, double lo, double hi, const char* what);

RasterImage to_model_space(const RasterImage& img);
RasterImage from_model_space(const RasterImage& img);

// Corner-aligned bilinear resampling; band count and metadata are preserved.
RasterImage resize_to(const RasterImage& img, std::int64_t height, std::int64_t width);
torch::Tensor resize_bilinear(const torch::Tensor& chw, std::int64_t height, std::int64_t width);

// Band-wise concatenation, a's bands first.
RasterImage band_concat(const RasterImage& a, const RasterImage& b);

RasterImage crop(const RasterImage& img, std::int64_t row, std::int64_t col, std::int64_t height,
                 std::int64_t width);

struct ImageTimeSeries {
  std::string aoi_id;
  std::vector<RasterImage> frames;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  int first_timestamp() const { return frames.front().timestamp; }
  int last_timestamp() const { return frames.back().timestamp; }
};

// Strictly increasing timestamps; shared aoi_id, band count and dimensions.
void validate(const ImageTimeSeries& series);

// Affine month -> [0,1] map with first -> 0 and last -> 1. A degenerate span
// maps everything to 0.
double normalized_time(int month, int first_month, int last_month);
double normalized_time(const ImageTimeSeries& series, std::size_t index);

// Normalized (x, y) coordinates of a window inside a full frame.
//
// x follows columns and y follows rows; both run from -1 at the first cell to
// +1 at the last cell of the *full* frame, so a tile sees exactly the values
// the full frame would give its pixels.
struct CoordinateGrid {
  std::int64_t full_height = 1;
  std::int64_t full_width = 1;
  std::int64_t row0 = 0;
  std::int64_t col0 = 0;
  std::int64_t height = 1;
  std::int64_t width = 1;

  static CoordinateGrid full(std::int64_t height, std::int64_t width);
  CoordinateGrid window(std::int64_t row, std::int64_t col, std::int64_t h,
                        std::int64_t w) const;

  // (x, y) of the window cell (row, col).
  std::pair<double, double> at(std::int64_t row, std::int64_t col) const;

  // float32 tensor [2, height, width]; channel 0 is x, channel 1 is y.
  torch::Tensor coords() const;
};

double normalized_coordinate(std::int64_t index, std::int64_t count);

}  // namespace stsr
