#include "stsr/raster.hpp"

#include <cmath>
#include <sstream>

namespace stsr {

namespace F = torch::nn::functional;

RasterImage make_raster(torch::Tensor pixels, int timestamp, std::string aoi_id, double gsd) {
  RasterImage img{pixels.to(torch::kFloat32).contiguous(), timestamp, std::move(aoi_id), gsd};
  validate(img);
  return img;
}

void validate(const RasterImage& img) {
  if (!img.pixels.defined() || img.pixels.dim() != 3) {
    throw ValidationError("RasterImage pixels must be a rank-3 [C,H,W] tensor");
  }
  if (img.bands() < 1 || img.height() < 1 || img.width() < 1) {
    throw ValidationError("RasterImage needs C, H, W >= 1");
  }
  if (!(img.gsd > 0.0) || !std::isfinite(img.gsd)) {
    throw ValidationError("RasterImage gsd must be a finite positive number");
  }
  if (!torch::isfinite(img.pixels).all().item<bool>()) {
    throw ValidationError("RasterImage contains non-finite pixel values");
  }
}

void require_range(const RasterImage& img, double lo, double hi, const char* what) {
  for (std::int64_t b = 0; b < img.bands(); ++b) {
    auto band = img.pixels[b];
    const double mn = band.min().item<double>();
    const double mx = band.max().item<double>();
    if (mn < lo || mx > hi) {
      std::ostringstream msg;
      msg << what << ": band " << b << " has ";
      if (mn < lo) {
        msg << "minimum " << mn;
      } else {
        msg << "maximum " << mx;
      }
      msg << " outside [" << lo << ", " << hi << "]";
      throw ValidationError(msg.str());
    }
  }
}

RasterImage to_model_space(const RasterImage& img) {
  require_range(img, 0.0, 1.0, "to_model_space");
  RasterImage out = img;
  out.pixels = (img.pixels * 2.0f - 1.0f).contiguous();
  return out;
}

RasterImage from_model_space(const RasterImage& img) {
  require_range(img, -1.0, 1.0, "from_model_space");
  RasterImage out = img;
  out.pixels = ((img.pixels + 1.0f) * 0.5f).clamp(0.0f, 1.0f).contiguous();
  return out;
}

torch::Tensor resize_bilinear(const torch::Tensor& chw, std::int64_t height, std::int64_t width) {
  if (height < 1 || width < 1) {
    throw ValidationError("resize target dimensions must be >= 1");
  }
  if (chw.size(-2) == height && chw.size(-1) == width) {
    return chw.contiguous();
  }
  const bool batched = chw.dim() == 4;
  auto x = batched ? chw : chw.unsqueeze(0);
  auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<std::int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(true));
  return (batched ? y : y.squeeze(0)).contiguous();
}

RasterImage resize_to(const RasterImage& img, std::int64_t height, std::int64_t width) {
  RasterImage out = img;
  out.pixels = resize_bilinear(img.pixels, height, width);
  out.gsd = img.gsd * static_cast<double>(img.height()) / static_cast<double>(height);
  return out;
}

RasterImage band_concat(const RasterImage& a, const RasterImage& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ValidationError("band_concat: height/width mismatch");
  }
  RasterImage out = a;
  out.pixels = torch::cat({a.pixels, b.pixels}, 0).contiguous();
  return out;
}

RasterImage crop(const RasterImage& img, std::int64_t row, std::int64_t col, std::int64_t height,
                 std::int64_t width) {
  if (row < 0 || col < 0 || height < 1 || width < 1 || row + height > img.height() ||
      col + width > img.width()) {
    throw ValidationError("crop window outside image");
  }
  RasterImage out = img;
  out.pixels = img.pixels.slice(1, row, row + height).slice(2, col, col + width).contiguous();
  return out;
}

void validate(const ImageTimeSeries& series) {
  for (std::size_t i = 0; i < series.frames.size(); ++i) {
    const auto& f = series.frames[i];
    validate(f);
    if (f.aoi_id != series.aoi_id) {
      throw ValidationError("frame " + std::to_string(i) + " belongs to AOI '" + f.aoi_id +
                            "', series is '" + series.aoi_id + "'");
    }
    if (i > 0) {
      const auto& prev = series.frames[i - 1];
      if (f.timestamp <= prev.timestamp) {
        throw ValidationError("series timestamps must be strictly increasing");
      }
      if (f.bands() != prev.bands() || f.height() != prev.height() ||
          f.width() != prev.width()) {
        throw ValidationError("series frames must share band count and dimensions");
      }
    }
  }
}

double normalized_time(int month, int first_month, int last_month) {
  if (last_month == first_month) {
    return 0.0;
  }
  return static_cast<double>(month - first_month) /
         static_cast<double>(last_month - first_month);
}

double normalized_time(const ImageTimeSeries& series, std::size_t index) {
  return normalized_time(series.frames.at(index).timestamp, series.first_timestamp(),
                         series.last_timestamp());
}

double normalized_coordinate(std::int64_t index, std::int64_t count) {
  if (count <= 1) {
    return 0.0;
  }
  return -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(count - 1);
}

CoordinateGrid CoordinateGrid::full(std::int64_t height, std::int64_t width) {
  if (height < 1 || width < 1) {
    throw ValidationError("CoordinateGrid dimensions must be >= 1");
  }
  return CoordinateGrid{height, width, 0, 0, height, width};
}

CoordinateGrid CoordinateGrid::window(std::int64_t row, std::int64_t col, std::int64_t h,
                                      std::int64_t w) const {
  if (row < 0 || col < 0 || h < 1 || w < 1 || row + h > height || col + w > width) {
    throw ValidationError("CoordinateGrid window outside grid");
  }
  return CoordinateGrid{full_height, full_width, row0 + row, col0 + col, h, w};
}

std::pair<double, double> CoordinateGrid::at(std::int64_t row, std::int64_t col) const {
  return {normalized_coordinate(col0 + col, full_width),
          normalized_coordinate(row0 + row, full_height)};
}

torch::Tensor CoordinateGrid::coords() const {
  auto out = torch::empty({2, height, width}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (std::int64_t r = 0; r < height; ++r) {
    const auto y = static_cast<float>(normalized_coordinate(row0 + r, full_height));
    for (std::int64_t c = 0; c < width; ++c) {
      acc[0][r][c] = static_cast<float>(normalized_coordinate(col0 + c, full_width));
      acc[1][r][c] = y;
    }
  }
  return out;
}

}  // namespace stsr
