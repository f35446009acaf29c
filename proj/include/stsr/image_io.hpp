#pragma once

#include <filesystem>

#include "stsr/raster.hpp"

namespace stsr {

// 8-bit PNG (gray, gray+alpha, RGB, RGBA; alpha is dropped) to a [C,H,W]
// tensor in [0,1].
torch::Tensor read_png(const std::filesystem::path& path);
// Writes 1 or 3 bands (values clamped to [0,1] and rounded to 8 bits).
void write_png(const std::filesystem::path& path, const torch::Tensor& chw);

// Lossless single-file float raster: "STSRF32\0", uint32 C, H, W, then C*H*W
// little-endian float32 values in band-major order.
torch::Tensor read_float_raster(const std::filesystem::path& path);
void write_float_raster(const std::filesystem::path& path, const torch::Tensor& chw);

// Dispatch on extension: .png or .f32.
torch::Tensor read_raster_pixels(const std::filesystem::path& path);
void write_raster_pixels(const std::filesystem::path& path, const torch::Tensor& chw);

}  // namespace stsr
