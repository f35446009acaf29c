#include "stsr/image_io.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace stsr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
}

constexpr std::array<char, 8> kFloatMagic = {'S', 'T', 'S', 'R', 'F', '3', '2', '\0'};

}  // namespace

torch::Tensor read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) {
    throw std::runtime_error("cannot open " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const auto width = static_cast<std::int64_t>(png_get_image_width(png, info));
  const auto height = static_cast<std::int64_t>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(rowbytes * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (std::int64_t r = 0; r < height; ++r) {
    rows[static_cast<std::size_t>(r)] = buffer.data() + static_cast<std::size_t>(r) * rowbytes;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const int bands = (channels == 1 || channels == 2) ? 1 : 3;
  auto out = torch::empty({bands, height, width}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (std::int64_t r = 0; r < height; ++r) {
    const png_byte* row = rows[static_cast<std::size_t>(r)];
    for (std::int64_t c = 0; c < width; ++c) {
      for (int b = 0; b < bands; ++b) {
        acc[b][r][c] = static_cast<float>(row[c * channels + b]) / 255.0f;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& chw) {
  if (chw.dim() != 3 || (chw.size(0) != 1 && chw.size(0) != 3)) {
    throw ValidationError("write_png expects a [1,H,W] or [3,H,W] tensor");
  }
  ensure_parent(path);
  const auto bands = chw.size(0);
  const auto height = chw.size(1);
  const auto width = chw.size(2);
  auto bytes = (chw.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0f)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) {
    throw std::runtime_error("cannot write " + path.string());
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               bands == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto* base = bytes.data_ptr<std::uint8_t>();
  for (std::int64_t r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(base + r * width * bands));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor read_float_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kFloatMagic) {
    throw ValidationError(path.string() + " is not a float raster");
  }
  std::array<std::uint32_t, 3> dims{};
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  auto out = torch::empty({dims[0], dims[1], dims[2]}, torch::kFloat32);
  in.read(reinterpret_cast<char*>(out.data_ptr<float>()),
          static_cast<std::streamsize>(out.numel() * sizeof(float)));
  if (!in) {
    throw ValidationError(path.string() + " is truncated");
  }
  return out;
}

void write_float_raster(const std::filesystem::path& path, const torch::Tensor& chw) {
  if (chw.dim() != 3) {
    throw ValidationError("write_float_raster expects a [C,H,W] tensor");
  }
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  auto data = chw.detach().to(torch::kFloat32).contiguous();
  const std::array<std::uint32_t, 3> dims = {static_cast<std::uint32_t>(data.size(0)),
                                             static_cast<std::uint32_t>(data.size(1)),
                                             static_cast<std::uint32_t>(data.size(2))};
  out.write(kFloatMagic.data(), kFloatMagic.size());
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
            static_cast<std::streamsize>(data.numel() * sizeof(float)));
}

torch::Tensor read_raster_pixels(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return read_png(path);
  if (ext == ".f32") return read_float_raster(path);
  throw ValidationError("unsupported raster extension '" + ext + "'");
}

void write_raster_pixels(const std::filesystem::path& path, const torch::Tensor& chw) {
  const auto ext = path.extension().string();
  if (ext == ".png") return write_png(path, chw);
  if (ext == ".f32") return write_float_raster(path, chw);
  throw ValidationError("unsupported raster extension '" + ext + "'");
}

}  // namespace stsr
