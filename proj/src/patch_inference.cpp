#include "stsr/patch_inference.hpp"

#include <cmath>
#include <set>

namespace stsr {

CoordinateGrid TilePlan::grid(std::size_t i) const {
  const auto [r, c] = origins.at(i);
  return CoordinateGrid::full(height, width).window(r, c, patch, patch);
}

void TilePlan::validate() const {
  if (patch <= 0 || height <= 0 || width <= 0 || height % patch != 0 || width % patch != 0) {
    throw ValidationError("tile plan: frame dims must be positive multiples of the patch size");
  }
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (const auto& o : origins) {
    if (o.first % patch != 0 || o.second % patch != 0 || o.first < 0 || o.second < 0 ||
        o.first + patch > height || o.second + patch > width) {
      throw ValidationError("tile plan: origin off the tile lattice");
    }
    if (!seen.insert(o).second) throw ValidationError("tile plan: duplicate origin");
  }
  if (seen.size() != static_cast<std::size_t>((height / patch) * (width / patch))) {
    throw ValidationError("tile plan: tiles do not cover the frame");
  }
}

TilePlan plan_tiles(std::int64_t height, std::int64_t width, std::int64_t patch) {
  if (patch <= 0 || height <= 0 || width <= 0 || height % patch != 0 || width % patch != 0) {
    throw ValidationError("plan_tiles: " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible into " + std::to_string(patch) + "-pixel tiles");
  }
  TilePlan plan{height, width, patch, {}};
  for (std::int64_t r = 0; r < height; r += patch) {
    for (std::int64_t c = 0; c < width; c += patch) plan.origins.emplace_back(r, c);
  }
  return plan;
}

std::vector<torch::Tensor> crop_tiles(const torch::Tensor& chw, const TilePlan& plan) {
  if (chw.dim() != 3 || chw.size(1) != plan.height || chw.size(2) != plan.width) {
    throw ValidationError("crop_tiles: image does not match the plan");
  }
  std::vector<torch::Tensor> out;
  out.reserve(plan.size());
  for (const auto& [r, c] : plan.origins) {
    out.push_back(chw.slice(1, r, r + plan.patch).slice(2, c, c + plan.patch).contiguous());
  }
  return out;
}

torch::Tensor stitch(const std::vector<Tile>& tiles, const TilePlan& plan) {
  plan.validate();
  if (tiles.empty()) throw ValidationError("stitch: no tiles");
  std::set<std::pair<std::int64_t, std::int64_t>> expected(plan.origins.begin(),
                                                           plan.origins.end());
  std::set<std::pair<std::int64_t, std::int64_t>> placed;
  const auto& first = tiles.front().pixels;
  auto out = torch::zeros({first.size(0), plan.height, plan.width}, first.options());
  for (const auto& t : tiles) {
    if (!expected.count(t.origin)) throw ValidationError("stitch: tile outside the plan");
    if (!placed.insert(t.origin).second) throw ValidationError("stitch: duplicate tile");
    if (t.pixels.dim() != 3 || t.pixels.size(0) != first.size(0) ||
        t.pixels.size(1) != plan.patch || t.pixels.size(2) != plan.patch) {
      throw ValidationError("stitch: tile shape does not match the plan");
    }
    const auto [r, c] = t.origin;
    out.slice(1, r, r + plan.patch).slice(2, c, c + plan.patch).copy_(t.pixels);
  }
  if (placed.size() != expected.size()) throw ValidationError("stitch: missing tiles");
  return out;
}

RasterImage stitch(const std::vector<Tile>& tiles, const TilePlan& plan,
                   const RasterImage& like) {
  RasterImage out = like;
  out.pixels = stitch(tiles, plan);
  return out;
}

RasterImage generate_full(const PairedSample& sample, double t, Generator& gen,
                          std::int64_t patch) {
  const auto& hr = sample.hr_reference;
  const auto plan = plan_tiles(hr.height(), hr.width(), patch);
  const auto cat = generator_input(sample);
  const auto windows = crop_tiles(cat.pixels, plan);
  std::vector<Tile> tiles;
  tiles.reserve(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    tiles.push_back({plan.origins[i], generate_window(windows[i], plan.grid(i), t, gen)});
  }
  RasterImage out;
  out.pixels = stitch(tiles, plan).contiguous();
  out.timestamp = sample.lr_target.timestamp;
  out.aoi_id = sample.lr_target.aoi_id;
  out.gsd = hr.gsd;
  return out;
}

double seam_ratio(const torch::Tensor& chw, const TilePlan& plan) {
  const auto x = chw.to(torch::kFloat64);
  const auto dr = (x.slice(1, 1) - x.slice(1, 0, -1)).abs().mean(0);  // [H-1,W]
  const auto dc = (x.slice(2, 1) - x.slice(2, 0, -1)).abs().mean(0);  // [H,W-1]
  double seam = 0.0, inner = 0.0;
  std::int64_t n_seam = 0, n_inner = 0;
  auto acc = [&](const torch::Tensor& d, std::int64_t dim_len, int axis) {
    for (std::int64_t i = 0; i + 1 < dim_len; ++i) {
      const auto line = axis == 0 ? d[i] : d.select(1, i);
      const double s = line.sum().item<double>();
      const auto n = line.numel();
      if ((i + 1) % plan.patch == 0) {
        seam += s;
        n_seam += n;
      } else {
        inner += s;
        n_inner += n;
      }
    }
  };
  acc(dr, plan.height, 0);
  acc(dc, plan.width, 1);
  if (n_seam == 0) return 1.0;
  const double inner_mean = n_inner ? inner / n_inner : 0.0;
  const double seam_mean = seam / n_seam;
  return inner_mean > 0.0 ? seam_mean / inner_mean : (seam_mean > 0.0 ? INFINITY : 1.0);
}

}  // namespace stsr
