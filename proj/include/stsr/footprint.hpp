#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stsr/grid.hpp"

namespace stsr {

// Pixel coordinates: x grows along columns, y along rows. Pixel (r, c) covers
// [c, c+1) x [r, r+1) and its centre sits at (c + 0.5, r + 0.5).
struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Ring = std::vector<Point>;

struct Footprint {
  std::string building_id;
  Ring vertices;  // open ring, first vertex not repeated
  int appear_t = 0;
};

// Buildings with persistent ids. Used for both labels and predictions; a
// building is present in frame k iff k >= appear_t.
struct FootprintSet {
  std::vector<Footprint> polygons;

  std::size_t size() const { return polygons.size(); }
  bool empty() const { return polygons.empty(); }
};

double signed_area(const Ring& ring);
double polygon_area(const Ring& ring);
Point centroid(const Ring& ring);

// True if no two non-adjacent edges intersect and no adjacent edges fold back.
bool is_simple(const Ring& ring);

// Even-odd test on pixel centres.
bool contains_point(const Ring& ring, double x, double y);
void rasterize_into(const Ring& ring, Mask& mask, std::uint8_t value = 1);
Mask rasterize(const Ring& ring, std::int64_t height, std::int64_t width);

// Buildings present in frame k.
FootprintSet at_frame(const FootprintSet& set, int frame);
Mask frame_mask(const FootprintSet& set, int frame, std::int64_t height, std::int64_t width);

// Unique ids, simple polygons, area above min_area and appear_t in
// [0, n_frames). Throws ValidationError otherwise.
void validate(const FootprintSet& set, int n_frames, double min_area = 0.0);

// GeoJSON FeatureCollection in pixel coordinates with `building_id` and
// `appear_t` properties. Rings are written closed.
nlohmann::json to_geojson(const FootprintSet& set);
FootprintSet from_geojson(const nlohmann::json& doc);
void write_geojson(const std::filesystem::path& path, const FootprintSet& set);
FootprintSet read_geojson(const std::filesystem::path& path);

}  // namespace stsr
