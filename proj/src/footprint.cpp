#include "stsr/footprint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace stsr {

double signed_area(const Ring& ring) {
  const std::size_t n = ring.size();
  if (n < 3) {
    return 0.0;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double polygon_area(const Ring& ring) { return std::abs(signed_area(ring)); }

Point centroid(const Ring& ring) {
  const double a = signed_area(ring);
  const std::size_t n = ring.size();
  if (n == 0) {
    return {};
  }
  if (std::abs(a) < 1e-12) {
    Point p;
    for (const auto& v : ring) {
      p.x += v.x;
      p.y += v.y;
    }
    p.x /= static_cast<double>(n);
    p.y /= static_cast<double>(n);
    return p;
  }
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = ring[i];
    const auto& q = ring[(i + 1) % n];
    const double cross = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

namespace {

double orient(const Point& a, const Point& b, const Point& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool on_segment(const Point& a, const Point& b, const Point& p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const double d1 = orient(q1, q2, p1);
  const double d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1);
  const double d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

}  // namespace

bool is_simple(const Ring& ring) {
  const std::size_t n = ring.size();
  if (n < 3) {
    return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a1 = ring[i];
    const auto& a2 = ring[(i + 1) % n];
    if (a1 == a2) {
      return false;
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      const auto& b1 = ring[j];
      const auto& b2 = ring[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges share exactly one endpoint; they must not overlap.
        const Point& shared = (j == i + 1) ? a2 : a1;
        const Point& other_a = (j == i + 1) ? a1 : a2;
        const Point& other_b = (j == i + 1) ? b2 : b1;
        if (orient(shared, other_a, other_b) == 0.0) {
          const double dot = (other_a.x - shared.x) * (other_b.x - shared.x) +
                             (other_a.y - shared.y) * (other_b.y - shared.y);
          if (dot > 0.0) {
            return false;
          }
        }
        continue;
      }
      if (segments_intersect(a1, a2, b1, b2)) {
        return false;
      }
    }
  }
  return true;
}

bool contains_point(const Ring& ring, double x, double y) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = ring[i];
    const auto& b = ring[j];
    if ((a.y > y) != (b.y > y)) {
      const double xi = (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x;
      if (x < xi) {
        inside = !inside;
      }
    }
  }
  return inside;
}

void rasterize_into(const Ring& ring, Mask& mask, std::uint8_t value) {
  if (ring.size() < 3 || mask.empty()) {
    return;
  }
  double min_x = ring[0].x, max_x = ring[0].x, min_y = ring[0].y, max_y = ring[0].y;
  for (const auto& p : ring) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const auto r0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(min_y - 0.5)));
  const auto r1 = std::min<std::int64_t>(mask.height() - 1,
                                         static_cast<std::int64_t>(std::ceil(max_y - 0.5)));
  const auto c0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(min_x - 0.5)));
  const auto c1 = std::min<std::int64_t>(mask.width() - 1,
                                         static_cast<std::int64_t>(std::ceil(max_x - 0.5)));
  for (std::int64_t r = r0; r <= r1; ++r) {
    for (std::int64_t c = c0; c <= c1; ++c) {
      if (contains_point(ring, static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5)) {
        mask(r, c) = value;
      }
    }
  }
}

Mask rasterize(const Ring& ring, std::int64_t height, std::int64_t width) {
  Mask mask(height, width, 0);
  rasterize_into(ring, mask);
  return mask;
}

FootprintSet at_frame(const FootprintSet& set, int frame) {
  FootprintSet out;
  for (const auto& p : set.polygons) {
    if (frame >= p.appear_t) {
      out.polygons.push_back(p);
    }
  }
  return out;
}

Mask frame_mask(const FootprintSet& set, int frame, std::int64_t height, std::int64_t width) {
  Mask mask(height, width, 0);
  for (const auto& p : set.polygons) {
    if (frame >= p.appear_t) {
      rasterize_into(p.vertices, mask);
    }
  }
  return mask;
}

void validate(const FootprintSet& set, int n_frames, double min_area) {
  std::set<std::string> ids;
  for (const auto& p : set.polygons) {
    if (!ids.insert(p.building_id).second) {
      throw ValidationError("duplicate building_id '" + p.building_id + "'");
    }
    if (!is_simple(p.vertices)) {
      throw ValidationError("polygon '" + p.building_id + "' is not simple");
    }
    if (polygon_area(p.vertices) <= min_area) {
      throw ValidationError("polygon '" + p.building_id + "' is below the minimum area");
    }
    if (p.appear_t < 0 || p.appear_t >= n_frames) {
      throw ValidationError("polygon '" + p.building_id + "' has appear_t outside the series");
    }
  }
}

nlohmann::json to_geojson(const FootprintSet& set) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& p : set.polygons) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& v : p.vertices) {
      ring.push_back({v.x, v.y});
    }
    if (!p.vertices.empty()) {
      ring.push_back({p.vertices.front().x, p.vertices.front().y});
    }
    features.push_back({
        {"type", "Feature"},
        {"properties", {{"building_id", p.building_id}, {"appear_t", p.appear_t}}},
        {"geometry", {{"type", "Polygon"}, {"coordinates", nlohmann::json::array({ring})}}},
    });
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

FootprintSet from_geojson(const nlohmann::json& doc) {
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw ValidationError("GeoJSON document is not a FeatureCollection");
  }
  FootprintSet set;
  for (const auto& f : doc.at("features")) {
    const auto& geom = f.at("geometry");
    if (geom.value("type", "") != "Polygon") {
      throw ValidationError("only Polygon geometries are supported");
    }
    const auto& rings = geom.at("coordinates");
    if (rings.empty()) {
      throw ValidationError("polygon without rings");
    }
    Footprint fp;
    const auto& props = f.at("properties");
    const auto& id = props.at("building_id");
    fp.building_id = id.is_string() ? id.get<std::string>() : id.dump();
    fp.appear_t = props.at("appear_t").get<int>();
    for (const auto& xy : rings.at(0)) {
      fp.vertices.push_back({xy.at(0).get<double>(), xy.at(1).get<double>()});
    }
    if (fp.vertices.size() > 1 && fp.vertices.front() == fp.vertices.back()) {
      fp.vertices.pop_back();
    }
    if (fp.vertices.size() < 3) {
      throw ValidationError("polygon '" + fp.building_id + "' has fewer than 3 vertices");
    }
    set.polygons.push_back(std::move(fp));
  }
  return set;
}

void write_geojson(const std::filesystem::path& path, const FootprintSet& set) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << to_geojson(set).dump(1) << '\n';
}

FootprintSet read_geojson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  return from_geojson(nlohmann::json::parse(in));
}

}  // namespace stsr
