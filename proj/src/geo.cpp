#include "cityscale/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "cityscale/error.hpp"
#include "cityscale/numfmt.hpp"
#include "cityscale/parallel.hpp"

namespace cityscale {

namespace {

using json = nlohmann::json;

bool same_vertex(const LatLon& a, const LatLon& b) { return a.lat == b.lat && a.lon == b.lon; }

Ring normalize_ring(Ring ring, const std::string& region_id) {
  if (ring.size() >= 2 && same_vertex(ring.front(), ring.back())) ring.pop_back();
  std::set<std::pair<double, double>> distinct;
  for (const auto& v : ring) {
    if (!std::isfinite(v.lat) || !std::isfinite(v.lon)) {
      throw GeometryError("region " + region_id + ": non-finite vertex");
    }
    distinct.emplace(v.lat, v.lon);
  }
  if (distinct.size() < 3) {
    throw GeometryError("region " + region_id + ": ring with fewer than 3 distinct vertices");
  }
  return ring;
}

double segment_distance(double lat, double lon, const LatLon& a, const LatLon& b) {
  double dx = b.lon - a.lon;
  double dy = b.lat - a.lat;
  double px = lon - a.lon;
  double py = lat - a.lat;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - t * dx, py - t * dy);
}

bool on_ring_boundary(double lat, double lon, const Ring& ring) {
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    if (segment_distance(lat, lon, ring[j], ring[i]) <= kBoundaryTolerance) return true;
  }
  return false;
}

bool in_polygon(double lat, double lon, const Polygon& poly) {
  if (on_ring_boundary(lat, lon, poly.outer)) return true;
  for (const auto& hole : poly.holes) {
    if (on_ring_boundary(lat, lon, hole)) return true;
  }
  if (!point_in_ring(lat, lon, poly.outer)) return false;
  for (const auto& hole : poly.holes) {
    if (point_in_ring(lat, lon, hole)) return false;
  }
  return true;
}

Ring parse_ring(const json& coords, const std::string& id) {
  if (!coords.is_array()) throw GeometryError("region " + id + ": ring is not an array");
  Ring ring;
  ring.reserve(coords.size());
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      throw GeometryError("region " + id + ": bad position");
    }
    // GeoJSON positions are (lon, lat).
    ring.push_back({pos[1].get<double>(), pos[0].get<double>()});
  }
  return ring;
}

Polygon parse_polygon(const json& rings, const std::string& id) {
  if (!rings.is_array() || rings.empty()) {
    throw GeometryError("region " + id + ": polygon without rings");
  }
  Polygon poly;
  poly.outer = parse_ring(rings[0], id);
  for (std::size_t i = 1; i < rings.size(); ++i) poly.holes.push_back(parse_ring(rings[i], id));
  return poly;
}

std::string property_text(const json& props, const char* key, bool required) {
  auto it = props.find(key);
  if (it == props.end() || it->is_null()) {
    if (required) throw InvalidArgument(std::string("feature missing property '") + key + "'");
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw InvalidArgument(std::string("property '") + key + "' must be a string");
}

std::optional<std::int64_t> property_population(const json& props, const std::string& id) {
  auto it = props.find("population");
  if (it == props.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw InvalidArgument("region " + id + ": population is not a number");
  double value = it->get<double>();
  if (value != std::floor(value) || value > 9.0e15) {
    throw InvalidArgument("region " + id + ": population is not an integer");
  }
  return static_cast<std::int64_t>(value);
}

void write_ring(json& out, const Ring& ring) {
  json coords = json::array();
  for (const auto& v : ring) coords.push_back({v.lon, v.lat});
  coords.push_back({ring.front().lon, ring.front().lat});
  out.push_back(std::move(coords));
}

}  // namespace

Region::Region(std::string id, std::string name, std::string layer,
               std::optional<std::int64_t> population, std::vector<Polygon> polygons)
    : id_(std::move(id)),
      name_(std::move(name)),
      layer_(std::move(layer)),
      population_(population),
      polygons_(std::move(polygons)) {
  if (id_.empty()) throw InvalidArgument("region with empty id");
  if (population_ && *population_ < 1) {
    throw InvalidArgument("region " + id_ + ": population must be >= 1");
  }
  if (polygons_.empty()) throw GeometryError("region " + id_ + ": no polygons");
  bbox_ = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (auto& poly : polygons_) {
    poly.outer = normalize_ring(std::move(poly.outer), id_);
    for (auto& hole : poly.holes) hole = normalize_ring(std::move(hole), id_);
    // Holes lie inside the outer ring, so the outer ring bounds the polygon;
    // include them anyway so the bbox invariant holds for malformed input.
    auto extend = [this](const Ring& ring) {
      for (const auto& v : ring) {
        bbox_.min_lat = std::min(bbox_.min_lat, v.lat);
        bbox_.max_lat = std::max(bbox_.max_lat, v.lat);
        bbox_.min_lon = std::min(bbox_.min_lon, v.lon);
        bbox_.max_lon = std::max(bbox_.max_lon, v.lon);
      }
    };
    extend(poly.outer);
    for (const auto& hole : poly.holes) extend(hole);
  }
}

Region make_box_region(std::string id, std::string layer, std::optional<std::int64_t> population,
                       const BBox& box) {
  Polygon poly;
  poly.outer = {{box.min_lat, box.min_lon},
                {box.min_lat, box.max_lon},
                {box.max_lat, box.max_lon},
                {box.max_lat, box.min_lon}};
  std::string name = id;
  return Region(std::move(id), std::move(name), std::move(layer), population, {std::move(poly)});
}

RegionLayer::RegionLayer(std::string label, std::vector<Region> regions)
    : label_(std::move(label)), regions_(std::move(regions)) {
  std::unordered_set<std::string> seen;
  for (const auto& r : regions_) {
    if (!seen.insert(r.id()).second) throw InvalidArgument("duplicate region id '" + r.id() + "'");
  }
}

std::optional<std::size_t> RegionLayer::find(const std::string& id) const {
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    if (regions_[i].id() == id) return i;
  }
  return std::nullopt;
}

RegionLayer load_layer(std::istream& source) {
  json doc;
  try {
    doc = json::parse(source);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("layer is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw InvalidArgument("layer is not a GeoJSON FeatureCollection");
  }
  std::vector<Region> regions;
  std::string label;
  for (const auto& feature : doc["features"]) {
    if (!feature.is_object() || !feature.contains("properties") ||
        !feature["properties"].is_object()) {
      throw InvalidArgument("feature without properties");
    }
    const json& props = feature["properties"];
    std::string id = property_text(props, "id", true);
    std::string name = property_text(props, "name", false);
    std::string layer = property_text(props, "layer", true);
    auto population = property_population(props, id);
    if (regions.empty()) {
      label = layer;
    } else if (layer != label) {
      throw InvalidArgument("mixed layer labels '" + label + "' and '" + layer + "'");
    }
    if (!feature.contains("geometry") || !feature["geometry"].is_object()) {
      throw GeometryError("region " + id + ": missing geometry");
    }
    const json& geom = feature["geometry"];
    std::string type = geom.value("type", "");
    std::vector<Polygon> polygons;
    if (type == "Polygon") {
      polygons.push_back(parse_polygon(geom.at("coordinates"), id));
    } else if (type == "MultiPolygon") {
      const json& parts = geom.at("coordinates");
      if (!parts.is_array()) throw GeometryError("region " + id + ": bad MultiPolygon");
      for (const auto& part : parts) polygons.push_back(parse_polygon(part, id));
    } else {
      throw GeometryError("region " + id + ": unsupported geometry type '" + type + "'");
    }
    regions.emplace_back(std::move(id), std::move(name), std::move(layer), population,
                         std::move(polygons));
  }
  return RegionLayer(std::move(label), std::move(regions));
}

RegionLayer load_layer_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open layer file " + path);
  return load_layer(in);
}

void write_layer_geojson(std::ostream& out, const RegionLayer& layer) {
  json features = json::array();
  for (const auto& region : layer.regions()) {
    json props = {{"id", region.id()}, {"name", region.name()}, {"layer", region.layer()}};
    if (region.population()) props["population"] = *region.population();
    json polys = json::array();
    for (const auto& poly : region.polygons()) {
      json rings = json::array();
      write_ring(rings, poly.outer);
      for (const auto& hole : poly.holes) write_ring(rings, hole);
      polys.push_back(std::move(rings));
    }
    json geometry = polys.size() == 1
                        ? json{{"type", "Polygon"}, {"coordinates", polys[0]}}
                        : json{{"type", "MultiPolygon"}, {"coordinates", polys}};
    features.push_back({{"type", "Feature"}, {"properties", props}, {"geometry", geometry}});
  }
  json doc = {{"type", "FeatureCollection"}, {"features", features}};
  out << doc.dump() << '\n';
}

bool point_in_ring(double lat, double lon, const Ring& ring) {
  // Ray towards +lon. The half-open test on vertex latitudes treats a vertex
  // lying exactly on the ray as if the ray passed infinitesimally below it.
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const LatLon& a = ring[i];
    const LatLon& b = ring[j];
    if ((a.lat > lat) != (b.lat > lat)) {
      double cross_lon = a.lon + (lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
      if (lon < cross_lon) inside = !inside;
    }
  }
  return inside;
}

bool point_in_region_unfiltered(double lat, double lon, const Region& region) {
  for (const auto& poly : region.polygons()) {
    if (in_polygon(lat, lon, poly)) return true;
  }
  return false;
}

bool point_in_region(double lat, double lon, const Region& region) {
  if (!region.bbox().contains(lat, lon, kBoundaryTolerance)) return false;
  return point_in_region_unfiltered(lat, lon, region);
}

std::optional<std::size_t> locate(double lat, double lon, const RegionLayer& layer,
                                  bool* overlapped) {
  std::optional<std::size_t> found;
  for (std::size_t r = 0; r < layer.size(); ++r) {
    if (!point_in_region(lat, lon, layer[r])) continue;
    if (!found) {
      found = r;
      if (!overlapped) break;
    } else {
      *overlapped = true;
      break;
    }
  }
  return found;
}

LayerAssignment assign_events(std::span<const EventRecord> events, const RegionLayer& layer,
                              unsigned threads) {
  LayerAssignment out;
  out.region_of.resize(events.size());
  std::vector<std::size_t> overlaps(shard_count(events.size(), threads), 0);
  for_each_shard(events.size(), threads, [&](std::size_t shard, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      bool overlapped = false;
      out.region_of[i] = locate(events[i].lat, events[i].lon, layer, &overlapped);
      if (overlapped) ++overlaps[shard];
    }
  });
  for (auto n : overlaps) out.overlap_count += n;
  return out;
}

CountryLocator::CountryLocator(const RegionLayer& countries) : layer_(&countries) {
  for (const auto& r : countries.regions()) {
    if (!is_country_code(r.id())) {
      throw InvalidArgument("country layer region id '" + r.id() + "' is not an ISO alpha-2 code");
    }
  }
}

std::optional<std::string> CountryLocator::operator()(double lat, double lon) const {
  auto idx = locate(lat, lon, *layer_);
  if (!idx) return std::nullopt;
  return (*layer_)[*idx].id();
}

void write_assignment_csv(std::ostream& out, const LayerAssignment& assignment,
                          const RegionLayer& layer) {
  out << "event_index,region_id\n";
  for (std::size_t i = 0; i < assignment.region_of.size(); ++i) {
    out << i << ',';
    if (assignment.region_of[i]) out << layer[*assignment.region_of[i]].id();
    out << '\n';
  }
}

}  // namespace cityscale
