#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cityscale/event.hpp"

namespace cityscale {

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

using Ring = std::vector<LatLon>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

struct BBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;

  bool contains(double lat, double lon, double margin = 0.0) const {
    return lat >= min_lat - margin && lat <= max_lat + margin && lon >= min_lon - margin &&
           lon <= max_lon + margin;
  }
};

// Distance (degrees, planar) within which a point counts as lying on an edge.
inline constexpr double kBoundaryTolerance = 1e-12;

class Region {
 public:
  // Validates rings (>= 3 distinct vertices, closing duplicate dropped) and
  // population (>= 1); throws GeometryError / InvalidArgument otherwise.
  Region(std::string id, std::string name, std::string layer, std::optional<std::int64_t> population,
         std::vector<Polygon> polygons);

  const std::string& id() const { return id_; }
  const std::string& name() const { return name_; }
  const std::string& layer() const { return layer_; }
  const std::optional<std::int64_t>& population() const { return population_; }
  const std::vector<Polygon>& polygons() const { return polygons_; }
  const BBox& bbox() const { return bbox_; }

 private:
  std::string id_;
  std::string name_;
  std::string layer_;
  std::optional<std::int64_t> population_;
  std::vector<Polygon> polygons_;
  BBox bbox_;
};

// Axis-aligned rectangle as a single-ring region; used by fixtures and the
// synthetic generator.
Region make_box_region(std::string id, std::string layer, std::optional<std::int64_t> population,
                       const BBox& box);

class RegionLayer {
 public:
  RegionLayer() = default;
  // Throws InvalidArgument on duplicate region ids.
  RegionLayer(std::string label, std::vector<Region> regions);

  const std::string& label() const { return label_; }
  const std::vector<Region>& regions() const { return regions_; }
  std::size_t size() const { return regions_.size(); }
  const Region& operator[](std::size_t i) const { return regions_[i]; }
  std::optional<std::size_t> find(const std::string& id) const;

 private:
  std::string label_;
  std::vector<Region> regions_;
};

// GeoJSON FeatureCollection with Polygon / MultiPolygon geometries in
// (lon, lat) order. Feature properties: id, name, layer, optional population.
RegionLayer load_layer(std::istream& source);
RegionLayer load_layer_file(const std::string& path);
void write_layer_geojson(std::ostream& out, const RegionLayer& layer);

// Even-odd ray casting on the flat (lat, lon) plane. Points within
// kBoundaryTolerance of an edge are inside.
bool point_in_region(double lat, double lon, const Region& region);
// Same answer, without the bounding-box shortcut.
bool point_in_region_unfiltered(double lat, double lon, const Region& region);
bool point_in_ring(double lat, double lon, const Ring& ring);

struct LayerAssignment {
  // Index into the layer for each event, or nullopt.
  std::vector<std::optional<std::size_t>> region_of;
  // Events contained by more than one region; first region in layer order wins.
  std::size_t overlap_count = 0;
};

// Shards the events across `threads` workers; the result does not depend on
// the thread count.
LayerAssignment assign_events(std::span<const EventRecord> events, const RegionLayer& layer,
                              unsigned threads = 1);

std::optional<std::size_t> locate(double lat, double lon, const RegionLayer& layer,
                                  bool* overlapped = nullptr);

// Country lookup over a layer whose region ids are ISO alpha-2 codes.
class CountryLocator {
 public:
  // Throws InvalidArgument if any region id is not a country code.
  explicit CountryLocator(const RegionLayer& countries);
  std::optional<std::string> operator()(double lat, double lon) const;

 private:
  const RegionLayer* layer_;
};

void write_assignment_csv(std::ostream& out, const LayerAssignment& assignment,
                          const RegionLayer& layer);

}  // namespace cityscale
