#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/capmodel.hpp"
#include "stretchcap/mesh.hpp"

namespace stretchcap {

using Polygon2 = std::vector<Eigen::Vector2d>;

enum class Layer { Top, Bottom };

struct ElectrodeStrip {
  std::string id;
  Layer layer = Layer::Top;
  Polygon2 polygon;  // mm, intrinsic (unstretched) coordinates
  std::string lead_side;
};

/// Strips on two layers plus the sensor outline. Optionally carries measured
/// rest capacitances keyed by (top id, bottom id).
struct SensorLayout {
  std::vector<ElectrodeStrip> strips;
  Polygon2 outline;
  std::string units = "mm";
  std::map<std::pair<std::string, std::string>, double> measured_capacitance;

  int strip_index(const std::string& id) const;
  int count(Layer layer) const;
};

enum class CapacitanceOrigin { Computed, Measured };

struct SensorCell {
  int id = 0;
  int top_strip = 0;     // index into SensorLayout::strips
  int bottom_strip = 0;  // index into SensorLayout::strips
  Polygon2 polygon;
  double rest_area = 0.0;         // mm^2
  double rest_capacitance = 0.0;  // farads
  CapacitanceOrigin capacitance_origin = CapacitanceOrigin::Computed;
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SensorLayout parse_layout(const std::string& json_text);
SensorLayout load_layout(const std::filesystem::path& path);
std::string layout_to_json(const SensorLayout& layout);

/// Stable fingerprint of the strip geometry; models and plans record it.
std::uint64_t layout_hash(const SensorLayout& layout);

/// Throws LayoutError on non-simple polygons, polygons with fewer than three
/// points, or overlapping strips on the same layer.
void validate_layout(const SensorLayout& layout);

/// One cell per top/bottom strip pair whose polygons overlap with positive
/// area, sorted by (top index, bottom index). A pair whose overlap splits into
/// several pieces is rejected. Rest capacitance comes from the layout's
/// measured values when present, else from the plate law.
std::vector<SensorCell> build_cells(const SensorLayout& layout, const CapacitorParams& params = {});

struct MeshOptions {
  double target_edge_length = 5.0;  // mm
  std::uint64_t seed = 0;           // jitter of interior sample points
};

/// Conforming Delaunay triangulation of the outline with every cell polygon
/// as constraint edges and every cell center inserted as a vertex.
SensorMesh mesh_layout(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                       const MeshOptions& options = {});

/// Greedy farthest-point cover of the cell-center vertices (Euclidean
/// distances in the 3D rest shape, so a rolled mesh respects its seam): every
/// center ends up within `max_spacing` of a selected one.
std::vector<int> select_markers(const SensorMesh& mesh, double max_spacing);

/// Same greedy order, stopped after `count` markers.
std::vector<int> select_markers_count(const SensorMesh& mesh, int count);

/// Wraps a flat mesh around a circular cylinder. The two extreme-u boundary
/// sides become the seam: their vertices are paired by v coordinate and
/// merged. The cylinder axis is +z, circumference equals the u extent.
SensorMesh roll_to_cylinder(const SensorMesh& mesh, double seam_tolerance = 0.1);

/// Full k x n grid of axis-aligned rectangular strips: `top_count` horizontal
/// strips and `bottom_count` vertical strips over a width x height sheet.
SensorLayout make_grid_layout(int top_count, int bottom_count, double width, double height, double gap);

/// A 12 + 12 strip layout with 92 crossings over a 200 x 200 mm sheet; the
/// vertical strips are all fed from the bottom edge and have staggered
/// lengths.
SensorLayout make_prototype_layout();

}  // namespace stretchcap
