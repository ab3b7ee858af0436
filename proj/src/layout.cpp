#include "stretchcap/layout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/algorithms/point_on_surface.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <json.hpp>

#include "delaunay.hpp"
#include "stretchcap/io.hpp"

namespace stretchcap {

namespace bg = boost::geometry;
using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint>;
using BMulti = bg::model::multi_polygon<BPolygon>;

namespace {

BPolygon to_boost(const Polygon2& poly) {
  BPolygon out;
  for (const auto& p : poly) bg::append(out.outer(), BPoint(p.x(), p.y()));
  bg::correct(out);
  return out;
}

// Counter-clockwise, without the closing point.
Polygon2 from_boost(const BPolygon& poly) {
  Polygon2 out;
  for (const auto& p : poly.outer()) out.emplace_back(p.x(), p.y());
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  double signed_area = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& a = out[i];
    const auto& b = out[(i + 1) % out.size()];
    signed_area += a.x() * b.y() - b.x() * a.y();
  }
  if (signed_area < 0.0) std::reverse(out.begin(), out.end());
  return out;
}

double polygon_area(const Polygon2& poly) { return bg::area(to_boost(poly)); }

std::string layer_name(Layer layer) { return layer == Layer::Top ? "top" : "bottom"; }

Polygon2 parse_polygon(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw LayoutError(what + ": polygon must be an array of [x, y] points");
  Polygon2 out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw LayoutError(what + ": polygon points must be [x, y]");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

nlohmann::json polygon_json(const Polygon2& poly) {
  auto arr = nlohmann::json::array();
  for (const auto& p : poly) arr.push_back({p.x(), p.y()});
  return arr;
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

}  // namespace

int SensorLayout::strip_index(const std::string& id) const {
  for (std::size_t i = 0; i < strips.size(); ++i)
    if (strips[i].id == id) return static_cast<int>(i);
  return -1;
}

int SensorLayout::count(Layer layer) const {
  return static_cast<int>(std::count_if(strips.begin(), strips.end(), [&](const auto& s) { return s.layer == layer; }));
}

SensorLayout parse_layout(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LayoutError(std::string("layout JSON: ") + e.what());
  }
  SensorLayout layout;
  if (j.contains("units")) layout.units = j["units"].get<std::string>();
  if (layout.units != "mm") throw LayoutError("layout units must be mm");
  if (!j.contains("strips") || !j["strips"].is_array()) throw LayoutError("layout JSON has no strips array");
  for (const auto& s : j["strips"]) {
    ElectrodeStrip strip;
    strip.id = s.at("id").is_string() ? s.at("id").get<std::string>() : s.at("id").dump();
    const auto layer = s.at("layer").get<std::string>();
    if (layer == "top") strip.layer = Layer::Top;
    else if (layer == "bottom") strip.layer = Layer::Bottom;
    else throw LayoutError("strip " + strip.id + ": layer must be top or bottom");
    strip.polygon = parse_polygon(s.at("polygon"), "strip " + strip.id);
    if (s.contains("lead_side")) strip.lead_side = s["lead_side"].get<std::string>();
    layout.strips.push_back(std::move(strip));
  }
  if (j.contains("outline")) {
    layout.outline = parse_polygon(j["outline"], "outline");
  } else {
    // Default outline: bounding box of all strips.
    BMulti all;
    bg::model::box<BPoint> box;
    bg::assign_inverse(box);
    for (const auto& s : layout.strips) bg::expand(box, bg::return_envelope<bg::model::box<BPoint>>(to_boost(s.polygon)));
    layout.outline = {{box.min_corner().x(), box.min_corner().y()},
                      {box.max_corner().x(), box.min_corner().y()},
                      {box.max_corner().x(), box.max_corner().y()},
                      {box.min_corner().x(), box.max_corner().y()}};
  }
  if (j.contains("rest_capacitance")) {
    for (const auto& m : j["rest_capacitance"])
      layout.measured_capacitance[{m.at("top").get<std::string>(), m.at("bottom").get<std::string>()}] =
          m.at("farads").get<double>();
  }
  validate_layout(layout);
  return layout;
}

SensorLayout load_layout(const std::filesystem::path& path) { return parse_layout(read_text_file(path)); }

std::string layout_to_json(const SensorLayout& layout) {
  nlohmann::ordered_json j;
  j["units"] = layout.units;
  auto strips = nlohmann::ordered_json::array();
  for (const auto& s : layout.strips) {
    nlohmann::ordered_json js;
    js["id"] = s.id;
    js["layer"] = layer_name(s.layer);
    js["polygon"] = polygon_json(s.polygon);
    if (!s.lead_side.empty()) js["lead_side"] = s.lead_side;
    strips.push_back(std::move(js));
  }
  j["strips"] = std::move(strips);
  j["outline"] = polygon_json(layout.outline);
  if (!layout.measured_capacitance.empty()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [key, farads] : layout.measured_capacitance)
      arr.push_back({{"top", key.first}, {"bottom", key.second}, {"farads", farads}});
    j["rest_capacitance"] = std::move(arr);
  }
  return j.dump(1);
}

std::uint64_t layout_hash(const SensorLayout& layout) {
  std::string canon;
  for (const auto& s : layout.strips) {
    canon += s.id + "|" + layer_name(s.layer);
    for (const auto& p : s.polygon) canon += "|" + format_double(p.x()) + "," + format_double(p.y());
    canon += ";";
  }
  canon += "outline";
  for (const auto& p : layout.outline) canon += "|" + format_double(p.x()) + "," + format_double(p.y());
  return fnv1a64(canon);
}

void validate_layout(const SensorLayout& layout) {
  if (layout.strips.empty()) throw LayoutError("layout has no strips");
  std::set<std::string> ids;
  for (const auto& s : layout.strips) {
    if (!ids.insert(s.id).second) throw LayoutError("duplicate strip id " + s.id);
    if (s.polygon.size() < 3) throw LayoutError("strip " + s.id + " has fewer than three points");
    const auto poly = to_boost(s.polygon);
    std::string reason;
    if (!bg::is_valid(poly, reason)) throw LayoutError("strip " + s.id + " polygon is not simple: " + reason);
    if (!(bg::area(poly) > 0.0)) throw LayoutError("strip " + s.id + " has zero area");
  }
  if (layout.outline.size() < 3) throw LayoutError("outline has fewer than three points");
  {
    std::string reason;
    if (!bg::is_valid(to_boost(layout.outline), reason)) throw LayoutError("outline is not simple: " + reason);
  }
  for (std::size_t i = 0; i < layout.strips.size(); ++i) {
    for (std::size_t k = i + 1; k < layout.strips.size(); ++k) {
      const auto& a = layout.strips[i];
      const auto& b = layout.strips[k];
      if (a.layer != b.layer) continue;
      BMulti overlap;
      bg::intersection(to_boost(a.polygon), to_boost(b.polygon), overlap);
      const double area = bg::area(overlap);
      const double scale = std::min(polygon_area(a.polygon), polygon_area(b.polygon));
      if (area > 1e-9 * scale)
        throw LayoutError("strips " + a.id + " and " + b.id + " overlap on the " + layer_name(a.layer) + " layer");
    }
  }
}

std::vector<SensorCell> build_cells(const SensorLayout& layout, const CapacitorParams& params) {
  if (layout.count(Layer::Top) == 0 || layout.count(Layer::Bottom) == 0)
    return {};  // no inter-layer overlap possible
  std::vector<SensorCell> cells;
  for (std::size_t t = 0; t < layout.strips.size(); ++t) {
    if (layout.strips[t].layer != Layer::Top) continue;
    const auto top = to_boost(layout.strips[t].polygon);
    for (std::size_t b = 0; b < layout.strips.size(); ++b) {
      if (layout.strips[b].layer != Layer::Bottom) continue;
      const auto bottom = to_boost(layout.strips[b].polygon);
      BMulti overlap;
      bg::intersection(top, bottom, overlap);
      const double scale = std::min(bg::area(top), bg::area(bottom));
      std::vector<const BPolygon*> pieces;
      for (const auto& piece : overlap)
        if (bg::area(piece) > 1e-9 * scale) pieces.push_back(&piece);
      if (pieces.empty()) continue;
      if (pieces.size() > 1)
        throw LayoutError("strips " + layout.strips[t].id + " and " + layout.strips[b].id + " cross " +
                          std::to_string(pieces.size()) + " times; each pair may cross at most once");
      if (!pieces.front()->inners().empty())
        throw LayoutError("overlap of strips " + layout.strips[t].id + " and " + layout.strips[b].id +
                          " has holes");
      SensorCell cell;
      cell.top_strip = static_cast<int>(t);
      cell.bottom_strip = static_cast<int>(b);
      cell.polygon = from_boost(*pieces.front());
      cell.rest_area = bg::area(*pieces.front());
      const auto measured =
          layout.measured_capacitance.find({layout.strips[t].id, layout.strips[b].id});
      if (measured != layout.measured_capacitance.end()) {
        cell.rest_capacitance = measured->second;
        cell.capacitance_origin = CapacitanceOrigin::Measured;
      } else {
        cell.rest_capacitance = plate_capacitance(params, cell.rest_area);
        cell.capacitance_origin = CapacitanceOrigin::Computed;
      }
      cells.push_back(std::move(cell));
    }
  }
  std::sort(cells.begin(), cells.end(), [](const SensorCell& a, const SensorCell& b) {
    return std::tie(a.top_strip, a.bottom_strip) < std::tie(b.top_strip, b.bottom_strip);
  });
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i].id = static_cast<int>(i);
  return cells;
}

namespace {

Eigen::Vector2d interior_point(const Polygon2& poly) {
  const auto bp = to_boost(poly);
  BPoint c;
  bg::centroid(bp, c);
  if (bg::within(c, bp)) return {c.x(), c.y()};
  bg::point_on_surface(bp, c);
  return {c.x(), c.y()};
}

struct PslgBuilder {
  double eps;
  detail::Pslg pslg;

  int add_point(const Eigen::Vector2d& p) {
    for (std::size_t i = 0; i < pslg.points.size(); ++i)
      if ((pslg.points[i] - p).norm() <= eps) return static_cast<int>(i);
    pslg.points.push_back(p);
    return static_cast<int>(pslg.points.size()) - 1;
  }

  void add_loop(const Polygon2& poly) {
    std::vector<int> idx;
    for (const auto& p : poly) idx.push_back(add_point(p));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int a = idx[i], b = idx[(i + 1) % idx.size()];
      if (a != b) pslg.segments.push_back({a, b});
    }
  }

  // Splits segments at PSLG vertices lying on them and removes duplicates.
  void normalize() {
    std::vector<std::array<int, 2>> out;
    for (const auto& s : pslg.segments) {
      const auto& a = pslg.points[static_cast<std::size_t>(s[0])];
      const auto& b = pslg.points[static_cast<std::size_t>(s[1])];
      const Eigen::Vector2d ab = b - a;
      std::vector<std::pair<double, int>> on;
      for (std::size_t i = 0; i < pslg.points.size(); ++i) {
        if (static_cast<int>(i) == s[0] || static_cast<int>(i) == s[1]) continue;
        if (point_segment_distance(pslg.points[i], a, b) > eps) continue;
        const double t = (pslg.points[i] - a).dot(ab) / ab.squaredNorm();
        if (t > 0.0 && t < 1.0) on.emplace_back(t, static_cast<int>(i));
      }
      std::sort(on.begin(), on.end());
      int prev = s[0];
      for (const auto& [t, i] : on) {
        out.push_back({prev, i});
        prev = i;
      }
      out.push_back({prev, s[1]});
    }
    std::set<std::pair<int, int>> seen;
    pslg.segments.clear();
    for (const auto& s : out) {
      const auto key = std::make_pair(std::min(s[0], s[1]), std::max(s[0], s[1]));
      if (seen.insert(key).second) pslg.segments.push_back(s);
    }
  }

  // Subdivides every segment into equal pieces no longer than h.
  void subdivide(double h) {
    std::vector<std::array<int, 2>> out;
    for (const auto& s : pslg.segments) {
      const Eigen::Vector2d a = pslg.points[static_cast<std::size_t>(s[0])];
      const Eigen::Vector2d b = pslg.points[static_cast<std::size_t>(s[1])];
      const int pieces = std::max(1, static_cast<int>(std::ceil((b - a).norm() / h - 1e-9)));
      int prev = s[0];
      for (int k = 1; k < pieces; ++k) {
        pslg.points.push_back(a + (b - a) * (static_cast<double>(k) / pieces));
        const int idx = static_cast<int>(pslg.points.size()) - 1;
        out.push_back({prev, idx});
        prev = idx;
      }
      out.push_back({prev, s[1]});
    }
    pslg.segments.swap(out);
  }
};

}  // namespace

SensorMesh mesh_layout(const SensorLayout& layout, const std::vector<SensorCell>& cells, const MeshOptions& options) {
  const double h = options.target_edge_length;
  if (!(h > 0.0)) throw std::invalid_argument("target_edge_length must be positive");
  const auto outline = to_boost(layout.outline);
  bg::model::box<BPoint> bbox;
  bg::envelope(outline, bbox);
  const double extent = std::max(bbox.max_corner().x() - bbox.min_corner().x(),
                                 bbox.max_corner().y() - bbox.min_corner().y());
  for (const auto& c : cells)
    if (!bg::covered_by(to_boost(c.polygon), outline))
      throw LayoutError("cell " + std::to_string(c.id) + " extends outside the outline");

  PslgBuilder builder{1e-9 * extent, {}};
  builder.add_loop(from_boost(outline));
  for (const auto& c : cells) builder.add_loop(c.polygon);
  builder.normalize();
  const auto coarse_segments = builder.pslg;  // for lattice clearance tests
  builder.subdivide(h);

  std::vector<int> center_pslg;
  for (const auto& c : cells) center_pslg.push_back(builder.add_point(interior_point(c.polygon)));

  // Jittered triangular lattice of interior sample points.
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(-0.05 * h, 0.05 * h);
  std::vector<Eigen::Vector2d> lattice;
  const double row_step = h * std::sqrt(3.0) / 2.0;
  int row = 0;
  for (double y = bbox.min_corner().y() + 0.5 * row_step; y < bbox.max_corner().y(); y += row_step, ++row) {
    const double offset = (row % 2) ? 0.5 * h : 0.0;
    for (double x = bbox.min_corner().x() + 0.5 * h + offset; x < bbox.max_corner().x(); x += h) {
      const double jx = jitter(rng), jy = jitter(rng);
      const Eigen::Vector2d p(x + jx, y + jy);
      if (!bg::within(BPoint(p.x(), p.y()), outline)) continue;
      bool clear = true;
      for (const auto& s : coarse_segments.segments) {
        if (point_segment_distance(p, coarse_segments.points[static_cast<std::size_t>(s[0])],
                                   coarse_segments.points[static_cast<std::size_t>(s[1])]) < 0.5 * h) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      for (int ci : center_pslg)
        if ((builder.pslg.points[static_cast<std::size_t>(ci)] - p).norm() < 0.5 * h) {
          clear = false;
          break;
        }
      if (clear) lattice.push_back(p);
    }
  }

  auto tri = detail::conforming_delaunay(builder.pslg, lattice);

  // Keep interior triangles and compact the vertex set.
  std::vector<std::array<int, 3>> kept;
  for (const auto& t : tri.triangles) {
    const Eigen::Vector2d c =
        (tri.points[static_cast<std::size_t>(t[0])] + tri.points[static_cast<std::size_t>(t[1])] +
         tri.points[static_cast<std::size_t>(t[2])]) / 3.0;
    if (bg::within(BPoint(c.x(), c.y()), outline)) kept.push_back(t);
  }
  std::vector<int> remap(tri.points.size(), -1);
  int nv = 0;
  for (const auto& t : kept)
    for (int v : t)
      if (remap[static_cast<std::size_t>(v)] < 0) remap[static_cast<std::size_t>(v)] = nv++;
  // Vertex order follows first use, which is deterministic.

  SensorMesh mesh;
  mesh.uv.resize(nv, 2);
  for (std::size_t i = 0; i < tri.points.size(); ++i)
    if (remap[i] >= 0) mesh.uv.row(remap[i]) = tri.points[i].transpose();
  mesh.vertices = Eigen::MatrixX3d::Zero(nv, 3);
  mesh.vertices.leftCols(2) = mesh.uv;
  mesh.faces.resize(static_cast<Eigen::Index>(kept.size()), 3);
  for (std::size_t f = 0; f < kept.size(); ++f)
    for (int k = 0; k < 3; ++k)
      mesh.faces(static_cast<Eigen::Index>(f), k) = remap[static_cast<std::size_t>(kept[f][static_cast<std::size_t>(k)])];
  mesh.rest_face_areas = face_areas_2d(mesh.uv, mesh.faces);

  std::vector<std::string> degenerate;
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    if (mesh.rest_face_areas[f] < 1e-10 * h * h) degenerate.push_back(std::to_string(f));
  if (!degenerate.empty()) {
    std::string list;
    for (std::size_t i = 0; i < degenerate.size() && i < 20; ++i) list += (i ? ", " : "") + degenerate[i];
    throw LayoutError("meshing produced " + std::to_string(degenerate.size()) + " degenerate faces: " + list);
  }

  // Face-cell membership by centroid.
  std::vector<BPolygon> cell_polys;
  std::vector<bg::model::box<BPoint>> cell_boxes;
  for (const auto& c : cells) {
    cell_polys.push_back(to_boost(c.polygon));
    cell_boxes.push_back(bg::return_envelope<bg::model::box<BPoint>>(cell_polys.back()));
  }
  mesh.face_cell.assign(static_cast<std::size_t>(mesh.faces.rows()), kNoCell);
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    const Eigen::Vector2d c =
        (mesh.uv.row(mesh.faces(f, 0)) + mesh.uv.row(mesh.faces(f, 1)) + mesh.uv.row(mesh.faces(f, 2))) / 3.0;
    const BPoint bc(c.x(), c.y());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (!bg::covered_by(bc, cell_boxes[k])) continue;
      if (bg::within(bc, cell_polys[k])) {
        mesh.face_cell[static_cast<std::size_t>(f)] = static_cast<int>(k);
        break;
      }
    }
  }

  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& p = builder.pslg.points[static_cast<std::size_t>(center_pslg[k])];
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < nv; ++v) {
      const double d = (mesh.uv.row(v).transpose() - p).norm();
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    mesh.cell_center.push_back(best);
  }

  std::vector<double> areas;
  for (const auto& c : cells) areas.push_back(c.rest_area);
  const auto problems = check_mesh(mesh, areas);
  if (!problems.empty()) throw LayoutError("meshing failed: " + problems.front());
  return mesh;
}

namespace {

std::vector<int> farthest_point_order(const SensorMesh& mesh, double max_spacing, int max_count) {
  const auto& centers = mesh.cell_center;
  if (centers.empty()) return {};
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int v : centers) mean += mesh.vertices.row(v).transpose();
  mean /= static_cast<double>(centers.size());
  std::size_t first = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double d = (mesh.vertices.row(centers[i]).transpose() - mean).norm();
    if (d < best) {
      best = d;
      first = i;
    }
  }
  std::vector<int> selected{centers[first]};
  std::vector<double> dist(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i)
    dist[i] = (mesh.vertices.row(centers[i]) - mesh.vertices.row(centers[first])).norm();
  while (static_cast<int>(selected.size()) < max_count) {
    const auto it = std::max_element(dist.begin(), dist.end());
    if (*it <= max_spacing) break;
    const auto pick = static_cast<std::size_t>(it - dist.begin());
    selected.push_back(centers[pick]);
    for (std::size_t i = 0; i < centers.size(); ++i)
      dist[i] = std::min(dist[i], (mesh.vertices.row(centers[i]) - mesh.vertices.row(centers[pick])).norm());
  }
  return selected;
}

}  // namespace

std::vector<int> select_markers(const SensorMesh& mesh, double max_spacing) {
  if (!(max_spacing > 0.0)) throw std::invalid_argument("max_spacing must be positive");
  return farthest_point_order(mesh, max_spacing, std::numeric_limits<int>::max());
}

std::vector<int> select_markers_count(const SensorMesh& mesh, int count) {
  if (count < 1) throw std::invalid_argument("marker count must be at least 1");
  if (count > mesh.num_cells()) throw std::invalid_argument("more markers requested than cells");
  return farthest_point_order(mesh, -1.0, count);
}

SensorMesh roll_to_cylinder(const SensorMesh& mesh, double seam_tolerance) {
  if (seam_tolerance < 0.0) throw std::invalid_argument("seam tolerance must be non-negative");
  const double u0 = mesh.uv.col(0).minCoeff(), u1 = mesh.uv.col(0).maxCoeff();
  const double width = u1 - u0;
  if (!(width > 0.0)) throw LayoutError("mesh has zero width");
  const double on_side = 1e-9 * width;
  std::vector<int> left, right;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.uv(v, 0) - u0 <= on_side) left.push_back(v);
    else if (u1 - mesh.uv(v, 0) <= on_side) right.push_back(v);
  }
  auto by_v = [&](int a, int b) { return mesh.uv(a, 1) < mesh.uv(b, 1); };
  std::sort(left.begin(), left.end(), by_v);
  std::sort(right.begin(), right.end(), by_v);
  if (left.size() < 2 || right.size() < 2) throw LayoutError("mesh has no straight seam sides");
  const double left_len = mesh.uv(left.back(), 1) - mesh.uv(left.front(), 1);
  const double right_len = mesh.uv(right.back(), 1) - mesh.uv(right.front(), 1);
  if (std::abs(left_len - right_len) > seam_tolerance)
    throw LayoutError("seam sides differ in length by " + format_double(std::abs(left_len - right_len)) + " mm");
  if (left.size() != right.size())
    throw LayoutError("seam sides have " + std::to_string(left.size()) + " and " + std::to_string(right.size()) +
                      " vertices");
  std::vector<int> merge_into(static_cast<std::size_t>(mesh.num_vertices()));
  std::iota(merge_into.begin(), merge_into.end(), 0);
  for (std::size_t i = 0; i < left.size(); ++i) {
    const double dv = std::abs(mesh.uv(left[i], 1) - mesh.uv(right[i], 1));
    if (dv > seam_tolerance)
      throw LayoutError("seam vertices " + std::to_string(left[i]) + " and " + std::to_string(right[i]) +
                        " are " + format_double(dv) + " mm apart");
    merge_into[static_cast<std::size_t>(right[i])] = left[i];
  }
  std::vector<int> remap(static_cast<std::size_t>(mesh.num_vertices()), -1);
  int nv = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (merge_into[static_cast<std::size_t>(v)] == v) remap[static_cast<std::size_t>(v)] = nv++;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    remap[static_cast<std::size_t>(v)] = remap[static_cast<std::size_t>(merge_into[static_cast<std::size_t>(v)])];

  const double radius = width / (2.0 * M_PI);
  SensorMesh out;
  out.vertices.resize(nv, 3);
  out.uv.resize(nv, 2);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (merge_into[static_cast<std::size_t>(v)] != v) continue;
    const int r = remap[static_cast<std::size_t>(v)];
    const double theta = 2.0 * M_PI * (mesh.uv(v, 0) - u0) / width;
    out.vertices.row(r) << radius * std::cos(theta), radius * std::sin(theta), mesh.uv(v, 1);
    out.uv.row(r) = mesh.uv.row(v);
  }
  out.faces.resize(mesh.faces.rows(), 3);
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    for (int k = 0; k < 3; ++k) out.faces(f, k) = remap[static_cast<std::size_t>(mesh.faces(f, k))];
  out.face_cell = mesh.face_cell;
  out.rest_face_areas = mesh.rest_face_areas;
  for (int c : mesh.cell_center) out.cell_center.push_back(remap[static_cast<std::size_t>(c)]);
  for (int m : mesh.marker_vertices) out.marker_vertices.push_back(remap[static_cast<std::size_t>(m)]);
  const auto problems = check_mesh(out);
  if (!problems.empty()) throw LayoutError("rolled mesh is invalid: " + problems.front());
  return out;
}

namespace {

std::string bottom_strip_name(int j) {
  static const char* const kNames[] = {"A", "B", "Γ", "Δ", "E", "Z", "H", "Θ", "I", "K", "Λ", "M"};
  if (j < 12) return kNames[j];
  return "B" + std::to_string(j + 1);
}

Polygon2 rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

}  // namespace

SensorLayout make_grid_layout(int top_count, int bottom_count, double width, double height, double gap) {
  if (top_count < 1 || bottom_count < 1) throw std::invalid_argument("grid needs at least one strip per layer");
  SensorLayout layout;
  const double dy = height / top_count, dx = width / bottom_count;
  if (!(gap >= 0.0) || gap >= std::min(dx, dy)) throw std::invalid_argument("gap too large for grid pitch");
  for (int i = 0; i < top_count; ++i)
    layout.strips.push_back({std::to_string(i + 1), Layer::Top,
                             rect(0.0, i * dy + 0.5 * gap, width, (i + 1) * dy - 0.5 * gap), "left"});
  for (int j = 0; j < bottom_count; ++j)
    layout.strips.push_back({bottom_strip_name(j), Layer::Bottom,
                             rect(j * dx + 0.5 * gap, 0.0, (j + 1) * dx - 0.5 * gap, height), "bottom"});
  layout.outline = rect(0.0, 0.0, width, height);
  return layout;
}

SensorLayout make_prototype_layout() {
  constexpr int kStrips = 12;
  constexpr double kSize = 200.0, kGap = 4.0;
  // Rows crossed by each vertical strip, fed from y = 0.
  constexpr int kRows[kStrips] = {6, 7, 8, 8, 8, 9, 9, 8, 8, 8, 7, 6};
  const double pitch = kSize / kStrips;
  SensorLayout layout;
  for (int i = 0; i < kStrips; ++i)
    layout.strips.push_back({std::to_string(i + 1), Layer::Top,
                             rect(0.0, i * pitch + 0.5 * kGap, kSize, (i + 1) * pitch - 0.5 * kGap), "left"});
  for (int j = 0; j < kStrips; ++j)
    layout.strips.push_back({bottom_strip_name(j), Layer::Bottom,
                             rect(j * pitch + 0.5 * kGap, 0.0, (j + 1) * pitch - 0.5 * kGap, kRows[j] * pitch),
                             "bottom"});
  layout.outline = rect(0.0, 0.0, kSize, kSize);
  return layout;
}

}  // namespace stretchcap
