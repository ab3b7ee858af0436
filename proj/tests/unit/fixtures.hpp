#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stretchcap/layout.hpp"
#include "stretchcap/pipeline.hpp"
#include "stretchcap/synth.hpp"

namespace fixtures {

// Prototype layout rolled into a cylinder, 10 mm mesh, `markers` markers.
inline const stretchcap::SensorMesh& cylinder_mesh(int markers = 12) {
  static std::map<int, stretchcap::SensorMesh> cache;
  auto it = cache.find(markers);
  if (it == cache.end()) {
    const auto layout = stretchcap::make_prototype_layout();
    it = cache.emplace(markers, stretchcap::build_rest_mesh(layout, stretchcap::build_cells(layout), 10.0,
                                                            stretchcap::RestShape::Cylinder, markers))
             .first;
  }
  return it->second;
}

inline stretchcap::Scenario wrist_scenario(int frames, double max_bend = 60.0) {
  stretchcap::Scenario s;
  s.kind = stretchcap::ScenarioKind::CylinderBend;
  s.frames = frames;
  s.schedule.type = stretchcap::Schedule::Type::Aperiodic;
  s.schedule.min = 0.0;
  s.schedule.max = max_bend;
  s.schedule.period = 400.0;
  s.azimuth_deg = 40.0;
  s.world.rotation_deg = 30.0;
  s.world.translation_mm = 100.0;
  return s;
}

// Three frame-0 tracks with their true marker vertices, not collinear.
inline std::vector<std::pair<std::string, int>> seed_pairs(const stretchcap::SyntheticSession& syn) {
  std::vector<std::pair<std::string, int>> out;
  std::vector<Eigen::Vector3d> points;
  for (const auto& tr : syn.session.tracks) {
    if (!tr.visible[0]) continue;
    const auto truth = syn.truth.find(tr.label);
    if (truth == syn.truth.end() || truth->second < 0) continue;
    const Eigen::Vector3d p = tr.positions.row(0).transpose();
    if (points.size() == 2 && ((points[1] - points[0]).cross(p - points[0])).norm() < 100.0) continue;
    points.push_back(p);
    out.emplace_back(tr.label, syn.marker_vertices[static_cast<std::size_t>(truth->second)]);
    if (out.size() == 3) break;
  }
  return out;
}

}  // namespace fixtures
