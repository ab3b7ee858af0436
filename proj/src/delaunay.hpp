#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace stretchcap::detail {

/// Planar straight-line graph: points plus segments that must appear as
/// unions of triangulation edges.
struct Pslg {
  std::vector<Eigen::Vector2d> points;
  std::vector<std::array<int, 2>> segments;
};

struct Triangulation {
  std::vector<Eigen::Vector2d> points;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
};

class TriangulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Delaunay triangulation of pslg.points + extra_points, refined by midpoint
/// splitting until every segment is covered by edges. Returns all triangles
/// of the convex hull; callers remove the exterior.
Triangulation conforming_delaunay(const Pslg& pslg, const std::vector<Eigen::Vector2d>& extra_points,
                                  int max_splits = 100000);

double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c);

}  // namespace stretchcap::detail
