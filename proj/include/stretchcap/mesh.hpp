#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stretchcap {

inline constexpr int kNoCell = -1;

/// Rest-state triangle mesh of a sensor layout.
///
/// `uv` holds the intrinsic layout-plane coordinates of every vertex and never
/// changes when the mesh is bent into its canonical 3D rest shape (e.g. by
/// roll_to_cylinder). `rest_face_areas` are intrinsic areas computed from `uv`,
/// so the per-cell area partition holds regardless of the 3D embedding.
struct SensorMesh {
  Eigen::MatrixX3d vertices;
  Eigen::MatrixX2d uv;
  Eigen::MatrixX3i faces;
  std::vector<int> face_cell;        // kNoCell for faces outside every cell
  std::vector<int> cell_center;      // vertex index of each cell's center
  std::vector<int> marker_vertices;  // subset of cell_center
  Eigen::VectorXd rest_face_areas;

  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_faces() const { return static_cast<int>(faces.rows()); }
  int num_cells() const { return static_cast<int>(cell_center.size()); }
};

/// Unsigned triangle areas of an embedded mesh.
Eigen::VectorXd face_areas(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces);
Eigen::VectorXd face_areas_2d(const Eigen::MatrixX2d& uv, const Eigen::MatrixX3i& faces);

/// Face indices grouped per cell.
std::vector<std::vector<int>> faces_per_cell(const SensorMesh& mesh);

/// Returns human-readable violations of the SensorMesh invariants; empty when
/// the mesh is valid. `cell_areas` (optional) are checked against the per-cell
/// sum of rest_face_areas at 1e-6 relative.
std::vector<std::string> check_mesh(const SensorMesh& mesh, const std::vector<double>& cell_areas = {});

/// Number of boundary loops and Euler characteristic, for topology assertions.
struct MeshTopology {
  int boundary_loops = 0;
  int euler_characteristic = 0;
  int components = 0;
  bool manifold = true;
};
MeshTopology mesh_topology(const Eigen::MatrixX3i& faces, int num_vertices);

void write_obj(const std::filesystem::path& path, const Eigen::MatrixX3d& vertices,
               const Eigen::MatrixX3i& faces);
std::string format_obj(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces);

/// OBJ plus `<stem>.json` sidecar holding uv, face_cell, cell_center,
/// marker_vertices and rest_face_areas.
void save_mesh(const std::filesystem::path& obj_path, const SensorMesh& mesh);
SensorMesh load_mesh(const std::filesystem::path& obj_path);

}  // namespace stretchcap
