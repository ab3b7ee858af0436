#include "stretchcap/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "stretchcap/io.hpp"

namespace stretchcap {

Eigen::VectorXd face_areas(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces) {
  Eigen::VectorXd areas(faces.rows());
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Eigen::Vector3d a = vertices.row(faces(f, 0));
    const Eigen::Vector3d b = vertices.row(faces(f, 1));
    const Eigen::Vector3d c = vertices.row(faces(f, 2));
    areas[f] = 0.5 * (b - a).cross(c - a).norm();
  }
  return areas;
}

Eigen::VectorXd face_areas_2d(const Eigen::MatrixX2d& uv, const Eigen::MatrixX3i& faces) {
  Eigen::VectorXd areas(faces.rows());
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Eigen::Vector2d a = uv.row(faces(f, 0));
    const Eigen::Vector2d b = uv.row(faces(f, 1));
    const Eigen::Vector2d c = uv.row(faces(f, 2));
    const Eigen::Vector2d e1 = b - a, e2 = c - a;
    areas[f] = 0.5 * std::abs(e1.x() * e2.y() - e1.y() * e2.x());
  }
  return areas;
}

std::vector<std::vector<int>> faces_per_cell(const SensorMesh& mesh) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(mesh.num_cells()));
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const int c = mesh.face_cell[static_cast<std::size_t>(f)];
    if (c != kNoCell) out[static_cast<std::size_t>(c)].push_back(f);
  }
  return out;
}

MeshTopology mesh_topology(const Eigen::MatrixX3i& faces, int num_vertices) {
  MeshTopology topo;
  std::map<std::pair<int, int>, int> edge_count;
  std::map<std::pair<int, int>, int> directed;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = faces(f, k), b = faces(f, (k + 1) % 3);
      ++edge_count[{std::min(a, b), std::max(a, b)}];
      if (++directed[{a, b}] > 1) topo.manifold = false;  // inconsistent orientation
    }
  }
  std::map<int, std::vector<int>> boundary_next;
  int boundary_edges = 0;
  for (const auto& [e, n] : edge_count) {
    if (n > 2) topo.manifold = false;
    if (n == 1) ++boundary_edges;
  }
  for (const auto& [e, n] : directed) {
    const auto key = std::make_pair(std::min(e.first, e.second), std::max(e.first, e.second));
    if (edge_count[key] == 1) boundary_next[e.first].push_back(e.second);
  }
  // Walk boundary loops.
  std::map<std::pair<int, int>, bool> seen;
  for (const auto& [start, nexts] : boundary_next) {
    if (nexts.size() > 1) topo.manifold = false;
    for (int nx : nexts) {
      if (seen[{start, nx}]) continue;
      ++topo.boundary_loops;
      int a = start, b = nx;
      int guard = 0;
      while (!seen[{a, b}] && guard++ <= boundary_edges) {
        seen[{a, b}] = true;
        const auto it = boundary_next.find(b);
        if (it == boundary_next.end() || it->second.empty()) break;
        a = b;
        b = it->second.front();
      }
    }
  }
  // Connected components over used vertices.
  std::vector<int> parent(static_cast<std::size_t>(num_vertices));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::vector<bool> used(static_cast<std::size_t>(num_vertices), false);
  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int k = 0; k < 3; ++k) {
      used[static_cast<std::size_t>(faces(f, k))] = true;
      const int ra = find(faces(f, k)), rb = find(faces(f, (k + 1) % 3));
      if (ra != rb) parent[static_cast<std::size_t>(ra)] = rb;
    }
  int used_count = 0;
  for (int v = 0; v < num_vertices; ++v) {
    if (!used[static_cast<std::size_t>(v)]) continue;
    ++used_count;
    if (find(v) == v) ++topo.components;
  }
  topo.euler_characteristic =
      used_count - static_cast<int>(edge_count.size()) + static_cast<int>(faces.rows());
  return topo;
}

std::vector<std::string> check_mesh(const SensorMesh& mesh, const std::vector<double>& cell_areas) {
  std::vector<std::string> problems;
  const int nv = mesh.num_vertices();
  if (mesh.uv.rows() != nv) problems.push_back("uv row count differs from vertex count");
  if (static_cast<int>(mesh.face_cell.size()) != mesh.num_faces())
    problems.push_back("face_cell size differs from face count");
  if (mesh.rest_face_areas.size() != mesh.num_faces())
    problems.push_back("rest_face_areas size differs from face count");
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    for (int k = 0; k < 3; ++k)
      if (mesh.faces(f, k) < 0 || mesh.faces(f, k) >= nv) {
        problems.push_back("face " + std::to_string(f) + " references invalid vertex");
        return problems;
      }
  for (Eigen::Index f = 0; f < mesh.rest_face_areas.size(); ++f)
    if (!(mesh.rest_face_areas[f] > 0.0))
      problems.push_back("face " + std::to_string(f) + " has non-positive rest area");
  for (int m : mesh.marker_vertices)
    if (m < 0 || m >= nv) problems.push_back("marker vertex " + std::to_string(m) + " out of range");

  const auto topo = mesh_topology(mesh.faces, nv);
  if (!topo.manifold) problems.push_back("mesh is not an oriented manifold");
  if (topo.components != 1)
    problems.push_back("mesh has " + std::to_string(topo.components) + " connected components");

  const auto per_cell = faces_per_cell(mesh);
  for (std::size_t c = 0; c < per_cell.size(); ++c) {
    if (per_cell[c].empty()) {
      problems.push_back("cell " + std::to_string(c) + " has no faces");
      continue;
    }
    if (c < cell_areas.size()) {
      double sum = 0.0;
      for (int f : per_cell[c]) sum += mesh.rest_face_areas[f];
      if (std::abs(sum - cell_areas[c]) > 1e-6 * cell_areas[c])
        problems.push_back("cell " + std::to_string(c) + " face areas sum to " + format_double(sum) +
                           ", expected " + format_double(cell_areas[c]));
    }
  }
  return problems;
}

std::string format_obj(const Eigen::MatrixX3d& vertices, const Eigen::MatrixX3i& faces) {
  std::string out;
  out.reserve(static_cast<std::size_t>(vertices.rows() * 40 + faces.rows() * 24));
  char buf[128];
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", vertices(v, 0), vertices(v, 1), vertices(v, 2));
    out += buf;
  }
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    std::snprintf(buf, sizeof(buf), "f %d %d %d\n", faces(f, 0) + 1, faces(f, 1) + 1, faces(f, 2) + 1);
    out += buf;
  }
  return out;
}

void write_obj(const std::filesystem::path& path, const Eigen::MatrixX3d& vertices,
               const Eigen::MatrixX3i& faces) {
  write_text_file_atomic(path, format_obj(vertices, faces));
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& obj_path) {
  auto p = obj_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_mesh(const std::filesystem::path& obj_path, const SensorMesh& mesh) {
  // Full precision in the OBJ so a reload reproduces the mesh exactly.
  std::string obj;
  for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v)
    obj += "v " + format_double(mesh.vertices(v, 0)) + " " + format_double(mesh.vertices(v, 1)) + " " +
           format_double(mesh.vertices(v, 2)) + "\n";
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    obj += "f " + std::to_string(mesh.faces(f, 0) + 1) + " " + std::to_string(mesh.faces(f, 1) + 1) + " " +
           std::to_string(mesh.faces(f, 2) + 1) + "\n";
  write_text_file_atomic(obj_path, obj);

  nlohmann::json j;
  j["version"] = 1;
  auto& uv = j["uv"] = nlohmann::json::array();
  for (Eigen::Index v = 0; v < mesh.uv.rows(); ++v) uv.push_back({mesh.uv(v, 0), mesh.uv(v, 1)});
  j["face_cell"] = mesh.face_cell;
  j["cell_center"] = mesh.cell_center;
  j["marker_vertices"] = mesh.marker_vertices;
  j["rest_face_areas"] =
      std::vector<double>(mesh.rest_face_areas.data(), mesh.rest_face_areas.data() + mesh.rest_face_areas.size());
  write_text_file_atomic(sidecar_path(obj_path), j.dump(1));
}

SensorMesh load_mesh(const std::filesystem::path& obj_path) {
  std::ifstream in(obj_path);
  if (!in) throw std::runtime_error("cannot open " + obj_path.string());
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw FormatError(obj_path.string(), lineno, "bad vertex");
      verts.push_back(p);
    } else if (tag == "f") {
      Eigen::Vector3i f;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        if (!(ls >> tok)) throw FormatError(obj_path.string(), lineno, "bad face");
        f[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      faces.push_back(f);
    }
  }
  SensorMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
  mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(static_cast<Eigen::Index>(i)) = faces[i];

  const auto side = nlohmann::json::parse(read_text_file(sidecar_path(obj_path)));
  const auto& uv = side.at("uv");
  if (uv.size() != verts.size()) throw std::runtime_error("sidecar uv count differs from OBJ vertex count");
  mesh.uv.resize(static_cast<Eigen::Index>(uv.size()), 2);
  for (std::size_t i = 0; i < uv.size(); ++i) {
    mesh.uv(static_cast<Eigen::Index>(i), 0) = uv[i][0].get<double>();
    mesh.uv(static_cast<Eigen::Index>(i), 1) = uv[i][1].get<double>();
  }
  mesh.face_cell = side.at("face_cell").get<std::vector<int>>();
  mesh.cell_center = side.at("cell_center").get<std::vector<int>>();
  mesh.marker_vertices = side.at("marker_vertices").get<std::vector<int>>();
  const auto areas = side.at("rest_face_areas").get<std::vector<double>>();
  mesh.rest_face_areas = Eigen::Map<const Eigen::VectorXd>(areas.data(), static_cast<Eigen::Index>(areas.size()));
  if (static_cast<Eigen::Index>(mesh.face_cell.size()) != mesh.faces.rows())
    throw std::runtime_error("sidecar face_cell count differs from OBJ face count");
  return mesh;
}

}  // namespace stretchcap
