#include "stretchcap/capmodel.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace stretchcap {

void CapacitorParams::validate() const {
  if (!(epsilon_r > 0.0) || !(epsilon_0 > 0.0) || !(d0 > 0.0))
    throw std::invalid_argument("capacitor parameters must be strictly positive");
}

double plate_capacitance(const CapacitorParams& params, double area_mm2) {
  params.validate();
  if (!(area_mm2 > 0.0)) throw std::invalid_argument("plate area must be positive");
  return params.epsilon_r * params.epsilon_0 * area_mm2 / params.d0;
}

double uniaxial_ratio(double length, double rest_length) {
  if (!(length > 0.0) || !(rest_length > 0.0)) throw std::invalid_argument("lengths must be positive");
  return length / rest_length;
}

double area_ratio_to_cap_ratio(double area_ratio) {
  if (!(area_ratio > 0.0)) throw std::invalid_argument("area ratio must be positive");
  return area_ratio * area_ratio;
}

double cap_ratio_to_area_ratio(double cap_ratio) {
  if (!(cap_ratio > 0.0)) throw std::invalid_argument("capacitance ratio must be positive");
  return std::sqrt(cap_ratio);
}

CapacitanceModel::CapacitanceModel(const SensorMesh& rest)
    : faces_(rest.faces), rest_areas_(face_areas(rest.vertices, rest.faces)), cell_faces_(faces_per_cell(rest)) {
  cell_rest_area_.resize(cell_faces_.size(), 0.0);
  for (std::size_t c = 0; c < cell_faces_.size(); ++c) {
    for (int f : cell_faces_[c]) cell_rest_area_[c] += rest_areas_[f];
  }
  face_neighbors_.assign(static_cast<std::size_t>(faces_.rows()), {-1, -1, -1});
  std::map<std::pair<int, int>, std::pair<int, int>> edge_owner;  // undirected edge -> (face, slot)
  for (Eigen::Index f = 0; f < faces_.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int a = faces_(f, k), b = faces_(f, (k + 1) % 3);
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      const auto it = edge_owner.find(key);
      if (it == edge_owner.end()) {
        edge_owner.emplace(key, std::make_pair(static_cast<int>(f), k));
      } else {
        face_neighbors_[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)] = it->second.first;
        face_neighbors_[static_cast<std::size_t>(it->second.first)][static_cast<std::size_t>(it->second.second)] =
            static_cast<int>(f);
      }
    }
  }
}

namespace {

Eigen::Vector3d face_normal(const Eigen::MatrixX3d& v, const Eigen::MatrixX3i& faces, int f) {
  const Eigen::Vector3d a = v.row(faces(f, 0));
  const Eigen::Vector3d b = v.row(faces(f, 1));
  const Eigen::Vector3d c = v.row(faces(f, 2));
  return (b - a).cross(c - a);
}

}  // namespace

std::vector<int> CapacitanceModel::folded_faces(const Eigen::MatrixX3d& deformed) const {
  std::vector<Eigen::Vector3d> normals(static_cast<std::size_t>(faces_.rows()));
  for (Eigen::Index f = 0; f < faces_.rows(); ++f)
    normals[static_cast<std::size_t>(f)] = face_normal(deformed, faces_, static_cast<int>(f));
  std::vector<int> folded;
  for (std::size_t f = 0; f < normals.size(); ++f) {
    if (normals[f].squaredNorm() == 0.0) continue;
    int neighbors = 0, opposed = 0;
    for (int g : face_neighbors_[f]) {
      if (g < 0 || normals[static_cast<std::size_t>(g)].squaredNorm() == 0.0) continue;
      ++neighbors;
      if (normals[f].dot(normals[static_cast<std::size_t>(g)]) < 0.0) ++opposed;
    }
    if (neighbors > 0 && opposed == neighbors) folded.push_back(static_cast<int>(f));
  }
  return folded;
}

double CapacitanceModel::cell_ratio(const Eigen::MatrixX3d& deformed, int cell) const {
  if (cell < 0 || cell >= num_cells()) throw std::out_of_range("cell index " + std::to_string(cell));
  const auto c = static_cast<std::size_t>(cell);
  if (!(cell_rest_area_[c] > 0.0))
    throw std::domain_error("cell " + std::to_string(cell) + " has zero rest area");
  double sum = 0.0;
  for (int f : cell_faces_[c]) {
    const double a = 0.5 * face_normal(deformed, faces_, f).norm();
    sum += a * a / rest_areas_[f];
  }
  return sum / cell_rest_area_[c];
}

Eigen::VectorXd CapacitanceModel::ratios(const Eigen::MatrixX3d& deformed) const {
  if (deformed.rows() == 0 || faces_.maxCoeff() >= deformed.rows())
    throw std::invalid_argument("deformed vertex count does not match the rest mesh");
  const auto folded = folded_faces(deformed);
  if (!folded.empty())
    throw std::domain_error("deformed mesh has " + std::to_string(folded.size()) + " folded faces (first: " +
                            std::to_string(folded.front()) + ")");
  Eigen::VectorXd out(num_cells());
  for (int c = 0; c < num_cells(); ++c) out[c] = cell_ratio(deformed, c);
  return out;
}

double cell_capacitance_nonuniform(const SensorMesh& rest, const Eigen::MatrixX3d& deformed, int cell) {
  return CapacitanceModel(rest).cell_ratio(deformed, cell);
}

void apply_ratio_noise(Eigen::Ref<Eigen::VectorXd> ratios, double sigma, std::mt19937_64& rng) {
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
  if (sigma == 0.0) return;
  std::normal_distribution<double> normal(0.0, sigma);
  for (Eigen::Index i = 0; i < ratios.size(); ++i) ratios[i] *= std::exp(normal(rng));
}

std::vector<CellReading> forward_capacitances(const SensorMesh& rest, const Eigen::MatrixX3d& deformed,
                                              const std::vector<double>& rest_capacitance,
                                              const ForwardOptions& options) {
  const CapacitanceModel model(rest);
  Eigen::VectorXd r = model.ratios(deformed);
  std::mt19937_64 rng(options.seed);
  apply_ratio_noise(r, options.noise_sigma, rng);
  if (!rest_capacitance.empty() && static_cast<int>(rest_capacitance.size()) != model.num_cells())
    throw std::invalid_argument("rest capacitance count does not match cell count");
  std::vector<CellReading> out(static_cast<std::size_t>(model.num_cells()));
  for (int c = 0; c < model.num_cells(); ++c) {
    auto& reading = out[static_cast<std::size_t>(c)];
    reading.cell = c;
    reading.ratio = r[c];
    reading.capacitance = rest_capacitance.empty() ? r[c] : r[c] * rest_capacitance[static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace stretchcap
