#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/mesh.hpp"

namespace stretchcap {

/// Parallel-plate capacitor parameters. Lengths in mm, so epsilon_0 is in F/mm.
struct CapacitorParams {
  double epsilon_r = 1.0;
  double epsilon_0 = 8.8541878128e-15;
  double d0 = 0.13;  // two layers of 65 um offset tape

  void validate() const;
};

struct CellReading {
  int cell = 0;
  double capacitance = 0.0;  // farads, when the rest capacitance is known; else equal to ratio
  double ratio = 1.0;        // C / C0
};

/// C = eps_r * eps_0 * A / d.
double plate_capacitance(const CapacitorParams& params, double area_mm2);

/// Capacitance ratio of a uniaxially stretched capacitor whose width and
/// thickness shrink by the same factor: C/C0 = l/l0.
double uniaxial_ratio(double length, double rest_length);

/// Under volume conservation C/C0 = (A/A0)^2, and the inverse A/A0 = sqrt(C/C0).
double area_ratio_to_cap_ratio(double area_ratio);
double cap_ratio_to_area_ratio(double cap_ratio);

/// Per-cell capacitance ratios from per-triangle area stretch.
///
/// Holds the rest geometry and the face/cell incidence so that evaluating
/// many deformed frames only costs one pass over the faces.
class CapacitanceModel {
 public:
  explicit CapacitanceModel(const SensorMesh& rest);

  int num_cells() const { return static_cast<int>(cell_faces_.size()); }

  /// (1/A0_j) * sum_{i in S_j} A_i^2 / A0_i for one cell. Throws if any face
  /// of the cell is folded over relative to its neighbours.
  double cell_ratio(const Eigen::MatrixX3d& deformed, int cell) const;

  /// All cell ratios. Zero-area deformed faces contribute zero; folded faces
  /// are an error.
  Eigen::VectorXd ratios(const Eigen::MatrixX3d& deformed) const;

  /// Faces whose deformed normal opposes every edge-adjacent face normal.
  std::vector<int> folded_faces(const Eigen::MatrixX3d& deformed) const;

 private:
  Eigen::MatrixX3i faces_;
  Eigen::VectorXd rest_areas_;
  std::vector<std::vector<int>> cell_faces_;
  std::vector<double> cell_rest_area_;
  std::vector<std::array<int, 3>> face_neighbors_;  // -1 on the boundary
};

/// Single-cell form of the non-uniform stretch model.
double cell_capacitance_nonuniform(const SensorMesh& rest, const Eigen::MatrixX3d& deformed, int cell);

struct ForwardOptions {
  /// Standard deviation of the multiplicative log-normal noise on ratios.
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Preset noise level: half of the average relative error observed between
/// hardware readings and the model. A plausible value, not ground truth.
inline constexpr double kHardwareNoisePreset = 0.077 / 2.0;

/// Simulated readings of every cell. `rest_capacitance` (farads, one per cell)
/// may be empty, in which case `capacitance` mirrors `ratio`.
std::vector<CellReading> forward_capacitances(const SensorMesh& rest, const Eigen::MatrixX3d& deformed,
                                              const std::vector<double>& rest_capacitance = {},
                                              const ForwardOptions& options = {});

/// Applies multiplicative log-normal noise in place.
void apply_ratio_noise(Eigen::Ref<Eigen::VectorXd> ratios, double sigma, std::mt19937_64& rng);

}  // namespace stretchcap
