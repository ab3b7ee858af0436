#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/deform.hpp"
#include "stretchcap/mesh.hpp"
#include "stretchcap/mocap.hpp"
#include "stretchcap/readout.hpp"

namespace stretchcap {

enum class ScenarioKind { CylinderBend, CylinderTwist, BalloonInflate, FlatPoke, UniaxialStretch };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& text);

/// Per-frame amplitude: bend angle (deg), total twist (deg), balloon radius
/// (mm), poke depth (mm) or stretch factor depending on the scenario kind.
struct Schedule {
  enum class Type { Aperiodic, Linear, Uniform, Constant };
  Type type = Type::Aperiodic;
  double min = 0.0;
  double max = 0.0;
  double period = 400.0;  // frames, aperiodic only

  /// Values for frames 1..n-1; frame 0 is overwritten with the rest value.
  Eigen::VectorXd sample(int frames, double rest_value, std::uint64_t seed) const;
};

struct WorldMotion {
  double rotation_deg = 0.0;  // amplitude of the smooth rotation
  double translation_mm = 0.0;
  double period = 600.0;      // frames
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::UniaxialStretch;
  int frames = 100;
  std::uint64_t seed = 0;
  Schedule schedule;
  WorldMotion world;
  // Cylinder kinds: the bend happens for z in [joint_start, joint_start + joint_length].
  double joint_start = 50.0;
  double joint_length = 70.0;
  // CylinderBend: the bend direction swings by +-azimuth_deg about the y axis
  // (flexion plus deviation), one cycle per azimuth_period frames.
  double azimuth_deg = 0.0;
  double azimuth_period = 700.0;
  // CylinderTwist: radial bulge at full twist (fraction of the radius per 90 deg).
  // BalloonInflate: directional bulge at full inflation (fraction of the radius).
  double bulge = 0.1;
  double rest_radius = 42.0;  // BalloonInflate
  double bulge_period = 500.0;  // BalloonInflate, frames per turn of the bulge direction
  Eigen::Vector2d poke_center = Eigen::Vector2d::Zero();  // FlatPoke, layout mm
  double poke_sigma = 15.0;

  double rest_value() const;
  /// Throws std::invalid_argument when an amplitude is outside the kind's range.
  void validate_amplitude(double a) const;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);

/// Canonical rest shape for a scenario, built from a flat layout mesh:
/// rolled into a cylinder, laid on a sphere patch, or kept flat.
SensorMesh shape_rest(const SensorMesh& flat, const Scenario& scenario);

/// Deformed vertex positions (local frame) for one amplitude. Throws when the
/// rest mesh does not have the scenario's rest shape. `frame` only matters for
/// time-dependent parameters (the balloon bulge direction).
Eigen::MatrixX3d deform_frame(const SensorMesh& rest, const Scenario& scenario, double amplitude, int frame);

/// Smooth pseudo-random rigid motion of the local frame.
std::vector<RigidTransform> world_transforms(const Scenario& scenario);

struct GeneratedFrames {
  std::vector<Eigen::MatrixX3d> vertices;
  Eigen::VectorXd amplitude;
  std::vector<RigidTransform> transforms;
};

/// All frames of a scenario. Frame 0 is the rest pose. Throws if any frame
/// folds a triangle over.
GeneratedFrames generate(const SensorMesh& rest, const Scenario& scenario);

struct OcclusionWindow {
  int marker = 0;
  int first = 0;
  int last = 0;  // inclusive
};

struct CorruptionSpec {
  double break_rate = 0.0;   // per marker and frame: probability that a visible run ends
  double gap_mean = 3.0;     // mean gap length in frames (at least 1)
  bool permute_labels = false;
  int outlier_tracks = 0;
  double outlier_offset = 100.0;  // mm off the surface
  int outlier_min_length = 50;
  int outlier_max_length = 300;
  std::vector<OcclusionWindow> occlusions;
  double noise_sigma = 0.0;  // mm
  std::uint64_t seed = 0;

  void validate() const;
  /// About 165 fragments for 12 markers over 2000 frames, a few outliers, 1 mm noise.
  static CorruptionSpec wrist_like(std::uint64_t seed = 0);
};

struct CorruptedTracks {
  std::vector<RawTrack> tracks;          // world coordinates
  std::map<std::string, int> truth;      // label -> marker index, -1 for outliers
};

/// Fragments the true marker trajectories. `local_markers` is frames x 3M in
/// the local frame; `outlier_anchor` is a local point near the surface. All
/// markers are visible in frame 0.
CorruptedTracks corrupt_tracks(const Eigen::MatrixXd& local_markers, const std::vector<RigidTransform>& transforms,
                               const CorruptionSpec& spec, const Eigen::Vector3d& outlier_anchor);

struct SynthOptions {
  CorruptionSpec corruption;
  double capacitance_noise = 0.0;          // log-normal sigma on cell ratios
  const MeasurementPlan* plan = nullptr;   // when set, readings go through simulate + decode
  double measurement_noise = 0.0;          // additive, per measurement row
  std::vector<std::string> cell_names;     // capacitance CSV columns (default c0, c1, ...)
};

struct SyntheticSession {
  Scenario scenario;
  CaptureSession session;            // corrupted tracks, capacitance attached
  Eigen::MatrixXd true_markers;      // frames x 3M, local frame
  std::map<std::string, int> truth;  // fragment label -> marker index (-1 outlier)
  Eigen::VectorXd amplitude;
  std::vector<int> marker_vertices;
};

/// Runs a scenario on a rest mesh with marker vertices and cells and produces
/// everything a capture session would contain, plus the hidden truth.
SyntheticSession synthesize(const SensorMesh& rest, const Scenario& scenario, const SynthOptions& options = {});

/// Writes session.csv, capacitance.csv, truth.json and manifest.json into
/// `dir`; returns the manifest text.
std::string write_synthetic(const std::filesystem::path& dir, const SyntheticSession& synthetic);

}  // namespace stretchcap
