#include "stretchcap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <limits>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "stretchcap/capmodel.hpp"
#include "stretchcap/layout.hpp"

namespace stretchcap {

namespace {

constexpr double kDeg = M_PI / 180.0;

const std::pair<ScenarioKind, const char*> kKindNames[] = {
    {ScenarioKind::CylinderBend, "cylinder_bend"},
    {ScenarioKind::CylinderTwist, "cylinder_twist"},
    {ScenarioKind::BalloonInflate, "balloon_inflate"},
    {ScenarioKind::FlatPoke, "flat_poke"},
    {ScenarioKind::UniaxialStretch, "uniaxial_stretch"},
};

const std::pair<Schedule::Type, const char*> kScheduleNames[] = {
    {Schedule::Type::Aperiodic, "aperiodic"},
    {Schedule::Type::Linear, "linear"},
    {Schedule::Type::Uniform, "uniform"},
    {Schedule::Type::Constant, "constant"},
};

bool is_cylinder_kind(ScenarioKind k) { return k == ScenarioKind::CylinderBend || k == ScenarioKind::CylinderTwist; }
bool is_flat_kind(ScenarioKind k) { return k == ScenarioKind::FlatPoke || k == ScenarioKind::UniaxialStretch; }

double cylinder_radius(const SensorMesh& rest) {
  const Eigen::ArrayXd r = rest.vertices.leftCols(2).rowwise().norm().array();
  const double mean = r.mean();
  if (!(mean > 0.0) || (r - mean).abs().maxCoeff() > 1e-6 * mean)
    throw std::invalid_argument("scenario needs a cylindrical rest mesh (axis +z)");
  return mean;
}

void require_flat(const SensorMesh& rest) {
  if (rest.vertices.col(2).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("scenario needs a flat rest mesh (z = 0)");
}

void require_sphere(const SensorMesh& rest, double radius) {
  const Eigen::ArrayXd r = rest.vertices.rowwise().norm().array();
  if ((r - radius).abs().maxCoeff() > 1e-6 * radius)
    throw std::invalid_argument("scenario needs a sphere-patch rest mesh of radius " + format_double(radius));
}

double bend_azimuth(const Scenario& s, int frame) {
  if (s.azimuth_deg == 0.0) return 0.0;
  if (!(s.azimuth_period > 0.0)) throw std::invalid_argument("azimuth period must be positive");
  std::mt19937_64 rng(s.seed ^ 0xa21a7ULL);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
  return s.azimuth_deg * kDeg * std::sin(2.0 * M_PI * frame / s.azimuth_period + phase);
}

Eigen::Vector2d bbox_center(const Eigen::MatrixX2d& uv) {
  return 0.5 * (uv.colwise().minCoeff() + uv.colwise().maxCoeff()).transpose();
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

ScenarioKind parse_scenario_kind(const std::string& text) {
  for (const auto& [k, name] : kKindNames)
    if (text == name) return k;
  throw std::invalid_argument("unknown scenario kind " + text);
}

Eigen::VectorXd Schedule::sample(int frames, double rest_value, std::uint64_t seed) const {
  if (frames < 1) throw std::invalid_argument("scenario needs at least one frame");
  if (!std::isfinite(min) || !std::isfinite(max)) throw std::invalid_argument("schedule bounds must be finite");
  Eigen::VectorXd a(frames);
  std::mt19937_64 rng(seed ^ 0x5ced0a11ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase[3] = {2 * M_PI * unit(rng), 2 * M_PI * unit(rng), 2 * M_PI * unit(rng)};
  for (int t = 0; t < frames; ++t) {
    double s = 0.0;
    switch (type) {
      case Type::Aperiodic: {
        if (!(period > 0.0)) throw std::invalid_argument("schedule period must be positive");
        const double w = 2 * M_PI * t / period;
        // Incommensurate periods so the sequence never repeats exactly.
        s = 0.5 + 0.5 * (0.55 * std::sin(w + phase[0]) + 0.3 * std::sin(w / 1.618034 + phase[1]) +
                         0.15 * std::sin(w * 2.654 + phase[2]));
        break;
      }
      case Type::Linear:
        s = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
        break;
      case Type::Uniform:
        s = unit(rng);
        break;
      case Type::Constant:
        s = 1.0;
        break;
    }
    a[t] = min + (max - min) * s;
  }
  a[0] = rest_value;
  return a;
}

double Scenario::rest_value() const {
  switch (kind) {
    case ScenarioKind::BalloonInflate: return rest_radius;
    case ScenarioKind::UniaxialStretch: return 1.0;
    default: return 0.0;
  }
}

void Scenario::validate_amplitude(double a) const {
  if (!std::isfinite(a)) throw std::invalid_argument("amplitude must be finite");
  switch (kind) {
    case ScenarioKind::UniaxialStretch:
      if (!(a > 0.0 && a <= 2.25)) throw std::invalid_argument("stretch factor must be in (0, 2.25]");
      break;
    case ScenarioKind::BalloonInflate:
      if (!(a > 0.0)) throw std::invalid_argument("balloon radius must be positive");
      break;
    case ScenarioKind::CylinderBend:
      if (std::abs(a) >= 180.0) throw std::invalid_argument("bend angle must be within (-180, 180) degrees");
      break;
    default:
      break;
  }
}

Scenario parse_scenario(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  Scenario s;
  s.kind = parse_scenario_kind(j.at("kind").get<std::string>());
  s.frames = j.value("frames", s.frames);
  s.seed = j.value("seed", s.seed);
  if (j.contains("schedule")) {
    const auto& js = j["schedule"];
    const auto type = js.value("type", std::string("aperiodic"));
    bool found = false;
    for (const auto& [t, name] : kScheduleNames)
      if (type == name) {
        s.schedule.type = t;
        found = true;
      }
    if (!found) throw std::invalid_argument("unknown schedule type " + type);
    s.schedule.min = js.value("min", 0.0);
    s.schedule.max = js.value("max", 0.0);
    s.schedule.period = js.value("period", s.schedule.period);
  }
  if (j.contains("world")) {
    s.world.rotation_deg = j["world"].value("rotation_deg", 0.0);
    s.world.translation_mm = j["world"].value("translation_mm", 0.0);
    s.world.period = j["world"].value("period", s.world.period);
  }
  s.joint_start = j.value("joint_start", s.joint_start);
  s.joint_length = j.value("joint_length", s.joint_length);
  s.azimuth_deg = j.value("azimuth_deg", s.azimuth_deg);
  s.azimuth_period = j.value("azimuth_period", s.azimuth_period);
  s.bulge = j.value("bulge", s.bulge);
  s.rest_radius = j.value("rest_radius", s.rest_radius);
  s.bulge_period = j.value("bulge_period", s.bulge_period);
  if (j.contains("poke_center")) s.poke_center = {j["poke_center"][0].get<double>(), j["poke_center"][1].get<double>()};
  s.poke_sigma = j.value("poke_sigma", s.poke_sigma);
  if (s.frames < 1) throw std::invalid_argument("scenario needs at least one frame");
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_text_file(path)); }

std::string scenario_to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["frames"] = s.frames;
  j["seed"] = s.seed;
  std::string type;
  for (const auto& [t, name] : kScheduleNames)
    if (t == s.schedule.type) type = name;
  j["schedule"] = {{"type", type}, {"min", s.schedule.min}, {"max", s.schedule.max}, {"period", s.schedule.period}};
  j["world"] = {{"rotation_deg", s.world.rotation_deg},
                {"translation_mm", s.world.translation_mm},
                {"period", s.world.period}};
  j["joint_start"] = s.joint_start;
  j["joint_length"] = s.joint_length;
  j["azimuth_deg"] = s.azimuth_deg;
  j["azimuth_period"] = s.azimuth_period;
  j["bulge"] = s.bulge;
  j["rest_radius"] = s.rest_radius;
  j["bulge_period"] = s.bulge_period;
  j["poke_center"] = {s.poke_center.x(), s.poke_center.y()};
  j["poke_sigma"] = s.poke_sigma;
  return j.dump(1);
}

SensorMesh shape_rest(const SensorMesh& flat, const Scenario& scenario) {
  require_flat(flat);
  if (is_cylinder_kind(scenario.kind)) return roll_to_cylinder(flat);
  if (is_flat_kind(scenario.kind)) return flat;
  SensorMesh out = flat;
  const double r0 = scenario.rest_radius;
  if (!(r0 > 0.0)) throw std::invalid_argument("rest radius must be positive");
  const Eigen::Vector2d c = bbox_center(flat.uv);
  for (int v = 0; v < flat.num_vertices(); ++v) {
    const Eigen::Vector2d d = flat.uv.row(v).transpose() - c;
    const double alpha = d.norm() / r0;
    if (alpha >= M_PI) throw std::invalid_argument("layout is too large to wrap on a sphere of this radius");
    const double phi = std::atan2(d.y(), d.x());
    out.vertices.row(v) << r0 * std::sin(alpha) * std::cos(phi), r0 * std::sin(alpha) * std::sin(phi),
        r0 * std::cos(alpha);
  }
  return out;
}

Eigen::MatrixX3d deform_frame(const SensorMesh& rest, const Scenario& s, double a, int frame) {
  s.validate_amplitude(a);
  const auto& p0 = rest.vertices;
  const Eigen::Index n = p0.rows();
  Eigen::MatrixX3d p(n, 3);
  switch (s.kind) {
    case ScenarioKind::CylinderBend: {
      const double radius = cylinder_radius(rest);
      if (!(s.joint_length > 0.0)) throw std::invalid_argument("joint length must be positive");
      const double kappa = a * kDeg / s.joint_length;
      if (std::abs(kappa) * radius >= 1.0)
        throw std::invalid_argument("bend too tight for the cylinder radius (inner side would fold)");
      const double z0 = s.joint_start, z1 = s.joint_start + s.joint_length;
      const double az = bend_azimuth(s, frame);
      const double ca = std::cos(az), sa = std::sin(az);
      for (Eigen::Index v = 0; v < n; ++v) {
        // Work in a frame where the bend happens in the y-z plane.
        const double x = ca * p0(v, 0) + sa * p0(v, 1), y = -sa * p0(v, 0) + ca * p0(v, 1), z = p0(v, 2);
        Eigen::Vector3d q(x, y, z);
        if (z > z0 && kappa != 0.0) {
          const double rho = 1.0 / kappa;
          const double phi = kappa * (std::min(z, z1) - z0);
          Eigen::Vector3d axis(0.0, rho * (1.0 - std::cos(phi)), z0 + rho * std::sin(phi));
          const Eigen::Vector3d normal(0.0, std::cos(phi), -std::sin(phi));
          const Eigen::Vector3d tangent(0.0, std::sin(phi), std::cos(phi));
          if (z > z1) axis += (z - z1) * tangent;
          q = axis + Eigen::Vector3d(x, 0.0, 0.0) + y * normal;
        }
        p.row(v) << ca * q.x() - sa * q.y(), sa * q.x() + ca * q.y(), q.z();
      }
      break;
    }
    case ScenarioKind::CylinderTwist: {
      cylinder_radius(rest);  // shape check
      const double zmin = p0.col(2).minCoeff(), zmax = p0.col(2).maxCoeff();
      const double len = std::max(zmax - zmin, 1e-12);
      for (Eigen::Index v = 0; v < n; ++v) {
        const double zh = (p0(v, 2) - zmin) / len;
        const double psi = a * kDeg * zh;
        const double scale = 1.0 + s.bulge * (std::abs(a) / 90.0) * std::sin(M_PI * zh);
        const double x = p0(v, 0), y = p0(v, 1);
        p.row(v) << scale * (std::cos(psi) * x - std::sin(psi) * y), scale * (std::sin(psi) * x + std::cos(psi) * y),
            p0(v, 2);
      }
      break;
    }
    case ScenarioKind::BalloonInflate: {
      const double r0 = s.rest_radius;
      require_sphere(rest, r0);
      const double b = s.bulge * (a - r0) / r0;
      const double phi0 = 2.0 * M_PI * frame / s.bulge_period;
      for (Eigen::Index v = 0; v < n; ++v) {
        const Eigen::Vector3d q = p0.row(v).transpose() / r0;
        const double alpha = std::acos(std::clamp(q.z(), -1.0, 1.0));
        const double phi = std::atan2(q.y(), q.x());
        const double r = a * (1.0 + b * std::sin(alpha) * std::cos(phi - phi0));
        p.row(v) = r * q.transpose();
      }
      break;
    }
    case ScenarioKind::FlatPoke: {
      require_flat(rest);
      if (!(s.poke_sigma > 0.0)) throw std::invalid_argument("poke sigma must be positive");
      for (Eigen::Index v = 0; v < n; ++v) {
        const double d2 = (p0.row(v).head<2>().transpose() - s.poke_center).squaredNorm();
        p.row(v) << p0(v, 0), p0(v, 1), -a * std::exp(-d2 / (2.0 * s.poke_sigma * s.poke_sigma));
      }
      break;
    }
    case ScenarioKind::UniaxialStretch: {
      require_flat(rest);
      const Eigen::Vector2d c = 0.5 * (p0.leftCols(2).colwise().minCoeff() + p0.leftCols(2).colwise().maxCoeff()).transpose();
      const double lateral = 1.0 / std::sqrt(a);
      for (Eigen::Index v = 0; v < n; ++v)
        p.row(v) << c.x() + (p0(v, 0) - c.x()) * a, c.y() + (p0(v, 1) - c.y()) * lateral, 0.0;
      break;
    }
  }
  return p;
}

std::vector<RigidTransform> world_transforms(const Scenario& s) {
  std::mt19937_64 rng(s.seed ^ 0x77017d5ULL);
  std::uniform_real_distribution<double> unit(0.0, 2.0 * M_PI);
  double phase[6];
  for (double& ph : phase) ph = unit(rng);
  const double factors[3] = {1.0, 1.31, 0.73};
  std::vector<RigidTransform> out(static_cast<std::size_t>(s.frames));
  for (int t = 0; t < s.frames; ++t) {
    const double w = 2.0 * M_PI * t / s.world.period;
    Eigen::Vector3d rot, trans;
    for (int k = 0; k < 3; ++k) {
      rot[k] = std::sin(w * factors[k] + phase[k]);
      trans[k] = std::sin(w * factors[2 - k] + phase[3 + k]);
    }
    rot *= s.world.rotation_deg * kDeg / std::sqrt(3.0);
    auto& T = out[static_cast<std::size_t>(t)];
    const double angle = rot.norm();
    T.rotation = angle > 0.0 ? Eigen::AngleAxisd(angle, rot / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
    T.translation = s.world.translation_mm * trans;
  }
  return out;
}

GeneratedFrames generate(const SensorMesh& rest, const Scenario& scenario) {
  GeneratedFrames out;
  out.amplitude = scenario.schedule.sample(scenario.frames, scenario.rest_value(), scenario.seed);
  out.transforms = world_transforms(scenario);
  const CapacitanceModel model(rest);
  for (int t = 0; t < scenario.frames; ++t) {
    auto v = deform_frame(rest, scenario, out.amplitude[t], t);
    const auto folded = model.folded_faces(v);
    if (!folded.empty())
      throw std::domain_error("frame " + std::to_string(t) + " folds " + std::to_string(folded.size()) + " faces");
    out.vertices.push_back(std::move(v));
  }
  return out;
}

void CorruptionSpec::validate() const {
  if (break_rate < 0.0 || break_rate > 1.0) throw std::invalid_argument("break rate must be in [0, 1]");
  if (!(gap_mean >= 1.0)) throw std::invalid_argument("mean gap length must be at least one frame");
  if (outlier_tracks < 0 || outlier_min_length < 1 || outlier_max_length < outlier_min_length)
    throw std::invalid_argument("invalid outlier settings");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
  for (const auto& w : occlusions)
    if (w.first < 1 || w.last < w.first) throw std::invalid_argument("occlusion windows must start after frame 0");
}

CorruptionSpec CorruptionSpec::wrist_like(std::uint64_t seed) {
  CorruptionSpec s;
  s.break_rate = 0.0064;
  s.gap_mean = 3.0;
  s.permute_labels = true;
  s.outlier_tracks = 6;
  s.noise_sigma = 1.0;
  s.seed = seed;
  return s;
}

CorruptedTracks corrupt_tracks(const Eigen::MatrixXd& local_markers, const std::vector<RigidTransform>& transforms,
                               const CorruptionSpec& spec, const Eigen::Vector3d& outlier_anchor) {
  spec.validate();
  const int frames = static_cast<int>(local_markers.rows());
  const int markers = static_cast<int>(local_markers.cols() / 3);
  if (static_cast<int>(transforms.size()) != frames) throw std::invalid_argument("transform count differs from frames");
  std::mt19937_64 rng(spec.seed ^ 0xc0ffee11ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  std::geometric_distribution<int> gap_extra(1.0 / spec.gap_mean);

  struct Fragment {
    int start, end, marker;  // end inclusive; marker -1 = outlier
    Eigen::Vector3d outlier_point;
  };
  std::vector<Fragment> fragments;
  for (int m = 0; m < markers; ++m) {
    std::vector<char> vis(static_cast<std::size_t>(frames), 1);
    int gap_left = 0;
    for (int t = 1; t < frames; ++t) {
      if (gap_left > 0) {
        vis[static_cast<std::size_t>(t)] = 0;
        --gap_left;
      } else if (spec.break_rate > 0.0 && unit(rng) < spec.break_rate) {
        vis[static_cast<std::size_t>(t)] = 0;
        gap_left = gap_extra(rng);
      }
    }
    for (const auto& w : spec.occlusions)
      if (w.marker == m)
        for (int t = w.first; t <= std::min(w.last, frames - 1); ++t) vis[static_cast<std::size_t>(t)] = 0;
    int start = -1;
    for (int t = 0; t <= frames; ++t) {
      const bool v = t < frames && vis[static_cast<std::size_t>(t)];
      if (v && start < 0) start = t;
      if (!v && start >= 0) {
        fragments.push_back({start, t - 1, m, Eigen::Vector3d::Zero()});
        start = -1;
      }
    }
  }
  for (int k = 0; k < spec.outlier_tracks && frames > 1; ++k) {
    const int len = std::min(frames - 1, spec.outlier_min_length +
                                             static_cast<int>(unit(rng) * (spec.outlier_max_length - spec.outlier_min_length + 1)));
    const int start = 1 + static_cast<int>(unit(rng) * (frames - len));
    Eigen::Vector3d best = outlier_anchor;
    double best_clearance = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      Eigen::Vector3d dir(noise(rng), noise(rng), noise(rng));
      if (dir.norm() == 0.0) continue;
      const Eigen::Vector3d cand = outlier_anchor + spec.outlier_offset * dir.normalized();
      double clearance = std::numeric_limits<double>::infinity();
      for (int t = start; t < std::min(frames, start + len); t += 5)
        for (int m = 0; m < markers; ++m)
          clearance = std::min(clearance, (local_markers.block(t, 3 * m, 1, 3).transpose() - cand).norm());
      if (clearance > best_clearance) {
        best_clearance = clearance;
        best = cand;
      }
      if (clearance >= 0.8 * spec.outlier_offset) break;
    }
    fragments.push_back({start, std::min(frames - 1, start + len - 1), -1, best});
  }
  std::stable_sort(fragments.begin(), fragments.end(), [](const Fragment& a, const Fragment& b) {
    return std::tie(a.start, a.marker) < std::tie(b.start, b.marker);
  });
  std::vector<int> ids(fragments.size());
  std::iota(ids.begin(), ids.end(), 1);
  if (spec.permute_labels) std::shuffle(ids.begin(), ids.end(), rng);

  CorruptedTracks out;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    const auto& f = fragments[i];
    RawTrack tr;
    tr.label = std::to_string(ids[i]);
    tr.visible.assign(static_cast<std::size_t>(frames), 0);
    tr.positions = Eigen::MatrixX3d::Constant(frames, 3, std::numeric_limits<double>::quiet_NaN());
    for (int t = f.start; t <= f.end; ++t) {
      const Eigen::Vector3d local =
          f.marker >= 0 ? Eigen::Vector3d(local_markers.block(t, 3 * f.marker, 1, 3).transpose()) : f.outlier_point;
      Eigen::Vector3d world = transforms[static_cast<std::size_t>(t)].apply(local);
      if (spec.noise_sigma > 0.0) world += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
      tr.visible[static_cast<std::size_t>(t)] = 1;
      tr.positions.row(t) = world.transpose();
    }
    out.truth[tr.label] = f.marker;
    out.tracks.push_back(std::move(tr));
  }
  return out;
}

SyntheticSession synthesize(const SensorMesh& rest, const Scenario& scenario, const SynthOptions& options) {
  if (rest.marker_vertices.empty()) throw std::invalid_argument("rest mesh has no marker vertices");
  SyntheticSession out;
  out.scenario = scenario;
  out.marker_vertices = rest.marker_vertices;
  out.amplitude = scenario.schedule.sample(scenario.frames, scenario.rest_value(), scenario.seed);
  const auto transforms = world_transforms(scenario);
  const CapacitanceModel model(rest);
  const int frames = scenario.frames;
  const auto markers = static_cast<Eigen::Index>(rest.marker_vertices.size());
  out.true_markers.resize(frames, 3 * markers);

  FrameTable cap;
  for (int c = 0; c < model.num_cells(); ++c)
    cap.columns.push_back(c < static_cast<int>(options.cell_names.size()) ? options.cell_names[static_cast<std::size_t>(c)]
                                                                         : "c" + std::to_string(c));
  cap.values.resize(frames, model.num_cells());
  std::mt19937_64 cap_rng(scenario.seed ^ 0xcab1e5ULL);
  for (int t = 0; t < frames; ++t) {
    const auto v = deform_frame(rest, scenario, out.amplitude[t], t);
    for (Eigen::Index m = 0; m < markers; ++m)
      out.true_markers.block(t, 3 * m, 1, 3) = v.row(rest.marker_vertices[static_cast<std::size_t>(m)]);
    Eigen::VectorXd r = model.ratios(v);
    apply_ratio_noise(r, options.capacitance_noise, cap_rng);
    if (options.plan) {
      const auto cm = simulate_measurements(*options.plan, r, options.measurement_noise, &cap_rng);
      r = decode(*options.plan, cm).cells;
    }
    cap.values.row(t) = r.transpose();
    cap.frames.push_back(t);
  }

  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
  for (int v : rest.marker_vertices) anchor += rest.vertices.row(v).transpose();
  anchor /= static_cast<double>(markers);
  auto corrupted = corrupt_tracks(out.true_markers, transforms, options.corruption, anchor);
  out.truth = std::move(corrupted.truth);

  auto& session = out.session;
  session.frames = frames;
  for (int t = 0; t < frames; ++t) session.time_s.push_back(t / 100.0);
  session.transforms = transforms;
  session.tracks = std::move(corrupted.tracks);
  attach_capacitance(session, std::move(cap));
  return out;
}

std::string write_synthetic(const std::filesystem::path& dir, const SyntheticSession& syn) {
  std::filesystem::create_directories(dir);
  const std::string session_csv = format_session_csv(syn.session);
  const std::string cap_csv = format_frame_table(*syn.session.capacitance);
  FrameTable markers;
  for (Eigen::Index m = 0; m < syn.true_markers.cols() / 3; ++m)
    for (const char* axis : {"x", "y", "z"}) markers.columns.push_back("m" + std::to_string(m) + "_" + axis);
  markers.values = syn.true_markers;
  for (int t = 0; t < syn.session.frames; ++t) markers.frames.push_back(t);
  const std::string markers_csv = format_frame_table(markers);

  nlohmann::ordered_json truth;
  nlohmann::ordered_json labels = nlohmann::ordered_json::object();
  for (const auto& [label, marker] : syn.truth) labels[label] = marker;
  truth["fragments"] = std::move(labels);
  truth["marker_vertices"] = syn.marker_vertices;
  truth["amplitude"] = std::vector<double>(syn.amplitude.data(), syn.amplitude.data() + syn.amplitude.size());
  const std::string truth_json = truth.dump(1);

  write_text_file_atomic(dir / "session.csv", session_csv);
  write_text_file_atomic(dir / "capacitance.csv", cap_csv);
  write_text_file_atomic(dir / "markers_true.csv", markers_csv);
  write_text_file_atomic(dir / "truth.json", truth_json);

  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["frames"] = syn.session.frames;
  manifest["markers"] = syn.marker_vertices.size();
  manifest["tracks"] = syn.session.tracks.size();
  manifest["scenario"] = nlohmann::ordered_json::parse(scenario_to_json(syn.scenario));
  manifest["files"] = {{"session.csv", hex64(fnv1a64(session_csv))},
                       {"capacitance.csv", hex64(fnv1a64(cap_csv))},
                       {"markers_true.csv", hex64(fnv1a64(markers_csv))},
                       {"truth.json", hex64(fnv1a64(truth_json))}};
  const std::string text = manifest.dump(1);
  write_text_file_atomic(dir / "manifest.json", text);
  return text;
}

}  // namespace stretchcap
