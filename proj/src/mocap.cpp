#include "stretchcap/mocap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stretchcap {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kTransformColumns[12] = {"T00", "T01", "T02", "T03", "T10", "T11",
                                           "T12", "T13", "T20", "T21", "T22", "T23"};

std::vector<std::string> session_header() {
  std::vector<std::string> h{"frame", "time_s"};
  for (const char* c : kTransformColumns) h.emplace_back(c);
  for (const char* c : {"label", "x_mm", "y_mm", "z_mm"}) h.emplace_back(c);
  return h;
}

RawTrack empty_track(const std::string& label, int frames) {
  RawTrack t;
  t.label = label;
  t.visible.assign(static_cast<std::size_t>(frames), 0);
  t.positions = Eigen::MatrixX3d::Constant(frames, 3, kNaN);
  return t;
}

}  // namespace

int RawTrack::first_frame() const {
  for (std::size_t t = 0; t < visible.size(); ++t)
    if (visible[t]) return static_cast<int>(t);
  return -1;
}

int RawTrack::visible_count() const { return static_cast<int>(std::count(visible.begin(), visible.end(), 1)); }

int CaptureSession::track_index(const std::string& label) const {
  for (std::size_t i = 0; i < tracks.size(); ++i)
    if (tracks[i].label == label) return static_cast<int>(i);
  return -1;
}

Eigen::MatrixX3d CaptureSession::local_positions(int track) const {
  const auto& tr = tracks.at(static_cast<std::size_t>(track));
  Eigen::MatrixX3d out = Eigen::MatrixX3d::Constant(frames, 3, kNaN);
  for (int t = 0; t < frames; ++t) {
    if (!tr.visible[static_cast<std::size_t>(t)]) continue;
    const auto& T = transforms[static_cast<std::size_t>(t)];
    out.row(t) = (T.rotation.transpose() * (tr.positions.row(t).transpose() - T.translation)).transpose();
  }
  return out;
}

CaptureSession parse_session_csv(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto header = session_header();
  bool have_header = false;

  std::map<int, std::pair<double, RigidTransform>> frame_info;
  std::map<std::string, int> label_index;
  std::vector<std::string> labels;
  std::vector<std::vector<std::pair<int, Eigen::Vector3d>>> samples;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields != header)
        throw FormatError(source_name, lineno, "header must be frame,time_s,T00..T23,label,x_mm,y_mm,z_mm");
      have_header = true;
      continue;
    }
    if (fields.size() != header.size())
      throw FormatError(source_name, lineno,
                        "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    int frame = 0;
    double time = 0.0;
    RigidTransform T;
    Eigen::Vector3d p;
    try {
      std::size_t used = 0;
      frame = std::stoi(fields[0], &used);
      if (used != fields[0].size() || frame < 0) throw std::invalid_argument("bad frame index");
      time = parse_double(fields[1]);
      Eigen::Matrix<double, 3, 4> m;
      for (int k = 0; k < 12; ++k) m(k / 4, k % 4) = parse_double(fields[static_cast<std::size_t>(2 + k)]);
      if (!m.allFinite()) throw std::invalid_argument("transform has missing values");
      // Re-orthonormalize to absorb export rounding, but reject real shear/scale.
      Eigen::JacobiSVD<Eigen::Matrix3d> svd(m.leftCols<3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
      if ((svd.singularValues().array() - 1.0).abs().maxCoeff() > 1e-4)
        throw std::invalid_argument("transform rotation block is not orthonormal");
      T.rotation = svd.matrixU() * svd.matrixV().transpose();
      if (T.rotation.determinant() < 0.0) throw std::invalid_argument("transform is a reflection");
      T.translation = m.col(3);
      for (int k = 0; k < 3; ++k) p[k] = parse_double(fields[static_cast<std::size_t>(15 + k)]);
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(source_name, lineno, e.what());
    }
    auto [it, inserted] = frame_info.emplace(frame, std::make_pair(time, T));
    if (!inserted) {
      if ((it->second.second.rotation - T.rotation).cwiseAbs().maxCoeff() > 1e-9 ||
          (it->second.second.translation - T.translation).cwiseAbs().maxCoeff() > 1e-9)
        throw FormatError(source_name, lineno, "transform differs from earlier rows of frame " + std::to_string(frame));
    }
    const auto& label = fields[14];
    if (label.empty()) continue;
    auto li = label_index.find(label);
    if (li == label_index.end()) {
      li = label_index.emplace(label, static_cast<int>(labels.size())).first;
      labels.push_back(label);
      samples.emplace_back();
    }
    if (!p.allFinite()) continue;  // invisible
    for (const auto& s : samples[static_cast<std::size_t>(li->second)])
      if (s.first == frame)
        throw FormatError(source_name, lineno, "label " + label + " appears twice in frame " + std::to_string(frame));
    samples[static_cast<std::size_t>(li->second)].emplace_back(frame, p);
  }
  if (!have_header) throw FormatError(source_name, lineno, "empty file");
  if (frame_info.empty()) throw FormatError(source_name, lineno, "no frames");

  CaptureSession session;
  session.frames = frame_info.rbegin()->first + 1;
  for (int t = 0; t < session.frames; ++t) {
    const auto it = frame_info.find(t);
    if (it == frame_info.end()) throw FormatError(source_name, lineno, "frame " + std::to_string(t) + " is missing");
    session.time_s.push_back(it->second.first);
    session.transforms.push_back(it->second.second);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto track = empty_track(labels[i], session.frames);
    for (const auto& [f, p] : samples[i]) {
      track.visible[static_cast<std::size_t>(f)] = 1;
      track.positions.row(f) = p.transpose();
    }
    session.tracks.push_back(std::move(track));
  }
  return session;
}

CaptureSession read_session_csv(const std::filesystem::path& path) {
  return parse_session_csv(read_text_file(path), path.string());
}

std::string format_session_csv(const CaptureSession& session) {
  std::string out;
  const auto header = session_header();
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (int t = 0; t < session.frames; ++t) {
    std::string prefix = std::to_string(t) + "," + format_double(session.time_s[static_cast<std::size_t>(t)]);
    const auto& T = session.transforms[static_cast<std::size_t>(t)];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) prefix += "," + format_double(T.rotation(r, c));
      prefix += "," + format_double(T.translation[r]);
    }
    bool any = false;
    for (const auto& tr : session.tracks) {
      if (!tr.visible[static_cast<std::size_t>(t)]) continue;
      any = true;
      out += prefix + "," + tr.label;
      for (int k = 0; k < 3; ++k) out += "," + format_double(tr.positions(t, k));
      out += '\n';
    }
    if (!any) out += prefix + ",,nan,nan,nan\n";
  }
  return out;
}

void attach_capacitance(CaptureSession& session, FrameTable trace) {
  if (static_cast<int>(trace.values.rows()) != session.frames)
    throw std::invalid_argument("capacitance trace has " + std::to_string(trace.values.rows()) +
                                " frames, session has " + std::to_string(session.frames));
  for (std::size_t i = 0; i < trace.frames.size(); ++i)
    if (trace.frames[i] != static_cast<long>(i))
      throw std::invalid_argument("capacitance trace frames must be 0..N-1 in order");
  session.capacitance = std::move(trace);
}

InitialAssignment initialize_assignment(const CaptureSession& session, const SensorMesh& mesh,
                                        const std::vector<std::pair<std::string, int>>& seed_pairs,
                                        double ambiguity_margin) {
  if (session.frames == 0) throw std::invalid_argument("session has no frames");
  if (seed_pairs.size() != 3) throw std::invalid_argument("exactly three seed pairs are required");
  const std::set<int> markers(mesh.marker_vertices.begin(), mesh.marker_vertices.end());
  InitialAssignment out;
  Eigen::MatrixX3d src(3, 3), dst(3, 3);
  std::set<int> used_tracks;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& [label, vertex] = seed_pairs[k];
    const int j = session.track_index(label);
    if (j < 0) throw std::invalid_argument("seed track " + label + " not found");
    if (!markers.count(vertex)) throw std::invalid_argument("seed vertex " + std::to_string(vertex) + " is not a marker");
    if (!session.tracks[static_cast<std::size_t>(j)].visible[0])
      throw std::invalid_argument("seed track " + label + " is not visible in frame 0");
    if (!used_tracks.insert(j).second || out.pairs.count(vertex))
      throw std::invalid_argument("seed pairs must use distinct tracks and vertices");
    src.row(static_cast<Eigen::Index>(k)) = mesh.vertices.row(vertex);
    dst.row(static_cast<Eigen::Index>(k)) = session.local_positions(j).row(0);
    out.pairs[vertex] = label;
  }
  out.alignment = procrustes(src, dst);
  out.aligned_rest = apply_transform(mesh.vertices, out.alignment);

  struct Candidate {
    double d;
    int vertex;
    int track;
  };
  std::vector<Candidate> cand;
  std::vector<int> free_tracks;
  for (std::size_t j = 0; j < session.tracks.size(); ++j)
    if (session.tracks[j].visible[0] && !used_tracks.count(static_cast<int>(j))) free_tracks.push_back(static_cast<int>(j));
  std::vector<Eigen::RowVector3d> frame0(session.tracks.size());
  for (int j : free_tracks) frame0[static_cast<std::size_t>(j)] = session.local_positions(j).row(0);
  std::vector<int> free_vertices;
  for (int v : mesh.marker_vertices)
    if (!out.pairs.count(v)) free_vertices.push_back(v);
  for (int v : free_vertices)
    for (int j : free_tracks)
      cand.push_back({(out.aligned_rest.row(v) - frame0[static_cast<std::size_t>(j)]).norm(), v, j});
  std::stable_sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) { return a.d < b.d; });
  std::set<int> taken_v, taken_t;
  for (const auto& c : cand) {
    if (taken_v.count(c.vertex) || taken_t.count(c.track)) continue;
    taken_v.insert(c.vertex);
    taken_t.insert(c.track);
    const auto& label = session.tracks[static_cast<std::size_t>(c.track)].label;
    out.pairs[c.vertex] = label;
    // Runner-up: the next closest track for this vertex, or vertex for this track.
    double runner = std::numeric_limits<double>::infinity();
    std::string alt;
    for (const auto& o : cand) {
      if (o.vertex == c.vertex && o.track != c.track && o.d < runner) {
        runner = o.d;
        alt = session.tracks[static_cast<std::size_t>(o.track)].label;
      }
      if (o.track == c.track && o.vertex != c.vertex && o.d < runner) {
        runner = o.d;
        alt = "vertex " + std::to_string(o.vertex);
      }
    }
    if (runner - c.d < ambiguity_margin) out.ambiguous.push_back({c.vertex, label, alt, runner - c.d});
  }
  if (taken_v.size() < free_vertices.size())
    out.warnings.push_back(std::to_string(free_vertices.size() - taken_v.size()) +
                           " marker vertices have no visible track in frame 0");
  return out;
}

std::vector<TrackEdit> parse_edits(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  if (!j.is_array()) throw std::invalid_argument("edits file must be a JSON list");
  std::vector<TrackEdit> out;
  for (const auto& e : j) {
    TrackEdit edit;
    edit.track = e.at("track").is_string() ? e.at("track").get<std::string>() : e.at("track").dump();
    const auto action = e.at("action").get<std::string>();
    if (action == "force_vertex") {
      edit.action = EditAction::ForceVertex;
      edit.vertex = e.at("vertex").get<int>();
    } else if (action == "force_outlier") {
      edit.action = EditAction::ForceOutlier;
    } else if (action == "split") {
      edit.action = EditAction::Split;
      edit.frame = e.at("frame").get<int>();
    } else {
      throw std::invalid_argument("unknown edit action " + action);
    }
    out.push_back(edit);
  }
  return out;
}

std::vector<TrackEdit> load_edits(const std::filesystem::path& path) {
  try {
    return parse_edits(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, e.what());
  }
}

CaptureSession apply_splits(const CaptureSession& session, const std::vector<TrackEdit>& edits) {
  CaptureSession out = session;
  for (const auto& e : edits) {
    if (e.action != EditAction::Split) continue;
    const int j = out.track_index(e.track);
    if (j < 0) throw std::invalid_argument("split: unknown track " + e.track);
    if (e.frame <= 0 || e.frame >= out.frames) throw std::invalid_argument("split frame out of range");
    auto& head = out.tracks[static_cast<std::size_t>(j)];
    auto tail = empty_track(e.track + "@" + std::to_string(e.frame), out.frames);
    for (int t = e.frame; t < out.frames; ++t) {
      if (!head.visible[static_cast<std::size_t>(t)]) continue;
      tail.visible[static_cast<std::size_t>(t)] = 1;
      tail.positions.row(t) = head.positions.row(t);
      head.visible[static_cast<std::size_t>(t)] = 0;
      head.positions.row(t).setConstant(kNaN);
    }
    out.tracks.insert(out.tracks.begin() + j + 1, std::move(tail));
  }
  return out;
}

int LabeledSession::marker_of(const std::string& label) const {
  for (const auto& [vertex, labels] : assignment)
    if (std::find(labels.begin(), labels.end(), label) != labels.end()) {
      const auto it = std::find(marker_vertices.begin(), marker_vertices.end(), vertex);
      return static_cast<int>(it - marker_vertices.begin());
    }
  return -1;
}

void LabeledSession::update_discarded() {
  discarded_frames.clear();
  for (int t = 0; t < frames; ++t)
    if (!positions.row(t).allFinite()) discarded_frames.push_back(t);
}

namespace {

// Per-frame proxy meshes, remembered by the constraint vertex set.
class ProxyCache {
 public:
  ProxyCache(const Eigen::MatrixX3d& rest, const Eigen::MatrixX3i& faces, const LabelOptions& options)
      : solver_(rest, faces, {options.proxy_iterations, 1e-5, 8}), weight_(options.constraint_weight) {}

  const Eigen::MatrixX3d& get(int frame, const std::vector<std::pair<int, Eigen::Vector3d>>& targets) {
    std::vector<int> key;
    for (const auto& [v, p] : targets) key.push_back(v);
    auto& slot = by_frame_[frame];
    if (slot.first == key && slot.second.rows() > 0) return slot.second;
    PositionalConstraints c;
    for (const auto& [v, p] : targets) c.push_back({v, p, weight_});
    const Eigen::MatrixX3d* warm = slot.second.rows() > 0 ? &slot.second : nullptr;
    auto result = solver_.solve(c, warm);
    slot.first = std::move(key);
    slot.second = std::move(result.vertices);
    return slot.second;
  }

 private:
  ArapSolver solver_;
  double weight_;
  std::map<int, std::pair<std::vector<int>, Eigen::MatrixX3d>> by_frame_;
};

std::vector<int> subsample(const std::vector<int>& frames, int max_count) {
  if (static_cast<int>(frames.size()) <= max_count) return frames;
  std::vector<int> out;
  const double step = static_cast<double>(frames.size() - 1) / (max_count - 1);
  for (int k = 0; k < max_count; ++k)
    out.push_back(frames[static_cast<std::size_t>(std::llround(k * step))]);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

LabeledSession label_tracks(const CaptureSession& input, const SensorMesh& mesh, const InitialAssignment& initial,
                            const LabelOptions& options, const std::vector<TrackEdit>& edits) {
  if (mesh.marker_vertices.empty()) throw std::invalid_argument("mesh has no marker vertices");
  if (!(options.tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const CaptureSession session = apply_splits(input, edits);
  const auto& markers = mesh.marker_vertices;
  std::map<int, int> marker_index;
  for (std::size_t m = 0; m < markers.size(); ++m) marker_index[markers[m]] = static_cast<int>(m);
  const int n_tracks = static_cast<int>(session.tracks.size());

  std::vector<Eigen::MatrixX3d> local(static_cast<std::size_t>(n_tracks));
  for (int j = 0; j < n_tracks; ++j) local[static_cast<std::size_t>(j)] = session.local_positions(j);

  std::vector<int> track_marker(static_cast<std::size_t>(n_tracks), -1);
  std::vector<char> outlier(static_cast<std::size_t>(n_tracks), 0);
  for (const auto& [vertex, label] : initial.pairs) {
    const int j = session.track_index(label);
    if (j < 0) throw std::invalid_argument("initial assignment references unknown track " + label);
    if (!marker_index.count(vertex)) throw std::invalid_argument("initial assignment uses non-marker vertex");
    track_marker[static_cast<std::size_t>(j)] = marker_index[vertex];
  }
  for (const auto& e : edits) {
    if (e.action == EditAction::Split) continue;
    const int j = session.track_index(e.track);
    if (j < 0) throw std::invalid_argument("edit references unknown track " + e.track);
    if (e.action == EditAction::ForceOutlier) {
      track_marker[static_cast<std::size_t>(j)] = -1;
      outlier[static_cast<std::size_t>(j)] = 1;
    } else {
      const auto it = marker_index.find(e.vertex);
      if (it == marker_index.end()) throw std::invalid_argument("force_vertex target is not a marker vertex");
      track_marker[static_cast<std::size_t>(j)] = it->second;
      outlier[static_cast<std::size_t>(j)] = 0;
    }
  }

  std::vector<int> order;
  for (int j = 0; j < n_tracks; ++j)
    if (track_marker[static_cast<std::size_t>(j)] < 0 && !outlier[static_cast<std::size_t>(j)]) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return session.tracks[static_cast<std::size_t>(a)].first_frame() <
           session.tracks[static_cast<std::size_t>(b)].first_frame();
  });

  ProxyCache proxies(initial.aligned_rest, mesh.faces, options);
  LabeledSession out;
  int assigned_count = static_cast<int>(std::count_if(track_marker.begin(), track_marker.end(), [](int m) { return m >= 0; }));

  for (int js : order) {
    const auto& track = session.tracks[static_cast<std::size_t>(js)];
    out.constraint_counts.push_back(assigned_count);
    std::vector<int> frames;
    for (int t = 0; t < session.frames; ++t)
      if (track.visible[static_cast<std::size_t>(t)]) frames.push_back(t);
    if (frames.empty()) {
      outlier[static_cast<std::size_t>(js)] = 1;
      continue;
    }
    // A marker already seen at the same time as this track cannot be it.
    std::vector<char> excluded(markers.size(), 0);
    for (int j = 0; j < n_tracks; ++j) {
      const int m = track_marker[static_cast<std::size_t>(j)];
      if (m < 0 || excluded[static_cast<std::size_t>(m)]) continue;
      for (int t : frames)
        if (session.tracks[static_cast<std::size_t>(j)].visible[static_cast<std::size_t>(t)]) {
          excluded[static_cast<std::size_t>(m)] = 1;
          break;
        }
    }
    std::vector<double> sum(markers.size(), 0.0);
    int used = 0;
    for (int t : subsample(frames, options.max_match_frames)) {
      std::vector<std::pair<int, Eigen::Vector3d>> targets;
      std::set<int> have;
      for (int j = 0; j < n_tracks; ++j) {
        const int m = track_marker[static_cast<std::size_t>(j)];
        if (m < 0 || !session.tracks[static_cast<std::size_t>(j)].visible[static_cast<std::size_t>(t)]) continue;
        if (!have.insert(m).second) continue;
        targets.emplace_back(markers[static_cast<std::size_t>(m)], local[static_cast<std::size_t>(j)].row(t).transpose());
      }
      if (static_cast<int>(targets.size()) < options.min_constraints) continue;
      std::sort(targets.begin(), targets.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      const auto& proxy = proxies.get(t, targets);
      const Eigen::RowVector3d p = local[static_cast<std::size_t>(js)].row(t);
      for (std::size_t m = 0; m < markers.size(); ++m)
        if (!excluded[m]) sum[m] += (proxy.row(markers[m]) - p).norm();
      ++used;
    }
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    if (used > 0) {
      for (std::size_t m = 0; m < markers.size(); ++m) {
        if (excluded[m]) continue;
        const double d = sum[m] / used;
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(m);
        }
      }
    }
    if (best >= 0 && best_d < options.tau) {
      track_marker[static_cast<std::size_t>(js)] = best;
      ++assigned_count;
    } else {
      outlier[static_cast<std::size_t>(js)] = 1;
    }
  }

  out.marker_vertices = markers;
  out.frames = session.frames;
  out.aligned_rest = initial.aligned_rest;
  out.ambiguous = initial.ambiguous;
  const auto n_markers = static_cast<Eigen::Index>(markers.size());
  out.positions = Eigen::MatrixXd::Constant(session.frames, 3 * n_markers, kNaN);
  out.synthetic = Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(session.frames, n_markers);
  Eigen::MatrixXi hits = Eigen::MatrixXi::Zero(session.frames, n_markers);
  Eigen::MatrixXd accum = Eigen::MatrixXd::Zero(session.frames, 3 * n_markers);
  for (int j = 0; j < n_tracks; ++j) {
    const auto& track = session.tracks[static_cast<std::size_t>(j)];
    if (outlier[static_cast<std::size_t>(j)]) {
      out.outlier_tracks.push_back(track.label);
      continue;
    }
    const int m = track_marker[static_cast<std::size_t>(j)];
    if (m < 0) continue;
    out.assignment[markers[static_cast<std::size_t>(m)]].push_back(track.label);
    for (int t = 0; t < session.frames; ++t) {
      if (!track.visible[static_cast<std::size_t>(t)]) continue;
      accum.block(t, 3 * m, 1, 3) += local[static_cast<std::size_t>(j)].row(t);
      ++hits(t, m);
    }
  }
  for (int t = 0; t < session.frames; ++t)
    for (Eigen::Index m = 0; m < n_markers; ++m)
      if (hits(t, m) > 0) out.positions.block(t, 3 * m, 1, 3) = accum.block(t, 3 * m, 1, 3) / hits(t, m);
  out.update_discarded();
  return out;
}

LabeledSession synthesize_missing(const LabeledSession& labeled, const SensorMesh& mesh, const LabelOptions& options) {
  LabeledSession out = labeled;
  ArapSolver solver(labeled.aligned_rest, mesh.faces, {std::max(options.proxy_iterations, 50), 1e-6, 8});
  const auto n_markers = static_cast<Eigen::Index>(labeled.marker_vertices.size());
  const Eigen::MatrixX3d* warm = nullptr;
  Eigen::MatrixX3d last;
  for (int t : labeled.discarded_frames) {
    PositionalConstraints c;
    for (Eigen::Index m = 0; m < n_markers; ++m) {
      const Eigen::Vector3d p = labeled.positions.block(t, 3 * m, 1, 3).transpose();
      if (p.allFinite()) c.push_back({labeled.marker_vertices[static_cast<std::size_t>(m)], p, options.constraint_weight});
    }
    if (static_cast<int>(c.size()) < 3) continue;
    auto result = solver.solve(c, warm);
    for (Eigen::Index m = 0; m < n_markers; ++m) {
      if (labeled.positions.block(t, 3 * m, 1, 3).allFinite()) continue;
      out.positions.block(t, 3 * m, 1, 3) = result.vertices.row(labeled.marker_vertices[static_cast<std::size_t>(m)]);
      out.synthetic(t, m) = 1;
    }
    last = std::move(result.vertices);
    warm = &last;
  }
  out.update_discarded();
  return out;
}

SessionStats session_stats(const LabeledSession& labeled, const CaptureSession& session) {
  SessionStats s;
  s.frames = labeled.frames;
  s.discard_fraction = labeled.frames ? static_cast<double>(labeled.discarded_frames.size()) / labeled.frames : 0.0;
  s.outlier_count = static_cast<int>(labeled.outlier_tracks.size());
  const auto n_markers = static_cast<Eigen::Index>(labeled.marker_vertices.size());
  for (Eigen::Index m = 0; m < n_markers; ++m) {
    int real = 0;
    for (int t = 0; t < labeled.frames; ++t) {
      if (!labeled.positions.block(t, 3 * m, 1, 3).allFinite()) continue;
      if (labeled.synthetic(t, m)) ++s.synthetic_count;
      else ++real;
    }
    s.marker_visibility.push_back(labeled.frames ? static_cast<double>(real) / labeled.frames : 0.0);
  }
  for (const auto& tr : session.tracks) {
    TrackSpan span{tr.label, {}};
    int start = -1;
    for (int t = 0; t <= session.frames; ++t) {
      const bool vis = t < session.frames && tr.visible[static_cast<std::size_t>(t)];
      if (vis && start < 0) start = t;
      if (!vis && start >= 0) {
        span.spans.emplace_back(start, t - 1);
        start = -1;
      }
    }
    s.spans.push_back(std::move(span));
  }
  return s;
}

std::string format_stats(const SessionStats& stats) {
  std::ostringstream os;
  os << "frames: " << stats.frames << "\n";
  os << "discarded fraction: " << stats.discard_fraction << "\n";
  os << "outlier tracks: " << stats.outlier_count << "\n";
  os << "synthesized positions: " << stats.synthetic_count << "\n";
  os << "marker visibility:";
  for (double v : stats.marker_visibility) os << ' ' << v;
  os << "\n";
  os << "tracks: " << stats.spans.size() << "\n";
  for (const auto& s : stats.spans) {
    os << s.label << ':';
    for (const auto& [a, b] : s.spans) os << ' ' << a << '-' << b;
    os << "\n";
  }
  return os.str();
}

std::string format_labeled_csv(const LabeledSession& labeled) {
  std::string out = "frame,marker_index,x,y,z,synthetic_flag\n";
  const auto n_markers = static_cast<Eigen::Index>(labeled.marker_vertices.size());
  for (int t = 0; t < labeled.frames; ++t) {
    for (Eigen::Index m = 0; m < n_markers; ++m) {
      const auto p = labeled.positions.block(t, 3 * m, 1, 3);
      if (!p.allFinite()) continue;
      out += std::to_string(t) + "," + std::to_string(m);
      for (int k = 0; k < 3; ++k) out += "," + format_double(p(0, k));
      out += labeled.synthetic(t, m) ? ",1\n" : ",0\n";
    }
  }
  return out;
}

}  // namespace stretchcap
