#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/deform.hpp"
#include "stretchcap/io.hpp"
#include "stretchcap/mesh.hpp"

namespace stretchcap {

/// One fragment of a marker trajectory as exported by the tracking system.
/// `positions` has one row per session frame (world coordinates, mm) and is
/// NaN exactly where `visible` is false.
struct RawTrack {
  std::string label;
  std::vector<char> visible;
  Eigen::MatrixX3d positions;

  int first_frame() const;
  int visible_count() const;
};

struct CaptureSession {
  int frames = 0;
  std::vector<double> time_s;
  std::vector<RigidTransform> transforms;  // local -> world, one per frame
  std::vector<RawTrack> tracks;
  std::optional<FrameTable> capacitance;   // frame,<cell>...

  int track_index(const std::string& label) const;
  /// Track positions mapped into the per-frame local frame (NaN where invisible).
  Eigen::MatrixX3d local_positions(int track) const;
};

/// Long-form CSV: frame,time_s,T00..T23,label,x_mm,y_mm,z_mm. A row with an
/// empty label only carries the frame's transform.
CaptureSession read_session_csv(const std::filesystem::path& path);
CaptureSession parse_session_csv(const std::string& text, const std::string& source_name = "<memory>");
std::string format_session_csv(const CaptureSession& session);

/// Binds a capacitance trace; frame counts must agree.
void attach_capacitance(CaptureSession& session, FrameTable trace);

struct AmbiguousPairing {
  int vertex = 0;
  std::string chosen;
  std::string alternative;
  double margin = 0.0;  // distance gap in mm
};

struct InitialAssignment {
  RigidTransform alignment;        // rest mesh -> frame-0 local frame
  Eigen::MatrixX3d aligned_rest;   // rest vertices after `alignment`
  std::map<int, std::string> pairs;  // marker vertex -> track label
  std::vector<AmbiguousPairing> ambiguous;
  std::vector<std::string> warnings;
};

/// Rigidly aligns the rest mesh on three manually matched (track label,
/// vertex) pairs in frame 0 and pairs every other marker vertex with the
/// nearest frame-0 track, globally by increasing distance. Pairs whose
/// runner-up is within `ambiguity_margin` mm are reported.
InitialAssignment initialize_assignment(const CaptureSession& session, const SensorMesh& mesh,
                                        const std::vector<std::pair<std::string, int>>& seed_pairs,
                                        double ambiguity_margin = 2.0);

enum class EditAction { ForceVertex, ForceOutlier, Split };

struct TrackEdit {
  std::string track;
  EditAction action = EditAction::ForceVertex;
  int vertex = -1;  // ForceVertex
  int frame = -1;   // Split: first frame of the new fragment
};

std::vector<TrackEdit> parse_edits(const std::string& json_text);
std::vector<TrackEdit> load_edits(const std::filesystem::path& path);

/// Applies Split edits, renaming the tail fragment `<label>@<frame>`.
CaptureSession apply_splits(const CaptureSession& session, const std::vector<TrackEdit>& edits);

struct LabelOptions {
  double tau = 25.0;               // mm
  int max_match_frames = 30;       // proxy frames per candidate track
  int min_constraints = 3;         // frames with fewer assigned markers are skipped
  double constraint_weight = 1e4;
  int proxy_iterations = 20;
};

struct LabeledSession {
  std::vector<int> marker_vertices;
  int frames = 0;
  /// frames x (3 * markers), local frame, NaN where missing.
  Eigen::MatrixXd positions;
  /// frames x markers; 1 where a position was synthesized from the proxy.
  Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic> synthetic;
  std::map<int, std::vector<std::string>> assignment;  // marker vertex -> track labels
  std::vector<int> discarded_frames;
  std::vector<std::string> outlier_tracks;
  std::vector<AmbiguousPairing> ambiguous;
  /// Constraint count available when each track was matched, in processing order.
  std::vector<int> constraint_counts;
  Eigen::MatrixX3d aligned_rest;

  /// Marker index (position in marker_vertices) of a track label, or -1.
  int marker_of(const std::string& label) const;
  /// Recomputes discarded_frames from positions.
  void update_discarded();
};

/// Assigns every remaining track to a marker vertex or marks it an outlier.
/// Tracks are processed in order of first visible frame (ties: session
/// order). A track is matched against per-frame proxy meshes deformed to the
/// markers assigned so far, using at most `max_match_frames` evenly spaced
/// visible frames; the marker vertex with the smallest mean distance wins if
/// that distance is below tau. Edits are replayed first.
LabeledSession label_tracks(const CaptureSession& session, const SensorMesh& mesh, const InitialAssignment& initial,
                            const LabelOptions& options = {}, const std::vector<TrackEdit>& edits = {});

/// Fills missing marker positions from per-frame proxy meshes in frames with
/// at least three known markers.
LabeledSession synthesize_missing(const LabeledSession& labeled, const SensorMesh& mesh,
                                  const LabelOptions& options = {});

struct TrackSpan {
  std::string label;
  std::vector<std::pair<int, int>> spans;  // inclusive visible frame intervals
};

struct SessionStats {
  int frames = 0;
  double discard_fraction = 0.0;
  std::vector<double> marker_visibility;  // per marker, fraction of frames with a real position
  int outlier_count = 0;
  int synthetic_count = 0;
  std::vector<TrackSpan> spans;
};

SessionStats session_stats(const LabeledSession& labeled, const CaptureSession& session);
std::string format_stats(const SessionStats& stats);

/// `frame,marker_index,x,y,z,synthetic_flag` for every known position.
std::string format_labeled_csv(const LabeledSession& labeled);

}  // namespace stretchcap
