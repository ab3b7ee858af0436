#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/layout.hpp"
#include "stretchcap/mocap.hpp"
#include "stretchcap/readout.hpp"
#include "stretchcap/regress.hpp"
#include "stretchcap/synth.hpp"

namespace stretchcap {

/// Missing stage input or an inconsistent run directory.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RestShape { Flat, Cylinder, Sphere };
std::string to_string(RestShape shape);
RestShape parse_rest_shape(const std::string& text);

struct InterpolationStudy {
  std::vector<int> markers;  // a0, a1, b0, b1 (marker indices)
  double extrapolation_gamma = 0.0, extrapolation_beta = 0.0;
  double interpolation_gamma = 0.0, interpolation_beta = 0.0;
};

/// Everything a reproducible run needs. Relative paths are resolved against
/// the directory of the config file.
struct PipelineConfig {
  std::filesystem::path layout;
  ExtraPolicy extra;
  MandatoryPolicy mandatory = MandatoryPolicy::Completed;
  double edge_length = 10.0;
  RestShape shape = RestShape::Flat;
  int markers = 12;
  double sphere_radius = 42.0;
  Scenario scenario;
  int test_frames = 500;
  std::uint64_t test_seed = 1000;
  std::string corruption = "none";  // "none" or "wrist_like"
  double capacitance_noise = 0.0;
  double measurement_noise = 0.0;
  bool readout_roundtrip = false;
  LabelOptions label;
  bool synthesize_missing = false;
  TrainOptions train;
  double ridge_alpha = 1e-9;
  int reconstruct_frames = 50;
  int reconstruct_iterations = 20;
  std::optional<InterpolationStudy> interpolation;
  std::uint64_t seed = 0;

  void validate() const;
};

PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& config);

/// Seed of one pipeline stage (0 mesh, 1 train synthesis, 2 corruption, 3
/// training), derived from the config seed.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage);

/// Lock file guarding a run directory against concurrent writers.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Rest mesh for a layout in the requested shape, with markers selected on
/// the shaped mesh.
SensorMesh build_rest_mesh(const SensorLayout& layout, const std::vector<SensorCell>& cells, double edge_length,
                           RestShape shape, int markers, double sphere_radius = 42.0, std::uint64_t seed = 0);

/// Reads `frame,marker_index,x,y,z,synthetic_flag` back into a labeled
/// session; frames without a row for some marker are discarded.
LabeledSession parse_labeled_csv(const std::string& text, const std::vector<int>& marker_vertices,
                                 int frames = -1);

/// Local-frame truth table (markers_true.csv) as frames x 3M.
Eigen::MatrixXd read_marker_table(const std::filesystem::path& path);

std::string linear_model_to_json(const LinearModel& model);
LinearModel linear_model_from_json(const std::string& text);

/// One method row of the marker error table.
struct ErrorRow {
  std::string method;
  ErrorReport report;
};
std::string format_error_table(const std::vector<ErrorRow>& rows);

struct InterpolationRow {
  std::string filter;
  double gamma = 0.0, beta = 0.0;
  int retained = 0;
  ErrorReport report;
};

/// Trains one model on the unfiltered data and one per filter band, and
/// evaluates each on `test`.
std::vector<InterpolationRow> run_interpolation_study(const Dataset& train, const Dataset& test,
                                                      const InterpolationStudy& study, const TrainOptions& options);
std::string format_interpolation_table(const std::vector<InterpolationRow>& rows);

struct ReconstructStats {
  int frames = 0;
  double seconds = 0.0;
  double fps() const { return seconds > 0.0 ? frames / seconds : 0.0; }
};

/// decode (if a plan is given) -> forward -> elastic deformation with the
/// predicted markers as constraints. Calls `sink` with every frame's vertices.
ReconstructStats reconstruct(const Regressor& model, const SensorMesh& rest, const MeasurementPlan* plan,
                             const FrameTable& input, int iterations,
                             const std::function<void(int, const Eigen::MatrixX3d&)>& sink);

/// Zero-padded OBJ name for a frame.
std::string frame_obj_name(long frame);

// Subcommands. Each writes its outputs atomically below `out` and logs to `log`.
void cmd_layout(const std::string& preset, int top, int bottom, double width, double height, double gap,
                const std::filesystem::path& out);
void cmd_plan(const PipelineConfig& config, const std::filesystem::path& out, std::ostream& log);
void cmd_mesh(const PipelineConfig& config, const std::filesystem::path& out, std::ostream& log);
void cmd_synth(const PipelineConfig& config, const std::filesystem::path& run_dir, std::ostream& log);
void cmd_decode(const std::filesystem::path& plan_path, const std::filesystem::path& input, bool frequencies,
                const TimerConfig& timer, const std::filesystem::path& out, std::ostream& log);
void cmd_label(const PipelineConfig& config, const std::filesystem::path& run_dir,
               const std::vector<std::pair<std::string, int>>& seeds, const std::filesystem::path& edits,
               std::ostream& log);
void cmd_train(const PipelineConfig& config, const std::filesystem::path& run_dir, std::ostream& log);
void cmd_eval(const PipelineConfig& config, const std::filesystem::path& run_dir, std::ostream& log);
void cmd_interp(const PipelineConfig& config, const std::filesystem::path& run_dir, std::ostream& log);
void cmd_reconstruct(const std::filesystem::path& run_dir, const std::filesystem::path& input,
                     const std::filesystem::path& out, int iterations, int max_frames, std::ostream& log);
/// Plain-text summary of a run directory; missing sections are marked.
std::string cmd_report(const std::filesystem::path& run_dir);
/// Reads capacitance rows (comma separated, optional header) from `in` and
/// writes one prediction row per input row, flushing after each.
void cmd_predict_stream(const std::filesystem::path& model_path, std::istream& in, std::ostream& out);
/// plan, mesh, synth, label, train, eval, interp (if configured), report.
void cmd_run(const PipelineConfig& config, const std::filesystem::path& run_dir, std::ostream& log);

}  // namespace stretchcap
