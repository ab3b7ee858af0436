#include "stretchcap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stretchcap/capmodel.hpp"
#include "stretchcap/deform.hpp"
#include "stretchcap/mesh.hpp"

namespace stretchcap {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();


fs::path require(const fs::path& path, const std::string& produced_by) {
  if (!fs::exists(path))
    throw PipelineError("missing " + path.string() + " (produced by `stretchcap " + produced_by + "`)");
  return path;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

struct RunPaths {
  fs::path dir;
  fs::path plan() const { return dir / "plan.json"; }
  fs::path mesh() const { return dir / "mesh" / "rest.obj"; }
  fs::path train() const { return dir / "train"; }
  fs::path test() const { return dir / "test"; }
  fs::path label() const { return dir / "label"; }
  fs::path model() const { return dir / "model" / "model.bin"; }
  fs::path linear() const { return dir / "model" / "linear.json"; }
  fs::path loss() const { return dir / "model" / "loss.csv"; }
  fs::path eval() const { return dir / "eval"; }
  fs::path interp() const { return dir / "interp" / "interp.csv"; }
  fs::path recon() const { return dir / "recon"; }
};

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

Dataset dataset_from_truth(const FrameTable& capacitance, const Eigen::MatrixXd& markers) {
  if (capacitance.values.rows() != markers.rows())
    throw PipelineError("capacitance trace and marker table differ in frame count");
  Dataset d;
  d.inputs = capacitance.values;
  d.targets = markers;
  d.input_names = capacitance.columns;
  for (Eigen::Index t = 0; t < markers.rows(); ++t) d.frames.push_back(static_cast<int>(t));
  return d;
}

std::vector<std::pair<std::string, int>> seeds_from_truth(const fs::path& truth_path, const CaptureSession& session,
                                                          const SensorMesh& mesh) {
  const auto truth = json::parse(read_text_file(truth_path));
  std::map<int, std::string> frame0;  // marker -> label visible in frame 0
  for (const auto& [label, marker] : truth.at("fragments").items()) {
    const int m = marker.get<int>();
    const int j = session.track_index(label);
    if (m >= 0 && j >= 0 && session.tracks[static_cast<std::size_t>(j)].visible[0]) frame0[m] = label;
  }
  std::vector<std::pair<std::string, int>> seeds;
  std::vector<Eigen::Vector3d> pts;
  for (const auto& [m, label] : frame0) {
    const Eigen::Vector3d p = mesh.vertices.row(mesh.marker_vertices[static_cast<std::size_t>(m)]).transpose();
    if (pts.size() == 2 && (pts[1] - pts[0]).cross(p - pts[0]).norm() < 1e-3 * (pts[1] - pts[0]).squaredNorm())
      continue;
    seeds.emplace_back(label, mesh.marker_vertices[static_cast<std::size_t>(m)]);
    pts.push_back(p);
    if (seeds.size() == 3) break;
  }
  if (seeds.size() < 3) throw PipelineError("truth file does not name three non-collinear frame-0 markers");
  return seeds;
}

std::uint64_t config_layout_hash(const PipelineConfig& config) { return layout_hash(load_layout(config.layout)); }

void check_hash(std::uint64_t a, std::uint64_t b, const std::string& what) {
  if (a != b) throw PipelineError(what + " was built for layout " + hex64(a) + ", expected " + hex64(b));
}

ErrorReport error_from_csv_row(const std::vector<std::string>& f) {
  ErrorReport r;
  r.mean = parse_double(f.at(1));
  r.stddev = parse_double(f.at(2));
  r.max = parse_double(f.at(3));
  r.samples = static_cast<int>(parse_double(f.at(4)));
  return r;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_csv_line(line));
  return rows;
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string to_string(RestShape shape) {
  switch (shape) {
    case RestShape::Flat: return "flat";
    case RestShape::Cylinder: return "cylinder";
    case RestShape::Sphere: return "sphere";
  }
  return "flat";
}

RestShape parse_rest_shape(const std::string& text) {
  if (text == "flat") return RestShape::Flat;
  if (text == "cylinder") return RestShape::Cylinder;
  if (text == "sphere") return RestShape::Sphere;
  throw std::invalid_argument("unknown rest shape " + text + " (flat, cylinder, sphere)");
}

void PipelineConfig::validate() const {
  if (layout.empty()) throw std::invalid_argument("config has no layout");
  if (!fs::exists(layout)) throw std::invalid_argument("layout file " + layout.string() + " does not exist");
  if (!(edge_length > 0.0)) throw std::invalid_argument("mesh edge length must be positive");
  if (markers < 3) throw std::invalid_argument("at least three markers are needed");
  if (test_frames < 1) throw std::invalid_argument("test frame count must be positive");
  if (corruption != "none" && corruption != "wrist_like")
    throw std::invalid_argument("corruption must be none or wrist_like");
  if (capacitance_noise < 0.0 || measurement_noise < 0.0) throw std::invalid_argument("noise must be non-negative");
  if (!(label.tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (train.hidden.empty() || train.epochs < 1 || train.batch_size < 2 || !(train.learning_rate > 0.0) ||
      train.lambda < 0.0)
    throw std::invalid_argument("invalid training settings");
  if (reconstruct_iterations < 1) throw std::invalid_argument("reconstruction iterations must be positive");
  if (interpolation && interpolation->markers.size() != 4)
    throw std::invalid_argument("interpolation study needs four marker indices");
}

PipelineConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  const auto j = json::parse(json_text);
  PipelineConfig c;
  c.layout = resolve(base_dir, j.at("layout").get<std::string>());
  c.seed = j.value("seed", c.seed);
  if (j.contains("plan")) {
    c.extra = ExtraPolicy::parse(j["plan"].value("extra", std::string("single+pairs")));
    const auto m = j["plan"].value("mandatory", std::string("completed"));
    if (m == "completed") c.mandatory = MandatoryPolicy::Completed;
    else if (m == "pairs_only") c.mandatory = MandatoryPolicy::PairsOnly;
    else throw std::invalid_argument("plan.mandatory must be completed or pairs_only");
  }
  if (j.contains("mesh")) {
    const auto& m = j["mesh"];
    c.edge_length = m.value("edge_length", c.edge_length);
    c.shape = parse_rest_shape(m.value("shape", std::string("flat")));
    c.markers = m.value("markers", c.markers);
    c.sphere_radius = m.value("sphere_radius", c.sphere_radius);
  }
  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    c.scenario = s.is_string() ? load_scenario(resolve(base_dir, s.get<std::string>())) : parse_scenario(s.dump());
  }
  if (j.contains("test")) {
    c.test_frames = j["test"].value("frames", c.test_frames);
    c.test_seed = j["test"].value("seed", c.test_seed);
  }
  c.corruption = j.value("corruption", c.corruption);
  c.capacitance_noise = j.value("capacitance_noise", c.capacitance_noise);
  c.measurement_noise = j.value("measurement_noise", c.measurement_noise);
  c.readout_roundtrip = j.value("readout_roundtrip", c.readout_roundtrip);
  if (j.contains("label")) {
    const auto& l = j["label"];
    c.label.tau = l.value("tau", c.label.tau);
    c.label.max_match_frames = l.value("max_match_frames", c.label.max_match_frames);
    c.label.min_constraints = l.value("min_constraints", c.label.min_constraints);
    c.label.constraint_weight = l.value("constraint_weight", c.label.constraint_weight);
    c.label.proxy_iterations = l.value("proxy_iterations", c.label.proxy_iterations);
    c.synthesize_missing = l.value("synthesize_missing", c.synthesize_missing);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.hidden = t.value("hidden", c.train.hidden);
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.lambda = t.value("lambda", c.train.lambda);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.validation_fraction = t.value("validation_fraction", c.train.validation_fraction);
    c.ridge_alpha = t.value("ridge_alpha", c.ridge_alpha);
  }
  if (j.contains("reconstruct")) {
    c.reconstruct_frames = j["reconstruct"].value("frames", c.reconstruct_frames);
    c.reconstruct_iterations = j["reconstruct"].value("iterations", c.reconstruct_iterations);
  }
  if (j.contains("interpolation")) {
    const auto& s = j["interpolation"];
    InterpolationStudy st;
    st.markers = s.at("markers").get<std::vector<int>>();
    st.extrapolation_gamma = s.at("extrapolation").at(0).get<double>();
    st.extrapolation_beta = s.at("extrapolation").at(1).get<double>();
    st.interpolation_gamma = s.at("interpolation").at(0).get<double>();
    st.interpolation_beta = s.at("interpolation").at(1).get<double>();
    c.interpolation = st;
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  return parse_config(read_text_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::string config_to_json(const PipelineConfig& c) {
  ojson j;
  j["layout"] = c.layout.string();
  j["seed"] = c.seed;
  j["plan"] = {{"extra", c.extra.to_string()},
               {"mandatory", c.mandatory == MandatoryPolicy::Completed ? "completed" : "pairs_only"}};
  j["mesh"] = {{"edge_length", c.edge_length},
               {"shape", to_string(c.shape)},
               {"markers", c.markers},
               {"sphere_radius", c.sphere_radius}};
  j["scenario"] = ojson::parse(scenario_to_json(c.scenario));
  j["test"] = {{"frames", c.test_frames}, {"seed", c.test_seed}};
  j["corruption"] = c.corruption;
  j["capacitance_noise"] = c.capacitance_noise;
  j["measurement_noise"] = c.measurement_noise;
  j["readout_roundtrip"] = c.readout_roundtrip;
  j["label"] = {{"tau", c.label.tau},
                {"max_match_frames", c.label.max_match_frames},
                {"min_constraints", c.label.min_constraints},
                {"constraint_weight", c.label.constraint_weight},
                {"proxy_iterations", c.label.proxy_iterations},
                {"synthesize_missing", c.synthesize_missing}};
  j["train"] = {{"hidden", c.train.hidden},
                {"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"lambda", c.train.lambda},
                {"epochs", c.train.epochs},
                {"validation_fraction", c.train.validation_fraction},
                {"ridge_alpha", c.ridge_alpha}};
  j["reconstruct"] = {{"frames", c.reconstruct_frames}, {"iterations", c.reconstruct_iterations}};
  if (c.interpolation) {
    const auto& s = *c.interpolation;
    j["interpolation"] = {{"markers", s.markers},
                          {"extrapolation", {s.extrapolation_gamma, s.extrapolation_beta}},
                          {"interpolation", {s.interpolation_gamma, s.interpolation_beta}}};
  }
  return j.dump(1);
}

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw PipelineError("run directory " + dir.string() + " is in use (remove " + path_.string() +
                        " if no other process is running)");
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

SensorMesh build_rest_mesh(const SensorLayout& layout, const std::vector<SensorCell>& cells, double edge_length,
                           RestShape shape, int markers, double sphere_radius, std::uint64_t seed) {
  MeshOptions options;
  options.target_edge_length = edge_length;
  options.seed = seed;
  SensorMesh mesh = mesh_layout(layout, cells, options);
  if (shape != RestShape::Flat) {
    Scenario s;
    s.kind = shape == RestShape::Cylinder ? ScenarioKind::CylinderBend : ScenarioKind::BalloonInflate;
    s.rest_radius = sphere_radius;
    mesh = shape_rest(mesh, s);
  }
  mesh.marker_vertices = select_markers_count(mesh, markers);
  return mesh;
}

LabeledSession parse_labeled_csv(const std::string& text, const std::vector<int>& marker_vertices, int frames) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("frame,marker_index", 0) != 0)
    throw FormatError("labeled.csv", 1, "expected header frame,marker_index,x,y,z,synthetic_flag");
  struct Row {
    int frame, marker;
    Eigen::Vector3d p;
    bool synthetic;
  };
  std::vector<Row> rows;
  int max_frame = -1;
  const int n_markers = static_cast<int>(marker_vertices.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw FormatError("labeled.csv", line_no, "expected 6 fields");
    Row r{static_cast<int>(parse_double(f[0])), static_cast<int>(parse_double(f[1])),
          {parse_double(f[2]), parse_double(f[3]), parse_double(f[4])}, f[5] == "1"};
    if (r.frame < 0 || r.marker < 0 || r.marker >= n_markers)
      throw FormatError("labeled.csv", line_no, "frame or marker index out of range");
    max_frame = std::max(max_frame, r.frame);
    rows.push_back(r);
  }
  LabeledSession out;
  out.marker_vertices = marker_vertices;
  out.frames = frames >= 0 ? frames : max_frame + 1;
  if (max_frame >= out.frames) throw FormatError("labeled.csv", 0, "frame index beyond the session length");
  out.positions = Eigen::MatrixXd::Constant(out.frames, 3 * n_markers, kNaN);
  out.synthetic = Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(out.frames, n_markers);
  for (const auto& r : rows) {
    out.positions.block(r.frame, 3 * r.marker, 1, 3) = r.p.transpose();
    out.synthetic(r.frame, r.marker) = r.synthetic ? 1 : 0;
  }
  out.update_discarded();
  return out;
}

Eigen::MatrixXd read_marker_table(const fs::path& path) { return read_frame_table(path).values; }

std::string linear_model_to_json(const LinearModel& m) {
  ojson j;
  j["version"] = 1;
  auto vec = [](const auto& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["mean"] = vec(m.normalization.mean);
  j["variance"] = vec(m.normalization.variance);
  j["dead_channels"] = m.normalization.dead_channels;
  j["rows"] = m.weights.rows();
  j["cols"] = m.weights.cols();
  const Eigen::MatrixXd w = m.weights;  // column-major
  j["weights"] = vec(w);
  j["intercept"] = vec(m.intercept);
  return j.dump();
}

LinearModel linear_model_from_json(const std::string& text) {
  const auto j = json::parse(text);
  LinearModel m;
  auto vec = [](const json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  m.normalization.mean = vec(j.at("mean"));
  m.normalization.variance = vec(j.at("variance"));
  m.normalization.dead_channels = j.at("dead_channels").get<std::vector<int>>();
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const Eigen::VectorXd w = vec(j.at("weights"));
  if (w.size() != rows * cols) throw FormatError("linear model", 0, "weight count mismatch");
  m.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols);
  m.intercept = vec(j.at("intercept")).transpose();
  return m;
}

std::string format_error_table(const std::vector<ErrorRow>& rows) {
  std::string out = "method,mean_mm,std_mm,max_mm,samples\n";
  for (const auto& r : rows)
    out += r.method + "," + format_double(r.report.mean) + "," + format_double(r.report.stddev) + "," +
           format_double(r.report.max) + "," + std::to_string(r.report.samples) + "\n";
  return out;
}

std::vector<InterpolationRow> run_interpolation_study(const Dataset& train_data, const Dataset& test,
                                                      const InterpolationStudy& study, const TrainOptions& options) {
  if (study.markers.size() != 4) throw std::invalid_argument("interpolation study needs four marker indices");
  const auto angle = [&](const Eigen::RowVectorXd& row) {
    return marker_line_angle(row, study.markers[0], study.markers[1], study.markers[2], study.markers[3]);
  };
  std::vector<InterpolationRow> rows;
  auto run = [&](const std::string& name, double g, double b, const Dataset& d) {
    const auto result = train(d, options);
    const auto report = evaluate(result.model.predict(test.inputs), test.targets);
    rows.push_back({name, g, b, d.size(), report});
  };
  run("all", kNaN, kNaN, train_data);
  const auto ex = angle_filter(train_data, angle, study.extrapolation_gamma, study.extrapolation_beta);
  run("extrapolation", study.extrapolation_gamma, study.extrapolation_beta, ex.data);
  const auto in = angle_filter(train_data, angle, study.interpolation_gamma, study.interpolation_beta);
  run("interpolation", study.interpolation_gamma, study.interpolation_beta, in.data);
  return rows;
}

std::string format_interpolation_table(const std::vector<InterpolationRow>& rows) {
  std::string out = "filter,gamma_deg,beta_deg,retained,mean_mm,std_mm,max_mm\n";
  for (const auto& r : rows)
    out += r.filter + "," + format_double(r.gamma) + "," + format_double(r.beta) + "," + std::to_string(r.retained) +
           "," + format_double(r.report.mean) + "," + format_double(r.report.stddev) + "," +
           format_double(r.report.max) + "\n";
  return out;
}

ReconstructStats reconstruct(const Regressor& model, const SensorMesh& rest, const MeasurementPlan* plan,
                             const FrameTable& input, int iterations,
                             const std::function<void(int, const Eigen::MatrixX3d&)>& sink) {
  const auto n_markers = static_cast<Eigen::Index>(rest.marker_vertices.size());
  if (model.net.num_outputs() != 3 * n_markers)
    throw PipelineError("model predicts " + std::to_string(model.net.num_outputs() / 3) + " markers, mesh has " +
                        std::to_string(n_markers));
  const bool measurements = plan && input.values.cols() == plan->num_rows() &&
                            input.values.cols() != model.net.num_inputs();
  if (!measurements && input.values.cols() != model.net.num_inputs())
    throw PipelineError("input has " + std::to_string(input.values.cols()) + " columns, model expects " +
                        std::to_string(model.net.num_inputs()));
  ArapSolver solver(rest.vertices, rest.faces, {iterations, 1e-6, 4});
  Eigen::MatrixX3d previous;
  ReconstructStats stats;
  const auto start = std::chrono::steady_clock::now();
  for (Eigen::Index t = 0; t < input.values.rows(); ++t) {
    Eigen::VectorXd x = input.values.row(t).transpose();
    if (measurements) x = decode(*plan, x).cells;
    const Eigen::RowVectorXd p = model.predict(x.transpose());
    PositionalConstraints c;
    for (Eigen::Index m = 0; m < n_markers; ++m)
      c.push_back({rest.marker_vertices[static_cast<std::size_t>(m)], p.segment<3>(3 * m).transpose(), 1e4});
    auto result = solver.solve(c, previous.rows() ? &previous : nullptr);
    previous = std::move(result.vertices);
    ++stats.frames;
    if (sink) sink(static_cast<int>(t), previous);
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

std::string frame_obj_name(long frame) {
  std::ostringstream os;
  os << "frame_" << std::setw(6) << std::setfill('0') << frame << ".obj";
  return os.str();
}

void cmd_layout(const std::string& preset, int top, int bottom, double width, double height, double gap,
                const fs::path& out) {
  SensorLayout layout;
  if (preset == "prototype") layout = make_prototype_layout();
  else if (preset == "grid") layout = make_grid_layout(top, bottom, width, height, gap);
  else throw std::invalid_argument("unknown layout preset " + preset + " (prototype, grid)");
  validate_layout(layout);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text_file_atomic(out, layout_to_json(layout));
}

void cmd_plan(const PipelineConfig& config, const fs::path& out, std::ostream& log) {
  const auto layout = load_layout(config.layout);
  const auto cells = build_cells(layout);
  const auto plan = build_plan(layout, cells, config.extra, config.mandatory);
  const auto sv = singular_values(plan.mandatory_only().matrix);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_plan(out, plan);
  log << "plan: " << plan.num_cells() << " cells, " << plan.num_mandatory() << " mandatory + "
      << plan.num_rows() - plan.num_mandatory() << " extra rows, mandatory sigma_min/sigma_max "
      << format_double(sv[sv.size() - 1] / sv[0]) << "\n";
}

void cmd_mesh(const PipelineConfig& config, const fs::path& out, std::ostream& log) {
  const auto layout = load_layout(config.layout);
  const auto cells = build_cells(layout);
  const auto mesh = build_rest_mesh(layout, cells, config.edge_length, config.shape, config.markers,
                                    config.sphere_radius, stage_seed(config.seed, 0));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_mesh(out, mesh);
  log << "mesh: " << mesh.num_vertices() << " vertices, " << mesh.num_faces() << " faces, " << mesh.num_cells()
      << " cells, " << mesh.marker_vertices.size() << " markers (" << to_string(config.shape) << ")\n";
}

void cmd_synth(const PipelineConfig& config, const fs::path& run_dir, std::ostream& log) {
  const RunPaths run{run_dir};
  const auto mesh = load_mesh(require(run.mesh(), "mesh"));
  const auto layout = load_layout(config.layout);
  const auto cells = build_cells(layout);
  std::optional<MeasurementPlan> plan;
  if (config.readout_roundtrip) {
    plan = load_plan(require(run.plan(), "plan"));
    check_hash(plan->layout_hash, layout_hash(layout), "plan");
  }
  SynthOptions options;
  options.capacitance_noise = config.capacitance_noise;
  options.measurement_noise = config.measurement_noise;
  options.plan = plan ? &*plan : nullptr;
  for (const auto& cell : cells) options.cell_names.push_back(cell_name(layout, cell));

  Scenario scenario = config.scenario;
  scenario.seed = stage_seed(config.seed, 1);
  options.corruption = config.corruption == "wrist_like" ? CorruptionSpec::wrist_like(stage_seed(config.seed, 2))
                                                         : CorruptionSpec{};
  const auto train_set = synthesize(mesh, scenario, options);
  write_synthetic(run.train(), train_set);
  log << "synth train: " << scenario.frames << " frames, " << train_set.session.tracks.size() << " tracks\n";

  Scenario test = config.scenario;
  test.frames = config.test_frames;
  test.seed = config.test_seed;
  options.corruption = CorruptionSpec{};
  const auto test_set = synthesize(mesh, test, options);
  write_synthetic(run.test(), test_set);
  log << "synth test: " << test.frames << " frames\n";
}

void cmd_decode(const fs::path& plan_path, const fs::path& input, bool frequencies, const TimerConfig& timer,
                const fs::path& out, std::ostream& log) {
  const auto plan = load_plan(plan_path);
  FrameTable raw = read_frame_table(input);
  if (frequencies) raw = frequencies_to_measurements(raw, timer);
  if (raw.values.cols() != plan.num_rows())
    throw PipelineError(input.string() + " has " + std::to_string(raw.values.cols()) + " measurement columns, plan has " +
                        std::to_string(plan.num_rows()) + " rows");
  FrameTable cells;
  cells.columns = plan.cell_names;
  cells.frames = raw.frames;
  cells.values = decode_frames(plan, raw.values);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text_file_atomic(out, format_frame_table(cells));
  log << "decode: " << cells.values.rows() << " frames, " << cells.values.cols() << " cells\n";
}

void cmd_label(const PipelineConfig& config, const fs::path& run_dir,
               const std::vector<std::pair<std::string, int>>& seeds_in, const fs::path& edits_path,
               std::ostream& log) {
  const RunPaths run{run_dir};
  const auto mesh = load_mesh(require(run.mesh(), "mesh"));
  const auto session = read_session_csv(require(run.train() / "session.csv", "synth"));
  const auto edits = edits_path.empty() ? std::vector<TrackEdit>{} : load_edits(edits_path);
  const auto spliced = apply_splits(session, edits);
  auto seeds = seeds_in;
  const fs::path truth_path = run.train() / "truth.json";
  if (seeds.empty()) {
    if (!fs::exists(truth_path)) throw PipelineError("no --seeds given and no truth.json to pick them from");
    seeds = seeds_from_truth(truth_path, spliced, mesh);
  }
  const auto initial = initialize_assignment(spliced, mesh, seeds);
  for (const auto& w : initial.warnings) log << "warning: " << w << "\n";
  auto labeled = label_tracks(session, mesh, initial, config.label, edits);
  if (config.synthesize_missing) labeled = synthesize_missing(labeled, mesh, config.label);
  const auto stats = session_stats(labeled, spliced);

  fs::create_directories(run.label());
  write_text_file_atomic(run.label() / "labeled.csv", format_labeled_csv(labeled));
  write_text_file_atomic(run.label() / "stats.txt", format_stats(stats));
  std::string spans = "label,marker_vertex,first,last\n";
  for (const auto& s : stats.spans) {
    const int m = labeled.marker_of(s.label);
    const std::string vertex = m >= 0 ? std::to_string(labeled.marker_vertices[static_cast<std::size_t>(m)]) : "outlier";
    for (const auto& [a, b] : s.spans) spans += s.label + "," + vertex + "," + std::to_string(a) + "," + std::to_string(b) + "\n";
  }
  write_text_file_atomic(run.label() / "spans.csv", spans);
  ojson assignment = ojson::object();
  for (const auto& [vertex, labels] : labeled.assignment) assignment[std::to_string(vertex)] = labels;
  ojson a;
  a["assignment"] = std::move(assignment);
  a["outliers"] = labeled.outlier_tracks;
  ojson amb = ojson::array();
  for (const auto& p : labeled.ambiguous)
    amb.push_back({{"vertex", p.vertex}, {"chosen", p.chosen}, {"alternative", p.alternative}, {"margin", p.margin}});
  a["ambiguous"] = std::move(amb);
  write_text_file_atomic(run.label() / "assignment.json", a.dump(1));

  log << "label: " << spliced.tracks.size() << " tracks, " << labeled.outlier_tracks.size() << " outliers, discarded "
      << fixed(100.0 * stats.discard_fraction, 1) << "% of frames\n";
  if (fs::exists(truth_path)) {
    const auto truth = json::parse(read_text_file(truth_path));
    int correct = 0, total = 0, outliers = 0, flagged = 0;
    for (const auto& [label, marker] : truth.at("fragments").items()) {
      const int m = marker.get<int>();
      const int got = labeled.marker_of(label);
      ++total;
      if (m < 0) {
        ++outliers;
        if (got < 0) {
          ++flagged;
          ++correct;
        }
      } else if (got == m) {
        ++correct;
      }
    }
    ojson score;
    score["fragments"] = total;
    score["correct"] = correct;
    score["accuracy"] = total ? static_cast<double>(correct) / total : 1.0;
    score["outliers"] = outliers;
    score["outliers_flagged"] = flagged;
    write_text_file_atomic(run.label() / "score.json", score.dump(1));
    log << "label score: " << correct << "/" << total << " fragments correct, " << flagged << "/" << outliers
        << " outliers flagged\n";
  }
}

void cmd_train(const PipelineConfig& config, const fs::path& run_dir, std::ostream& log) {
  const RunPaths run{run_dir};
  const auto mesh = load_mesh(require(run.mesh(), "mesh"));
  const auto capacitance = read_frame_table(require(run.train() / "capacitance.csv", "synth"));
  const auto labeled = parse_labeled_csv(read_text_file(require(run.label() / "labeled.csv", "label")),
                                         mesh.marker_vertices, static_cast<int>(capacitance.values.rows()));
  const auto data = build_dataset(labeled, capacitance);
  TrainOptions options = config.train;
  options.seed = stage_seed(config.seed, 3);
  options.progress = [&](int epoch, double tr, double va) {
    if (epoch % 10 == 0 || epoch + 1 == options.epochs)
      log << "epoch " << epoch << " train " << format_double(tr) << " val " << format_double(va) << "\n";
  };
  auto result = train(data, options);
  result.model.layout_hash = config_layout_hash(config);
  fs::create_directories(run.model().parent_path());
  save_regressor(run.model(), result.model);
  std::string loss = "epoch,train,validation\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e)
    loss += std::to_string(e) + "," + format_double(result.train_loss[e]) + "," + format_double(result.val_loss[e]) + "\n";
  write_text_file_atomic(run.loss(), loss);
  const auto linear = train_linear_baseline(data, config.ridge_alpha);
  write_text_file_atomic(run.linear(), linear_model_to_json(linear));
  log << "train: " << data.size() << " frames, best epoch " << result.best_epoch
      << (result.diverged ? " (diverged, kept last finite state)" : "") << "\n";
}

void cmd_eval(const PipelineConfig& config, const fs::path& run_dir, std::ostream& log) {
  const RunPaths run{run_dir};
  const auto model = load_regressor(require(run.model(), "train"));
  check_hash(model.layout_hash, config_layout_hash(config), "model");
  const auto linear = linear_model_from_json(read_text_file(require(run.linear(), "train")));
  const auto test = dataset_from_truth(read_frame_table(require(run.test() / "capacitance.csv", "synth")),
                                       read_marker_table(require(run.test() / "markers_true.csv", "synth")));
  if (model.input_names != test.input_names) throw PipelineError("test trace columns differ from the model inputs");
  const auto nn = evaluate(model.predict(test.inputs), test.targets);
  const auto lr = evaluate(linear.predict(test.inputs), test.targets);
  fs::create_directories(run.eval());
  write_text_file_atomic(run.eval() / "errors.csv", format_error_table({{"nn", nn}, {"lr", lr}}));
  std::string per_frame = "frame,nn_max_mm,lr_max_mm\n";
  for (std::size_t t = 0; t < nn.per_frame_max.size(); ++t)
    per_frame += std::to_string(test.frames[t]) + "," + format_double(nn.per_frame_max[t]) + "," +
                 format_double(lr.per_frame_max[t]) + "\n";
  write_text_file_atomic(run.eval() / "per_frame_max.csv", per_frame);
  log << "eval: nn mean " << fixed(nn.mean) << " std " << fixed(nn.stddev) << " max " << fixed(nn.max) << " mm; lr mean "
      << fixed(lr.mean) << " std " << fixed(lr.stddev) << " max " << fixed(lr.max) << " mm\n";
}

void cmd_interp(const PipelineConfig& config, const fs::path& run_dir, std::ostream& log) {
  if (!config.interpolation) throw PipelineError("config has no interpolation section");
  const RunPaths run{run_dir};
  const auto mesh = load_mesh(require(run.mesh(), "mesh"));
  const auto capacitance = read_frame_table(require(run.train() / "capacitance.csv", "synth"));
  const auto labeled = parse_labeled_csv(read_text_file(require(run.label() / "labeled.csv", "label")),
                                         mesh.marker_vertices, static_cast<int>(capacitance.values.rows()));
  const auto data = build_dataset(labeled, capacitance);
  const auto test = dataset_from_truth(read_frame_table(require(run.test() / "capacitance.csv", "synth")),
                                       read_marker_table(require(run.test() / "markers_true.csv", "synth")));
  TrainOptions options = config.train;
  options.seed = stage_seed(config.seed, 3);
  const auto rows = run_interpolation_study(data, test, *config.interpolation, options);
  fs::create_directories(run.interp().parent_path());
  write_text_file_atomic(run.interp(), format_interpolation_table(rows));
  for (const auto& r : rows)
    log << "interp " << r.filter << ": " << r.retained << " frames, max " << fixed(r.report.max) << " mm\n";
}

void cmd_reconstruct(const fs::path& run_dir, const fs::path& input, const fs::path& out, int iterations,
                     int max_frames, std::ostream& log) {
  const RunPaths run{run_dir};
  const auto model = load_regressor(require(run.model(), "train"));
  const auto mesh = load_mesh(require(run.mesh(), "mesh"));
  std::optional<MeasurementPlan> plan;
  if (fs::exists(run.plan())) {
    plan = load_plan(run.plan());
    check_hash(model.layout_hash, plan->layout_hash, "model");
  }
  FrameTable trace = read_frame_table(input.empty() ? require(run.test() / "capacitance.csv", "synth") : input);
  if (max_frames > 0 && trace.values.rows() > max_frames) {
    trace.values.conservativeResize(max_frames, Eigen::NoChange);
    trace.frames.resize(static_cast<std::size_t>(max_frames));
  }
  const fs::path dir = out.empty() ? run.recon() : out;
  fs::create_directories(dir);
  std::vector<std::string> objs;
  const auto stats = reconstruct(model, mesh, plan ? &*plan : nullptr, trace, iterations,
                                 [&](int, const Eigen::MatrixX3d& v) { objs.push_back(format_obj(v, mesh.faces)); });
  for (std::size_t t = 0; t < objs.size(); ++t) write_text_file_atomic(dir / frame_obj_name(trace.frames[t]), objs[t]);
  std::ostringstream summary;
  summary << "frames: " << stats.frames << "\n"
          << "fps: " << fixed(stats.fps(), 2) << "\n"
          << "reference_fps: 8\n"
          << "meets_reference: " << (stats.fps() >= 8.0 ? "yes" : "no") << "\n";
  write_text_file_atomic(dir / "recon.txt", summary.str());
  log << "reconstruct: " << stats.frames << " frames at " << fixed(stats.fps(), 2) << " fps (reference 8 Hz)\n";
}

std::string cmd_report(const fs::path& run_dir) {
  const RunPaths run{run_dir};
  std::ostringstream os;
  auto missing = [&](const fs::path& p) { os << "  (missing: " << fs::relative(p, run_dir).string() << ")\n"; };

  os << "== Marker error (mm) ==\n";
  if (fs::exists(run.eval() / "errors.csv")) {
    os << "  method      mean      std       max\n";
    const auto rows = read_csv_rows(run.eval() / "errors.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto r = error_from_csv_row(rows[i]);
      os << "  " << std::left << std::setw(8) << rows[i][0] << std::right << std::setw(8) << fixed(r.mean, 2)
         << std::setw(10) << fixed(r.stddev, 2) << std::setw(10) << fixed(r.max, 2) << "\n";
    }
  } else {
    missing(run.eval() / "errors.csv");
  }

  os << "\n== Track labeling ==\n";
  if (fs::exists(run.label() / "score.json")) {
    const auto s = json::parse(read_text_file(run.label() / "score.json"));
    os << "  fragments correct: " << s.at("correct").get<int>() << "/" << s.at("fragments").get<int>()
       << ", outliers flagged: " << s.at("outliers_flagged").get<int>() << "/" << s.at("outliers").get<int>() << "\n";
  }
  if (fs::exists(run.label() / "spans.csv")) {
    const auto rows = read_csv_rows(run.label() / "spans.csv");
    std::map<std::string, std::pair<std::string, std::vector<std::string>>> by_label;
    std::vector<std::string> order;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      auto& entry = by_label[rows[i][0]];
      if (entry.second.empty()) order.push_back(rows[i][0]);
      entry.first = rows[i][1];
      entry.second.push_back(rows[i][2] + "-" + rows[i][3]);
    }
    os << "  " << order.size() << " raw tracks\n  label -> vertex: spans\n";
    for (const auto& l : order) os << "  " << l << " -> " << by_label[l].first << ": " << join(by_label[l].second, " ") << "\n";
  } else {
    missing(run.label() / "spans.csv");
  }

  os << "\n== Loss curves ==\n";
  if (fs::exists(run.loss())) {
    const auto rows = read_csv_rows(run.loss());
    const std::size_t n = rows.size() > 0 ? rows.size() - 1 : 0;
    const std::size_t step = std::max<std::size_t>(1, n / 20);
    os << "  epoch        train   validation\n";
    for (std::size_t i = 1; i < rows.size(); i += step)
      os << "  " << std::setw(5) << rows[i][0] << std::setw(13) << fixed(parse_double(rows[i][1]), 4) << std::setw(13)
         << fixed(parse_double(rows[i][2]), 4) << "\n";
  } else {
    missing(run.loss());
  }

  os << "\n== Interpolation study ==\n";
  if (fs::exists(run.interp())) {
    os << "  filter          gamma   beta   frames     mean      max\n";
    const auto rows = read_csv_rows(run.interp());
    for (std::size_t i = 1; i < rows.size(); ++i)
      os << "  " << std::left << std::setw(14) << rows[i][0] << std::right << std::setw(7) << rows[i][1] << std::setw(7)
         << rows[i][2] << std::setw(9) << rows[i][3] << std::setw(9) << fixed(parse_double(rows[i][4]), 2)
         << std::setw(9) << fixed(parse_double(rows[i][6]), 2) << "\n";
  } else {
    missing(run.interp());
  }

  os << "\n== Reconstruction ==\n";
  if (fs::exists(run.recon() / "recon.txt")) {
    std::istringstream in(read_text_file(run.recon() / "recon.txt"));
    std::string line;
    while (std::getline(in, line)) os << "  " << line << "\n";
  } else {
    missing(run.recon() / "recon.txt");
  }
  return os.str();
}

void cmd_predict_stream(const fs::path& model_path, std::istream& in, std::ostream& out) {
  const auto model = load_regressor(model_path);
  const int n_in = model.net.num_inputs();
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    Eigen::RowVectorXd x(static_cast<Eigen::Index>(fields.size()));
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      try {
        x[static_cast<Eigen::Index>(i)] = parse_double(fields[i]);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric && first) {
      first = false;
      continue;  // header
    }
    first = false;
    if (!numeric) throw FormatError("<stdin>", 0, "non-numeric row");
    if (x.size() == n_in + 1) x = x.tail(n_in).eval();  // leading frame column
    if (x.size() != n_in)
      throw FormatError("<stdin>", 0, "expected " + std::to_string(n_in) + " values, got " + std::to_string(x.size()));
    if (!x.allFinite()) throw FormatError("<stdin>", 0, "non-finite input");
    const Eigen::RowVectorXd y = model.predict(x);
    for (Eigen::Index k = 0; k < y.size(); ++k) out << (k ? "," : "") << format_double(y[k]);
    out << "\n" << std::flush;
  }
}

void cmd_run(const PipelineConfig& config, const fs::path& run_dir, std::ostream& log) {
  config.validate();
  const RunPaths run{run_dir};
  fs::create_directories(run_dir);
  write_text_file_atomic(run_dir / "config.json", config_to_json(config));
  cmd_plan(config, run.plan(), log);
  cmd_mesh(config, run.mesh(), log);
  cmd_synth(config, run_dir, log);
  cmd_label(config, run_dir, {}, {}, log);
  cmd_train(config, run_dir, log);
  cmd_eval(config, run_dir, log);
  if (config.interpolation) cmd_interp(config, run_dir, log);
  cmd_reconstruct(run_dir, {}, {}, config.reconstruct_iterations, config.reconstruct_frames, log);
  write_text_file_atomic(run_dir / "report.txt", cmd_report(run_dir));
}

}  // namespace stretchcap
