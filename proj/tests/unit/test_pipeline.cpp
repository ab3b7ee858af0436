#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "stretchcap/io.hpp"
#include "stretchcap/pipeline.hpp"
#include "temp_dir.hpp"

namespace fs = std::filesystem;
using namespace stretchcap;

namespace {

const fs::path kData = fs::path(STRETCHCAP_SOURCE_DIR) / "data";

PipelineConfig quick_config() { return load_config(kData / "configs" / "quick.json"); }

std::string read_or_empty(const fs::path& p) { return fs::exists(p) ? read_text_file(p) : std::string(); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STRETCHCAP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One full quick run shared by the tests below.
class QuickRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    std::ostringstream log;
    cmd_run(quick_config(), dir_->path() / "run", log);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path run() { return dir_->path() / "run"; }
  static TempDir* dir_;
};
TempDir* QuickRun::dir_ = nullptr;

}  // namespace

TEST(Config, JsonRoundTrip) {
  const auto a = quick_config();
  const std::string text = config_to_json(a);
  const auto b = parse_config(text);
  EXPECT_EQ(config_to_json(b), text);
  EXPECT_EQ(b.markers, 4);
  EXPECT_EQ(b.test_frames, 100);
  EXPECT_EQ(b.test_seed, 4004u);
  EXPECT_EQ(b.scenario.kind, ScenarioKind::FlatPoke);
  EXPECT_EQ(b.train.hidden, (std::vector<int>{16, 16}));
}

TEST(Config, ShippedConfigsValidate) {
  for (const auto& e : fs::directory_iterator(kData / "configs")) {
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(load_config(e.path()).validate());
  }
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  const auto c = quick_config();
  EXPECT_TRUE(fs::exists(c.layout));
}

TEST(Config, RejectsBadValues) {
  auto c = quick_config();
  c.markers = 2;
  EXPECT_ANY_THROW(c.validate());
  c = quick_config();
  c.train.epochs = 0;
  EXPECT_ANY_THROW(c.validate());
  EXPECT_ANY_THROW(parse_config("{\"seed\": 1}"));
}

TEST(RunLockTest, SecondLockFails) {
  TempDir tmp;
  {
    RunLock a(tmp.path());
    EXPECT_THROW(RunLock b(tmp.path()), PipelineError);
  }
  EXPECT_NO_THROW(RunLock c(tmp.path()));
}

TEST(Report, MarksMissingSections) {
  TempDir tmp;
  const std::string r = cmd_report(tmp.path());
  EXPECT_NE(r.find("(missing: eval/errors.csv)"), std::string::npos);
  EXPECT_NE(r.find("(missing: label/spans.csv)"), std::string::npos);
  EXPECT_NE(r.find("(missing: model/loss.csv)"), std::string::npos);
  EXPECT_NE(r.find("(missing: recon/recon.txt)"), std::string::npos);
}

TEST(Report, FrameObjName) {
  EXPECT_EQ(frame_obj_name(0), "frame_000000.obj");
  EXPECT_EQ(frame_obj_name(1234), "frame_001234.obj");
}

TEST(Stages, MissingInputNamesTheStage) {
  TempDir tmp;
  std::ostringstream log;
  try {
    cmd_train(quick_config(), tmp.path(), log);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("mesh"), std::string::npos) << e.what();
  }
}

TEST_F(QuickRun, WritesAllOutputs) {
  for (const char* p : {"config.json", "plan.json", "mesh/rest.obj", "train/session.csv", "train/capacitance.csv",
                        "test/capacitance.csv", "test/markers_true.csv", "label/labeled.csv", "label/spans.csv",
                        "label/score.json", "model/model.bin", "model/linear.json", "model/loss.csv",
                        "eval/errors.csv", "eval/per_frame_max.csv", "recon/recon.txt", "report.txt"})
    EXPECT_TRUE(fs::exists(run() / p)) << p;
  int objs = 0;
  for (const auto& e : fs::directory_iterator(run() / "recon"))
    if (e.path().extension() == ".obj") ++objs;
  EXPECT_EQ(objs, 5);
}

TEST_F(QuickRun, ReportRegeneratesIdentically) {
  EXPECT_EQ(cmd_report(run()), read_text_file(run() / "report.txt"));
  EXPECT_EQ(cmd_report(run()).find("(missing"), cmd_report(run()).find("(missing: interp"));
}

TEST_F(QuickRun, RerunIsByteIdentical) {
  TempDir tmp;
  std::ostringstream log;
  cmd_run(quick_config(), tmp.path(), log);
  for (const auto& e : fs::recursive_directory_iterator(run())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), run());
    if (rel == "recon/recon.txt" || rel == "report.txt") continue;  // wall-clock fps
    EXPECT_EQ(read_text_file(e.path()), read_or_empty(tmp.path() / rel)) << rel;
  }
}

TEST_F(QuickRun, CleanLabelingIsPerfect) {
  const std::string score = read_text_file(run() / "label" / "score.json");
  EXPECT_NE(score.find("\"accuracy\": 1.0"), std::string::npos) << score;
}

TEST_F(QuickRun, HashMismatchIsFatal) {
  TempDir tmp;
  fs::copy(run(), tmp.path(), fs::copy_options::recursive);
  auto model = load_regressor(tmp.path() / "model" / "model.bin");
  model.layout_hash ^= 1;
  save_regressor(tmp.path() / "model" / "model.bin", model);
  std::ostringstream log;
  EXPECT_THROW(cmd_eval(quick_config(), tmp.path(), log), PipelineError);
  EXPECT_THROW(cmd_reconstruct(tmp.path(), {}, {}, 5, 2, log), PipelineError);
}

TEST_F(QuickRun, PredictStreamAnswersEveryRow) {
  const auto cap = read_frame_table(run() / "test" / "capacitance.csv");
  std::ostringstream in_text;
  for (int t = 0; t < 3; ++t) {
    for (Eigen::Index k = 0; k < cap.values.cols(); ++k) in_text << (k ? "," : "") << cap.values(t, k);
    in_text << "\n";
  }
  std::istringstream in(in_text.str());
  std::ostringstream out;
  cmd_predict_stream(run() / "model" / "model.bin", in, out);
  std::istringstream lines(out.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    EXPECT_EQ(split_csv_line(line).size(), 12u);  // 4 markers x 3
  }
  EXPECT_EQ(n, 3);
}

TEST(Evaluate, OracleGivesZeroError) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Random(20, 9);
  const auto r = evaluate(y, y);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.max, 0.0);
  EXPECT_EQ(r.stddev, 0.0);
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const std::string config = (kData / "configs" / "quick.json").string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("plan --out " + tmp.path().string()), 1);
  EXPECT_EQ(run_cli("plan --config /nonexistent.json --out " + tmp.path().string()), 1);
  EXPECT_EQ(run_cli("plan --config " + config + " --out " + tmp.path().string()), 0);
  EXPECT_TRUE(fs::exists(tmp / "plan.json"));
  // train without synth/label outputs is a runtime failure
  EXPECT_EQ(run_cli("train --config " + config + " --out " + tmp.path().string()), 2);
  EXPECT_EQ(run_cli("layout --preset grid --top 2 --bottom 3 --out " + (tmp / "grid.json").string()), 0);
  EXPECT_NO_THROW(load_layout(tmp / "grid.json"));
}

// Marker indices depend on the mesh; the study's lines must still follow the bend.
TEST(Config, BendStudyMarkersTrackTheBend) {
  const auto c = load_config(kData / "configs" / "bend_study.json");
  ASSERT_TRUE(c.interpolation);
  const auto layout = load_layout(c.layout);
  const auto mesh = build_rest_mesh(layout, build_cells(layout), c.edge_length, c.shape, c.markers, c.sphere_radius,
                                    stage_seed(c.seed, 0));
  const auto& m = c.interpolation->markers;
  double previous = -1.0;
  for (double theta = 0.0; theta <= 90.0; theta += 10.0) {
    const auto v = deform_frame(mesh, c.scenario, theta, 1);
    Eigen::RowVectorXd row(3 * static_cast<Eigen::Index>(mesh.marker_vertices.size()));
    for (std::size_t k = 0; k < mesh.marker_vertices.size(); ++k)
      row.segment<3>(3 * static_cast<Eigen::Index>(k)) = v.row(mesh.marker_vertices[k]);
    const double alpha = marker_line_angle(row, m[0], m[1], m[2], m[3]);
    EXPECT_GT(alpha, previous) << theta;
    previous = alpha;
    if (theta == 90.0) EXPECT_GT(alpha, c.interpolation->extrapolation_gamma);
  }
}
