// stretchcap: command-line driver for the sensing pipeline.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stretchcap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace stretchcap;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "pipeline config JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "run directory")->required();
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

// Config problems are usage errors (exit 1), not runtime failures.
PipelineConfig config_of(const Common& c) {
  try {
    PipelineConfig config = load_config(c.config);
    if (c.seed) config.seed = *c.seed;
    config.validate();
    return config;
  } catch (const std::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  }
}

std::vector<std::pair<std::string, int>> parse_seeds(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--seeds", "expected label=vertex, got " + item);
    out.emplace_back(item.substr(0, eq), std::stoi(item.substr(eq + 1)));
  }
  if (!out.empty() && out.size() != 3) throw CLI::ValidationError("--seeds", "exactly three label=vertex pairs");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stretchcap: capacitive stretch sensor array pipeline"};
  app.require_subcommand(1);

  // layout
  std::string preset = "prototype", layout_out;
  int top = 3, bottom = 2;
  double width = 120, height = 120, gap = 2;
  auto* layout = app.add_subcommand("layout", "write a preset layout file");
  layout->add_option("--preset", preset, "prototype or grid")->check(CLI::IsMember({"prototype", "grid"}));
  layout->add_option("--top", top, "grid: horizontal strips");
  layout->add_option("--bottom", bottom, "grid: vertical strips");
  layout->add_option("--width", width, "grid: sheet width (mm)");
  layout->add_option("--height", height, "grid: sheet height (mm)");
  layout->add_option("--gap", gap, "grid: gap between strips (mm)");
  layout->add_option("--out", layout_out, "output JSON")->required();

  Common plan_c, mesh_c, synth_c, label_c, train_c, eval_c, interp_c, run_c;
  auto* plan = app.add_subcommand("plan", "build the measurement plan");
  add_common(plan, plan_c);
  auto* mesh = app.add_subcommand("mesh", "mesh the layout and pick marker vertices");
  add_common(mesh, mesh_c);
  auto* synth = app.add_subcommand("synth", "synthesize train and test sessions into a run directory");
  add_common(synth, synth_c);

  std::string decode_plan, decode_input, decode_out;
  bool frequencies = false;
  TimerConfig timer;
  auto* decode = app.add_subcommand("decode", "decode measurement rows into per-cell values");
  decode->add_option("--plan", decode_plan, "plan JSON")->required()->check(CLI::ExistingFile);
  decode->add_option("--input", decode_input, "measurement CSV")->required()->check(CLI::ExistingFile);
  decode->add_flag("--frequencies", frequencies, "input columns are timer frequencies (Hz)");
  decode->add_option("--r1", timer.r1, "timer R1 (ohm)");
  decode->add_option("--r2", timer.r2, "timer R2 (ohm)");
  decode->add_option("--parasitic", timer.parasitic, "parasitic capacitance (F)");
  decode->add_option("--out", decode_out, "output CSV")->required();

  std::vector<std::string> seed_pairs;
  std::string edits;
  std::optional<double> tau;
  auto* label = app.add_subcommand("label", "assign raw tracks to marker vertices");
  add_common(label, label_c);
  label->add_option("--seeds", seed_pairs, "three label=vertex pairs visible in frame 0");
  label->add_option("--edits", edits, "edits JSON replayed before labeling")->check(CLI::ExistingFile);
  label->add_option("--tau", tau, "acceptance threshold (mm)");

  auto* train_cmd = app.add_subcommand("train", "train the regressor and the linear baseline");
  add_common(train_cmd, train_c);
  auto* eval = app.add_subcommand("eval", "evaluate both models on the test session");
  add_common(eval, eval_c);
  auto* interp = app.add_subcommand("interp", "angle-filter interpolation study");
  add_common(interp, interp_c);

  std::string recon_run, recon_input, recon_out;
  int recon_iterations = 20, recon_frames = 0;
  auto* recon = app.add_subcommand("reconstruct", "stream a trace through decode, regressor and deformation");
  recon->add_option("--run", recon_run, "run directory with model, mesh and plan")->required()->check(CLI::ExistingDirectory);
  recon->add_option("--input", recon_input, "trace CSV (cell values or measurement rows)")->check(CLI::ExistingFile);
  recon->add_option("--out", recon_out, "OBJ directory (default <run>/recon)");
  recon->add_option("--iterations", recon_iterations, "deformation iterations per frame")->check(CLI::PositiveNumber);
  recon->add_option("--frames", recon_frames, "limit the number of frames (0 = all)")->check(CLI::NonNegativeNumber);

  std::string report_run;
  auto* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("--run", report_run, "run directory")->required()->check(CLI::ExistingDirectory);

  std::string predict_model;
  bool stream = false;
  auto* predict = app.add_subcommand("predict", "predict marker positions from capacitance rows");
  predict->add_option("--model", predict_model, "model file")->required()->check(CLI::ExistingFile);
  predict->add_flag("--stream", stream, "read rows from stdin and answer line by line")->required();

  auto* run = app.add_subcommand("run", "full pipeline: plan, mesh, synth, label, train, eval, report");
  add_common(run, run_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    std::ostream& log = std::cerr;
    if (*layout) {
      cmd_layout(preset, top, bottom, width, height, gap, layout_out);
    } else if (*plan) {
      cmd_plan(config_of(plan_c), fs::path(plan_c.out) / "plan.json", log);
    } else if (*mesh) {
      cmd_mesh(config_of(mesh_c), fs::path(mesh_c.out) / "mesh" / "rest.obj", log);
    } else if (*synth) {
      const auto config = config_of(synth_c);
      RunLock lock(synth_c.out);
      cmd_synth(config, synth_c.out, log);
    } else if (*decode) {
      timer.validate();
      cmd_decode(decode_plan, decode_input, frequencies, timer, decode_out, log);
    } else if (*label) {
      auto config = config_of(label_c);
      if (tau) config.label.tau = *tau;
      const auto seeds = parse_seeds(seed_pairs);
      RunLock lock(label_c.out);
      cmd_label(config, label_c.out, seeds, edits, log);
    } else if (*train_cmd) {
      const auto config = config_of(train_c);
      RunLock lock(train_c.out);
      cmd_train(config, train_c.out, log);
    } else if (*eval) {
      const auto config = config_of(eval_c);
      RunLock lock(eval_c.out);
      cmd_eval(config, eval_c.out, log);
    } else if (*interp) {
      const auto config = config_of(interp_c);
      RunLock lock(interp_c.out);
      cmd_interp(config, interp_c.out, log);
    } else if (*recon) {
      RunLock lock(recon_run);
      cmd_reconstruct(recon_run, recon_input, recon_out, recon_iterations, recon_frames, log);
    } else if (*report) {
      const std::string text = cmd_report(report_run);
      write_text_file_atomic(fs::path(report_run) / "report.txt", text);
      std::cout << text;
    } else if (*predict) {
      std::ios::sync_with_stdio(false);
      cmd_predict_stream(predict_model, std::cin, std::cout);
    } else if (*run) {
      const auto config = config_of(run_c);
      RunLock lock(run_c.out);
      cmd_run(config, run_c.out, log);
      std::cout << cmd_report(run_c.out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
