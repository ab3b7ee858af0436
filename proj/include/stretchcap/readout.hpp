#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stretchcap/io.hpp"
#include "stretchcap/layout.hpp"

namespace stretchcap {

enum class RowKind { Mandatory, Extra };

/// How the mandatory block is formed.
///  - Completed: top/bottom pair rows first, in (top, bottom) order, keeping
///    each one that is linearly independent of the rows kept so far; then the
///    block is completed to full rank from source sets of one top and two
///    bottom strips (or two top and one bottom), same-layer pairs and single
///    strips, in that order.
///  - PairsOnly: exactly one row per top/bottom pair forming a cell; a rank
///    deficiency is an error naming a minimal dependent subset of rows.
enum class MandatoryPolicy { Completed, PairsOnly };

struct ExtraPolicy {
  bool single_strip = true;
  bool pairs_same_layer = true;

  static ExtraPolicy none() { return {false, false}; }
  /// "single+pairs", "single", "pairs" or "none".
  static ExtraPolicy parse(const std::string& text);
  std::string to_string() const;
};

class RankError : public std::runtime_error {
 public:
  RankError(const std::string& what, std::vector<int> dependent_rows)
      : std::runtime_error(what), dependent_rows_(std::move(dependent_rows)) {}
  const std::vector<int>& dependent_rows() const { return dependent_rows_; }

 private:
  std::vector<int> dependent_rows_;
};

/// One combined measurement: the strips driven as source (all others are
/// ground) and the cells that end up in the measured capacitance.
struct PlanRow {
  std::vector<std::string> sources;
  std::vector<int> cells;
  RowKind kind = RowKind::Mandatory;
};

struct MeasurementPlan {
  Eigen::MatrixXd matrix;  // rows x cells, entries 0 or 1
  std::vector<RowKind> row_kind;
  std::vector<std::vector<std::string>> source_sets;
  Eigen::MatrixXd pseudoinverse;  // cells x rows
  std::vector<std::string> cell_names;
  std::string convention = "ratio";  // or "farads"
  std::uint64_t layout_hash = 0;

  int num_rows() const { return static_cast<int>(matrix.rows()); }
  int num_cells() const { return static_cast<int>(matrix.cols()); }
  int num_mandatory() const;
  /// Sub-plan made of the mandatory rows only, with its own pseudoinverse.
  MeasurementPlan mandatory_only() const;
};

std::string cell_name(const SensorLayout& layout, const SensorCell& cell);

/// Cells with exactly one plate on a source strip. Throws LayoutError on an
/// unknown strip id.
std::vector<int> cells_for_combination(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                                       const std::vector<std::string>& sources);

std::vector<PlanRow> build_mandatory(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                                     MandatoryPolicy policy = MandatoryPolicy::Completed);

/// Extra rows from the chosen families, skipping empty rows and rows equal to
/// one in `existing` or to an earlier extra row.
std::vector<PlanRow> build_extra(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                                 const std::vector<PlanRow>& existing, const ExtraPolicy& policy);

/// Assembles the matrix, checks the mandatory block's rank
/// (smallest/largest singular value > 1e-8) and precomputes the SVD
/// pseudoinverse (singular values below 1e-10 * largest dropped).
MeasurementPlan make_plan(const std::vector<PlanRow>& rows, const std::vector<std::string>& cell_names);

MeasurementPlan build_plan(const SensorLayout& layout, const std::vector<SensorCell>& cells,
                           const ExtraPolicy& extra = {}, MandatoryPolicy policy = MandatoryPolicy::Completed);

/// Singular values of a matrix, descending.
Eigen::VectorXd singular_values(const Eigen::MatrixXd& m);

/// C_m = M C_c plus optional N(0, sigma) noise on every measurement.
Eigen::VectorXd simulate_measurements(const MeasurementPlan& plan, const Eigen::VectorXd& cell_values,
                                      double sigma = 0.0, std::mt19937_64* rng = nullptr);

struct DecodeResult {
  Eigen::VectorXd cells;
  double residual = 0.0;  // || M c - C_m ||_2
};

DecodeResult decode(const MeasurementPlan& plan, const Eigen::VectorXd& measurements);

/// Row-per-frame batch decode.
Eigen::MatrixXd decode_frames(const MeasurementPlan& plan, const Eigen::MatrixXd& measurements);

std::string plan_to_json(const MeasurementPlan& plan);
MeasurementPlan plan_from_json(const std::string& text);
void save_plan(const std::filesystem::path& path, const MeasurementPlan& plan);
MeasurementPlan load_plan(const std::filesystem::path& path);

/// 555-style astable timer: f = 1 / (C (R1 + 2 R2) ln 2).
struct TimerConfig {
  double r1 = 470e3;       // ohms
  double r2 = 47e3;        // ohms
  double parasitic = 0.0;  // farads, subtracted after conversion

  void validate() const;
};

/// 1 / (f (R1 + 2 R2) ln 2) - parasitic. Throws std::domain_error when the
/// result is not positive.
double frequency_to_capacitance(const TimerConfig& timer, double frequency_hz);
/// Inverse of frequency_to_capacitance.
double capacitance_to_frequency(const TimerConfig& timer, double capacitance);

/// Time to acquire one frame when every row is measured for `cycles`
/// oscillator periods; `row_capacitance` are the net row capacitances.
double frame_time(const TimerConfig& timer, const Eigen::VectorXd& row_capacitance, double cycles = 1.0);

/// Converts a raw trace (`frame,row_0_freq_hz,...`) into measurements.
FrameTable frequencies_to_measurements(const FrameTable& raw, const TimerConfig& timer);

}  // namespace stretchcap
