#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stretchcap/readout.hpp"
#include "temp_dir.hpp"

using namespace stretchcap;

namespace {

struct Grid {
  SensorLayout layout;
  std::vector<SensorCell> cells;
  std::vector<std::string> names;
};

// Top strips 1, 2; bottom strips A, B, Γ.
Grid two_by_three_grid() {
  Grid g;
  g.layout = make_grid_layout(2, 3, 90, 60, 2);
  g.cells = build_cells(g.layout);
  for (const auto& c : g.cells) g.names.push_back(cell_name(g.layout, c));
  return g;
}

std::vector<std::string> names_of(const Grid& g, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int i : ids) out.push_back(g.names[static_cast<std::size_t>(i)]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Combination, TwoByThreeGridSourceSets) {
  const auto g = two_by_three_grid();
  EXPECT_EQ(names_of(g, cells_for_combination(g.layout, g.cells, {"1", "Γ"})),
            (std::vector<std::string>{"1A", "1B", "2Γ"}));
  EXPECT_EQ(names_of(g, cells_for_combination(g.layout, g.cells, {"1"})),
            (std::vector<std::string>{"1A", "1B", "1Γ"}));
  EXPECT_TRUE(cells_for_combination(g.layout, g.cells, {"1", "2", "A", "B", "Γ"}).empty());
  EXPECT_THROW(cells_for_combination(g.layout, g.cells, {"Q"}), LayoutError);
}

TEST(Combination, SimulatedRowSumsTheCaptionCells) {
  const auto g = two_by_three_grid();
  const auto plan = build_plan(g.layout, g.cells);
  Eigen::VectorXd c = Eigen::VectorXd::LinSpaced(6, 1.0, 6.0);
  const auto m = simulate_measurements(plan, c);
  for (int r = 0; r < plan.num_rows(); ++r) {
    if (plan.source_sets[r] != std::vector<std::string>{"1", "Γ"}) continue;
    double expected = 0.0;
    for (int k = 0; k < 6; ++k)
      if (g.names[k] == "1A" || g.names[k] == "1B" || g.names[k] == "2Γ") expected += c[k];
    EXPECT_DOUBLE_EQ(m[r], expected);
    EXPECT_DOUBLE_EQ(simulate_measurements(plan, Eigen::VectorXd::Ones(6))[r], 3.0);
    return;
  }
  FAIL() << "no row with sources {1, Γ}";
}

TEST(Mandatory, PairRowsComeFirstAndBlockHasFullRank) {
  const auto g = two_by_three_grid();
  const auto rows = build_mandatory(g.layout, g.cells);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].sources, (std::vector<std::string>{"1", "A"}));
  for (const auto& r : rows) EXPECT_EQ(r.kind, RowKind::Mandatory);
}

TEST(Mandatory, FullRankOnEveryGridUpToSix) {
  for (int k = 1; k <= 6; ++k)
    for (int n = 1; n <= 6; ++n) {
      const auto layout = make_grid_layout(k, n, 30.0 * n, 30.0 * k, 2);
      const auto cells = build_cells(layout);
      const auto rows = build_mandatory(layout, cells);
      ASSERT_EQ(static_cast<int>(rows.size()), k * n);
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k * n, k * n);
      for (int r = 0; r < k * n; ++r)
        for (int c : rows[static_cast<std::size_t>(r)].cells) m(r, c) = 1.0;
      const auto sv = singular_values(m);
      EXPECT_GT(sv[sv.size() - 1] / sv[0], 1e-8) << k << "x" << n;
    }
}

TEST(Mandatory, SingleCellDecodesAsIdentity) {
  const auto layout = make_grid_layout(1, 1, 30, 30, 2);
  const auto cells = build_cells(layout);
  const auto plan = build_plan(layout, cells, ExtraPolicy::none());
  ASSERT_EQ(plan.num_rows(), 1);
  EXPECT_EQ(plan.matrix(0, 0), 1.0);
  EXPECT_NEAR(decode(plan, Eigen::VectorXd::Constant(1, 1.7)).cells[0], 1.7, 1e-15);
}

TEST(Mandatory, PairsOnlyNamesDependentRows) {
  // On a 1x1 grid the only pair drives both plates: an empty row.
  const auto layout = make_grid_layout(1, 1, 30, 30, 2);
  const auto cells = build_cells(layout);
  try {
    build_mandatory(layout, cells, MandatoryPolicy::PairsOnly);
    FAIL() << "expected RankError";
  } catch (const RankError& e) {
    EXPECT_EQ(e.dependent_rows(), std::vector<int>{0});
  }
  // 2 x n grids: the sum of the two pair rows of one column equals the sum
  // of the other column's, so pairs alone cannot be full rank.
  const auto g = two_by_three_grid();
  try {
    build_mandatory(g.layout, g.cells, MandatoryPolicy::PairsOnly);
    FAIL() << "expected RankError";
  } catch (const RankError& e) {
    const auto& rows = e.dependent_rows();
    ASSERT_FALSE(rows.empty());
    const auto pairs = g.cells.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(pairs));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& c = g.cells[static_cast<std::size_t>(rows[i])];
      const auto ids = cells_for_combination(g.layout, g.cells,
                                             {g.layout.strips[c.top_strip].id, g.layout.strips[c.bottom_strip].id});
      for (int id : ids) m(static_cast<Eigen::Index>(i), id) = 1.0;
    }
    // Dependent as a set, independent after dropping any one row.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    EXPECT_LT(lu.rank(), static_cast<int>(rows.size()));
    for (std::size_t drop = 0; drop < rows.size(); ++drop) {
      Eigen::MatrixXd sub(m.rows() - 1, m.cols());
      for (Eigen::Index r = 0, o = 0; r < m.rows(); ++r)
        if (r != static_cast<Eigen::Index>(drop)) sub.row(o++) = m.row(r);
      EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(sub).rank(), sub.rows());
    }
  }
}

TEST(Mandatory, PrototypeHas92IndependentRows) {
  const auto layout = make_prototype_layout();
  const auto cells = build_cells(layout);
  const auto plan = build_plan(layout, cells);
  EXPECT_EQ(plan.num_mandatory(), 92);
  const auto sv = singular_values(plan.mandatory_only().matrix);
  EXPECT_GT(sv[91] / sv[0], 1e-8);
}

TEST(Extra, SingleStripFamilyOnGrid) {
  const auto g = two_by_three_grid();
  const auto mandatory = build_mandatory(g.layout, g.cells);
  ExtraPolicy single{true, false};
  const auto extra = build_extra(g.layout, g.cells, mandatory, single);
  // Five strips, minus any whose row already sits in the mandatory block.
  int duplicates = 0;
  for (const auto& s : g.layout.strips) {
    const auto ids = cells_for_combination(g.layout, g.cells, {s.id});
    for (const auto& r : mandatory) duplicates += (r.cells == ids);
  }
  EXPECT_EQ(static_cast<int>(extra.size()), 5 - duplicates);
  for (const auto& r : extra) EXPECT_EQ(r.kind, RowKind::Extra);
  EXPECT_TRUE(build_extra(g.layout, g.cells, mandatory, ExtraPolicy::none()).empty());
}

TEST(Extra, PolicyTextRoundTrip) {
  for (const std::string t : {"single+pairs", "single", "pairs", "none"})
    EXPECT_EQ(ExtraPolicy::parse(t).to_string(), t);
  EXPECT_THROW(ExtraPolicy::parse("all"), std::invalid_argument);
}

TEST(Decode, PseudoinverseIsLeftInverse) {
  const auto layout = make_prototype_layout();
  const auto plan = build_plan(layout, build_cells(layout));
  const Eigen::MatrixXd eye = plan.pseudoinverse * plan.matrix;
  EXPECT_LT((eye - Eigen::MatrixXd::Identity(92, 92)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Decode, NoiselessRoundTripAndOneHot) {
  const auto layout = make_prototype_layout();
  const auto plan = build_plan(layout, build_cells(layout));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd c(92);
    for (int i = 0; i < 92; ++i) c[i] = u(rng);
    const auto d = decode(plan, simulate_measurements(plan, c));
    EXPECT_LT(((d.cells - c).array() / c.array()).abs().maxCoeff(), 1e-9);
    EXPECT_LT(d.residual, 1e-9);
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(92);
  e[17] = 1.0;
  EXPECT_EQ(simulate_measurements(plan, e), plan.matrix.col(17));
  const auto zero = decode(plan, Eigen::VectorXd::Zero(plan.num_rows()));
  EXPECT_EQ(zero.cells.norm(), 0.0);
  EXPECT_EQ(zero.residual, 0.0);
}

TEST(Decode, RejectsBadInput) {
  const auto g = two_by_three_grid();
  const auto plan = build_plan(g.layout, g.cells);
  EXPECT_THROW(decode(plan, Eigen::VectorXd::Zero(3)), std::invalid_argument);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(plan.num_rows());
  m[0] = std::nan("");
  EXPECT_THROW(decode(plan, m), std::domain_error);
  EXPECT_THROW(simulate_measurements(plan, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(Decode, BatchMatchesSingle) {
  const auto g = two_by_three_grid();
  const auto plan = build_plan(g.layout, g.cells);
  Eigen::MatrixXd frames = Eigen::MatrixXd::Random(4, plan.num_rows());
  const auto batch = decode_frames(plan, frames);
  for (int r = 0; r < 4; ++r)
    EXPECT_LT((batch.row(r).transpose() - decode(plan, frames.row(r).transpose()).cells).norm(), 1e-12);
}

TEST(PlanJson, RoundTrip) {
  const auto g = two_by_three_grid();
  auto plan = build_plan(g.layout, g.cells);
  plan.layout_hash = layout_hash(g.layout);
  TempDir dir;
  save_plan(dir / "plan.json", plan);
  const auto back = load_plan(dir / "plan.json");
  EXPECT_EQ(back.matrix, plan.matrix);
  EXPECT_EQ(back.row_kind, plan.row_kind);
  EXPECT_EQ(back.source_sets, plan.source_sets);
  EXPECT_EQ(back.cell_names, plan.cell_names);
  EXPECT_EQ(back.layout_hash, plan.layout_hash);
  EXPECT_LT((back.pseudoinverse - plan.pseudoinverse).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Timer, HundredPicofaradsAt25kHz) {
  const TimerConfig timer;
  EXPECT_NEAR(frequency_to_capacitance(timer, 25583.0), 100e-12, 0.1e-12);
  EXPECT_NEAR(frequency_to_capacitance(timer, 25583.0), 1.0 / (25583.0 * 564e3 * std::log(2.0)), 1e-24);
  const double c1 = frequency_to_capacitance(timer, 10e3), c2 = frequency_to_capacitance(timer, 20e3);
  EXPECT_NEAR(c1 / c2, 2.0, 1e-14);
}

TEST(Timer, ParasiticCalibration) {
  TimerConfig timer;
  const double open = frequency_to_capacitance(timer, 50e3);
  timer.parasitic = open;
  EXPECT_THROW(frequency_to_capacitance(timer, 50e3), std::domain_error);  // net zero is not positive
  EXPECT_NEAR(frequency_to_capacitance(timer, 25e3), open, 1e-12 * open);
  EXPECT_NEAR(capacitance_to_frequency(timer, frequency_to_capacitance(timer, 25e3)), 25e3, 1e-8);
  timer.r1 = 0.0;
  EXPECT_THROW(timer.validate(), std::invalid_argument);
}

TEST(Timer, FrameTimeSumsRowPeriods) {
  const TimerConfig timer;
  Eigen::VectorXd rows(3);
  rows << 100e-12, 200e-12, 50e-12;
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) expected += 2.0 / capacitance_to_frequency(timer, rows[i]);
  EXPECT_NEAR(frame_time(timer, rows, 2.0), expected, 1e-18);
}

TEST(Timer, RawTraceConversion) {
  FrameTable raw;
  raw.columns = {"row_0_freq_hz", "row_1_freq_hz"};
  raw.frames = {0};
  raw.values.resize(1, 2);
  raw.values << 25583.0, std::nan("");
  const auto m = frequencies_to_measurements(raw, TimerConfig{});
  EXPECT_EQ(m.columns, (std::vector<std::string>{"row_0", "row_1"}));
  EXPECT_NEAR(m.values(0, 0), 100e-12, 0.1e-12);
  EXPECT_TRUE(std::isnan(m.values(0, 1)));
}
