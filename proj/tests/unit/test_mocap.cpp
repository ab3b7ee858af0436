#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "stretchcap/mocap.hpp"
#include "temp_dir.hpp"

using namespace stretchcap;

namespace {

SyntheticSession fragmented_session(int frames, std::uint64_t seed, int outliers = 2) {
  SynthOptions opt;
  opt.corruption.break_rate = 0.02;
  opt.corruption.gap_mean = 3.0;
  opt.corruption.permute_labels = true;
  opt.corruption.outlier_tracks = outliers;
  opt.corruption.noise_sigma = 1.0;
  opt.corruption.seed = seed;
  auto scenario = fixtures::wrist_scenario(frames);
  scenario.seed = seed;
  return synthesize(fixtures::cylinder_mesh(), scenario, opt);
}

SyntheticSession clean_session(int frames) {
  return synthesize(fixtures::cylinder_mesh(), fixtures::wrist_scenario(frames));
}

LabeledSession label(const SyntheticSession& syn, const LabelOptions& options = {}) {
  const auto& mesh = fixtures::cylinder_mesh();
  const auto init = initialize_assignment(syn.session, mesh, fixtures::seed_pairs(syn));
  return label_tracks(syn.session, mesh, init, options);
}

}  // namespace

TEST(SessionCsv, RoundTrip) {
  const auto syn = fragmented_session(60, 3);
  const auto text = format_session_csv(syn.session);
  const auto back = parse_session_csv(text);
  ASSERT_EQ(back.frames, syn.session.frames);
  ASSERT_EQ(back.tracks.size(), syn.session.tracks.size());
  for (std::size_t j = 0; j < back.tracks.size(); ++j) {
    const auto k = syn.session.track_index(back.tracks[j].label);
    ASSERT_GE(k, 0);
    const auto& a = syn.session.tracks[static_cast<std::size_t>(k)];
    EXPECT_EQ(back.tracks[j].visible, a.visible);
    for (int t = 0; t < back.frames; ++t)
      if (a.visible[static_cast<std::size_t>(t)])
        EXPECT_EQ(back.tracks[j].positions.row(t), a.positions.row(t));
  }
  for (int t = 0; t < back.frames; ++t)
    EXPECT_LT((back.transforms[t].rotation - syn.session.transforms[t].rotation).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SessionCsv, EmptyAndMalformed) {
  EXPECT_THROW(parse_session_csv(""), FormatError);
  const std::string header = "frame,time_s,T00,T01,T02,T03,T10,T11,T12,T13,T20,T21,T22,T23,label,x_mm,y_mm,z_mm\n";
  EXPECT_THROW(parse_session_csv(header), FormatError);
  try {
    parse_session_csv(header + "0,0,1,0,0,0,0,1,0,0,0,0,1,0,a,1,2\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(SessionCsv, CapacitanceFrameCountMustMatch) {
  auto syn = clean_session(20);
  FrameTable wrong;
  wrong.columns = {"c0"};
  wrong.frames = {0};
  wrong.values = Eigen::MatrixXd::Ones(1, 1);
  EXPECT_THROW(attach_capacitance(syn.session, wrong), std::invalid_argument);
}

TEST(SessionCsv, UnfragmentedExportHasOneTrackPerMarker) {
  const auto syn = clean_session(30);
  EXPECT_EQ(syn.session.tracks.size(), fixtures::cylinder_mesh().marker_vertices.size());
}

TEST(InitialAssignment, ExactRestFrameGivesTruePairing) {
  const auto syn = clean_session(5);
  const auto& mesh = fixtures::cylinder_mesh();
  const auto init = initialize_assignment(syn.session, mesh, fixtures::seed_pairs(syn));
  ASSERT_EQ(init.pairs.size(), mesh.marker_vertices.size());
  for (const auto& [vertex, label] : init.pairs)
    EXPECT_EQ(mesh.marker_vertices[static_cast<std::size_t>(syn.truth.at(label))], vertex);
  EXPECT_TRUE(init.ambiguous.empty());
}

TEST(InitialAssignment, TwoMillimetreNoiseKeepsPairing) {
  auto syn = clean_session(5);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 2.0);
  for (auto& tr : syn.session.tracks) tr.positions.row(0) += Eigen::RowVector3d(n(rng), n(rng), n(rng));
  const auto& mesh = fixtures::cylinder_mesh();
  const auto init = initialize_assignment(syn.session, mesh, fixtures::seed_pairs(syn));
  for (const auto& [vertex, label] : init.pairs)
    EXPECT_EQ(mesh.marker_vertices[static_cast<std::size_t>(syn.truth.at(label))], vertex);
}

TEST(InitialAssignment, NearbyDecoyIsFlaggedAmbiguous) {
  auto syn = clean_session(5);
  const auto seeds = fixtures::seed_pairs(syn);
  std::set<std::string> seed_labels;
  for (const auto& s : seeds) seed_labels.insert(s.first);
  RawTrack decoy;
  for (const auto& tr : syn.session.tracks) {
    if (seed_labels.count(tr.label)) continue;
    decoy = tr;
    break;
  }
  decoy.label = "decoy";
  decoy.positions.row(0) += Eigen::RowVector3d(0.5, 0.0, 0.0);
  syn.session.tracks.push_back(decoy);
  const auto init = initialize_assignment(syn.session, fixtures::cylinder_mesh(), seeds);
  EXPECT_FALSE(init.ambiguous.empty());
}

TEST(InitialAssignment, RejectsBadSeeds) {
  const auto syn = clean_session(5);
  auto seeds = fixtures::seed_pairs(syn);
  const auto& mesh = fixtures::cylinder_mesh();
  EXPECT_THROW(initialize_assignment(syn.session, mesh, {seeds[0], seeds[1]}), std::invalid_argument);
  auto dup = seeds;
  dup[2] = dup[1];
  EXPECT_THROW(initialize_assignment(syn.session, mesh, dup), std::invalid_argument);
  auto unknown = seeds;
  unknown[0].first = "nope";
  EXPECT_THROW(initialize_assignment(syn.session, mesh, unknown), std::invalid_argument);
}

TEST(Labeling, CleanSessionHasNoOutliersOrDiscards) {
  const auto syn = clean_session(80);
  const auto labeled = label(syn);
  EXPECT_TRUE(labeled.outlier_tracks.empty());
  EXPECT_TRUE(labeled.discarded_frames.empty());
  for (const auto& tr : syn.session.tracks) EXPECT_EQ(labeled.marker_of(tr.label), syn.truth.at(tr.label));
}

class FragmentedLabeling : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    syn_ = new SyntheticSession(fragmented_session(200, 21));
    labeled_ = new LabeledSession(label(*syn_));
  }
  static void TearDownTestSuite() {
    delete labeled_;
    delete syn_;
  }
  static SyntheticSession* syn_;
  static LabeledSession* labeled_;
};
SyntheticSession* FragmentedLabeling::syn_ = nullptr;
LabeledSession* FragmentedLabeling::labeled_ = nullptr;

TEST_F(FragmentedLabeling, RecoversFragmentsAndFlagsOutliers) {
  int fragments = 0, correct = 0, outliers = 0, flagged = 0;
  for (const auto& [label, marker] : syn_->truth) {
    if (marker < 0) {
      ++outliers;
      flagged += labeled_->marker_of(label) < 0;
    } else {
      ++fragments;
      correct += labeled_->marker_of(label) == marker;
    }
  }
  ASSERT_GT(fragments, 40);
  EXPECT_GE(correct, 0.95 * fragments);
  EXPECT_EQ(flagged, outliers);
}

TEST_F(FragmentedLabeling, AssignmentIsInjective) {
  std::set<std::string> seen;
  for (const auto& [vertex, labels] : labeled_->assignment)
    for (const auto& l : labels) EXPECT_TRUE(seen.insert(l).second) << l;
  for (const auto& l : labeled_->outlier_tracks) EXPECT_FALSE(seen.count(l));
}

TEST_F(FragmentedLabeling, ConstraintCountsNeverDecrease) {
  const auto& c = labeled_->constraint_counts;
  ASSERT_FALSE(c.empty());
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_GE(c[i], c[i - 1]);
}

TEST_F(FragmentedLabeling, DiscardRuleMatchesMissingPositions) {
  std::set<int> discarded(labeled_->discarded_frames.begin(), labeled_->discarded_frames.end());
  for (int t = 0; t < labeled_->frames; ++t)
    EXPECT_EQ(discarded.count(t) == 1, !labeled_->positions.row(t).allFinite()) << t;
}

TEST_F(FragmentedLabeling, Deterministic) {
  const auto again = label(*syn_);
  EXPECT_EQ(again.assignment, labeled_->assignment);
  EXPECT_EQ(again.outlier_tracks, labeled_->outlier_tracks);
  EXPECT_EQ(again.discarded_frames, labeled_->discarded_frames);
}

TEST_F(FragmentedLabeling, LabeledCsvRoundTrip) {
  const auto text = format_labeled_csv(*labeled_);
  const auto back = parse_labeled_csv(text, labeled_->marker_vertices, labeled_->frames);
  EXPECT_EQ(back.discarded_frames, labeled_->discarded_frames);
  for (int t = 0; t < labeled_->frames; ++t)
    if (labeled_->positions.row(t).allFinite()) EXPECT_EQ(back.positions.row(t), labeled_->positions.row(t));
}

TEST(Labeling, StaticOffSurfaceTrackIsOutlier) {
  auto syn = clean_session(60);
  RawTrack ghost;
  ghost.label = "ghost";
  ghost.visible.assign(60, 0);
  ghost.positions = Eigen::MatrixX3d::Constant(60, 3, std::nan(""));
  const Eigen::Vector3d far = syn.session.transforms[10].apply(Eigen::Vector3d(0.0, 0.0, 300.0));
  for (int t = 10; t < 50; ++t) {
    ghost.visible[static_cast<std::size_t>(t)] = 1;
    ghost.positions.row(t) = far.transpose();
  }
  syn.session.tracks.push_back(ghost);
  const auto labeled = label(syn);
  EXPECT_EQ(labeled.outlier_tracks, std::vector<std::string>{"ghost"});
}

TEST(Labeling, EditsForceOutlierAndVertex) {
  const auto syn = clean_session(40);
  const auto& mesh = fixtures::cylinder_mesh();
  const auto seeds = fixtures::seed_pairs(syn);
  std::set<std::string> seed_labels;
  for (const auto& s : seeds) seed_labels.insert(s.first);
  std::string victim;
  for (const auto& tr : syn.session.tracks)
    if (!seed_labels.count(tr.label)) {
      victim = tr.label;
      break;
    }
  const auto edits = parse_edits(R"([{"track": ")" + victim + R"(", "action": "force_outlier"}])");
  const auto init = initialize_assignment(syn.session, mesh, seeds);
  const auto labeled = label_tracks(syn.session, mesh, init, {}, edits);
  EXPECT_EQ(labeled.marker_of(victim), -1);
  EXPECT_EQ(labeled.discarded_frames.size(), 40u);
  EXPECT_THROW(parse_edits(R"([{"track": "a", "action": "explode"}])"), std::invalid_argument);
}

TEST(Labeling, SplitEditRenamesTail) {
  const auto syn = clean_session(40);
  const auto& label0 = syn.session.tracks[0].label;
  const auto split = apply_splits(syn.session, parse_edits(R"([{"track": ")" + label0 + R"(", "action": "split", "frame": 15}])"));
  const int head = split.track_index(label0), tail = split.track_index(label0 + "@15");
  ASSERT_GE(head, 0);
  ASSERT_GE(tail, 0);
  EXPECT_EQ(split.tracks[head].visible_count(), 15);
  EXPECT_EQ(split.tracks[tail].first_frame(), 15);
}

TEST(Stats, TwentyPercentDiscarded) {
  LabeledSession l;
  l.marker_vertices = {0, 1};
  l.frames = 10;
  l.positions = Eigen::MatrixXd::Zero(10, 6);
  l.synthetic = Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(10, 2);
  l.positions(3, 4) = std::nan("");
  l.positions(7, 0) = std::nan("");
  l.update_discarded();
  CaptureSession s;
  s.frames = 10;
  const auto stats = session_stats(l, s);
  EXPECT_DOUBLE_EQ(stats.discard_fraction, 0.2);
  EXPECT_DOUBLE_EQ(stats.marker_visibility[0], 0.9);
  EXPECT_DOUBLE_EQ(stats.marker_visibility[1], 0.9);
}

TEST_F(FragmentedLabeling, SpanTableHasOneRowPerTrack) {
  const auto stats = session_stats(*labeled_, syn_->session);
  EXPECT_EQ(stats.spans.size(), syn_->session.tracks.size());
  for (std::size_t j = 0; j < stats.spans.size(); ++j) {
    int covered = 0;
    for (const auto& [a, b] : stats.spans[j].spans) covered += b - a + 1;
    EXPECT_EQ(covered, syn_->session.tracks[j].visible_count());
  }
  EXPECT_EQ(stats.outlier_count, static_cast<int>(labeled_->outlier_tracks.size()));
}

TEST(SynthesizeMissing, KnockedOutMarkerIsFilledNearTruth) {
  const auto syn = clean_session(60);
  auto labeled = label(syn);
  const int knocked = 5;
  for (int t = 20; t < 40; ++t) labeled.positions.block(t, 3 * knocked, 1, 3).setConstant(std::nan(""));
  labeled.update_discarded();
  ASSERT_EQ(labeled.discarded_frames.size(), 20u);
  const auto filled = synthesize_missing(labeled, fixtures::cylinder_mesh());
  EXPECT_TRUE(filled.discarded_frames.empty());
  for (int t = 20; t < 40; ++t) {
    EXPECT_EQ(filled.synthetic(t, knocked), 1);
    const Eigen::RowVector3d err = filled.positions.block(t, 3 * knocked, 1, 3) - syn.true_markers.block(t, 3 * knocked, 1, 3);
    EXPECT_LT(err.norm(), 10.0) << t;
  }
}

TEST(SynthesizeMissing, UnderconstrainedFrameStaysDiscarded) {
  const auto syn = clean_session(10);
  auto labeled = label(syn);
  for (int m = 2; m < static_cast<int>(labeled.marker_vertices.size()); ++m)
    labeled.positions.block(4, 3 * m, 1, 3).setConstant(std::nan(""));
  labeled.update_discarded();
  const auto filled = synthesize_missing(labeled, fixtures::cylinder_mesh());
  EXPECT_EQ(filled.discarded_frames, std::vector<int>{4});
}
