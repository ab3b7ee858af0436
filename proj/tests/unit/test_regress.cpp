#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stretchcap/regress.hpp"
#include "temp_dir.hpp"

using namespace stretchcap;

namespace {

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Smooth nonlinear map from 5 inputs to 2 markers.
Dataset nonlinear_dataset(int n, std::uint64_t seed) {
  Dataset d;
  d.inputs = gaussian(n, 5, seed);
  d.targets.resize(n, 6);
  for (int i = 0; i < n; ++i) {
    const auto x = d.inputs.row(i);
    d.targets.row(i) << std::sin(x[0]) * 10, x[1] * x[2], std::tanh(x[3]) * 5, x[4], std::cos(x[0] + x[1]), 2 * x[2];
    d.frames.push_back(i);
  }
  return d;
}

TrainOptions small_options() {
  TrainOptions o;
  o.hidden = {32, 32};
  o.epochs = 40;
  o.batch_size = 32;
  o.learning_rate = 3e-3;
  o.seed = 5;
  return o;
}

}  // namespace

TEST(Gradient, FourEightSixWithBatchNorm) {
  Mlp net({4, 8, 6}, 3);
  // Non-trivial normalization parameters so every term is exercised.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()[i] *= u(rng);
  const Eigen::MatrixXd x = gaussian(16, 4, 1), y = gaussian(16, 6, 2);
  const double lambda = 1e-2;
  Eigen::VectorXd grad;
  net.loss(x, y, lambda, &grad);
  ASSERT_EQ(grad.size(), net.parameters().size());
  Eigen::VectorXd fd(grad.size());
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    const double keep = net.parameters()[k];
    net.parameters()[k] = keep + h;
    const double up = net.loss(x, y, lambda, nullptr);
    net.parameters()[k] = keep - h;
    const double down = net.loss(x, y, lambda, nullptr);
    net.parameters()[k] = keep;
    fd[k] = (up - down) / (2 * h);
  }
  EXPECT_LT((grad - fd).norm() / fd.norm(), 1e-4);
  for (Eigen::Index k = 0; k < grad.size(); ++k)
    EXPECT_LT(std::abs(grad[k] - fd[k]) / std::max({std::abs(grad[k]), std::abs(fd[k]), 1e-3}), 1e-4) << k;
}

TEST(Gradient, LossIsMeanSquaredErrorPlusWeightPenalty) {
  Mlp net({3, 4, 2}, 9);
  const Eigen::MatrixXd x = gaussian(8, 3, 1), y = gaussian(8, 2, 2);
  const double base = net.loss(x, y, 0.0, nullptr);
  const double penalized = net.loss(x, y, 0.5, nullptr);
  EXPECT_NEAR(penalized - base, 0.5 * net.parameters().squaredNorm(), 1e-9);
}

TEST(Mlp, ZeroFinalLayerOutputsItsBias) {
  Mlp net({5, 16, 16, 3}, 1);
  const int last = net.num_layers() - 1;
  net.weight(last).setZero();
  net.bias(last) << 1.0, -2.0, 3.5;
  const auto out = net.forward(gaussian(7, 5, 3));
  for (int i = 0; i < 7; ++i) EXPECT_EQ(out.row(i), Eigen::RowVector3d(1.0, -2.0, 3.5));
}

TEST(Mlp, PrototypeDimsAndDeterministicInference) {
  Mlp net({92, 64, 63}, 2);
  EXPECT_EQ(net.num_inputs(), 92);
  EXPECT_EQ(net.num_outputs(), 63);
  const auto x = gaussian(3, 92, 4);
  EXPECT_EQ(net.forward(x), net.forward(x));
  Eigen::MatrixXd bad = x;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(net.forward(bad), std::domain_error);
  EXPECT_THROW(net.forward(gaussian(1, 91, 1)), std::invalid_argument);
}

TEST(Normalization, TrainInputsBecomeStandard) {
  Eigen::MatrixXd x = gaussian(200, 4, 6) * 3.0;
  x.col(1).array() += 10.0;
  x.col(3).setConstant(2.0);
  const auto norm = InputNormalization::fit(x);
  EXPECT_EQ(norm.dead_channels, std::vector<int>{3});
  const auto z = norm.apply(x);
  for (int c = 0; c < 3; ++c) {
    const double mean = z.col(c).mean();
    const double var = (z.col(c).array() - mean).square().mean();
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
  EXPECT_TRUE(z.allFinite());
}

TEST(Training, OverfitsSmallSet) {
  auto data = nonlinear_dataset(64, 1);
  TrainOptions o;
  o.hidden = {64, 64};
  o.epochs = 1500;
  o.batch_size = 64;
  o.learning_rate = 3e-3;
  o.lambda = 0.0;
  o.validation_fraction = 0.0;
  const auto r = train(data, o);
  ASSERT_FALSE(r.diverged);
  EXPECT_LT(r.train_loss.back(), 1e-3 * r.train_loss.front());
}

TEST(Training, SeededDeterminism) {
  const auto data = nonlinear_dataset(300, 2);
  auto o = small_options();
  o.epochs = 5;
  const auto a = train(data, o), b = train(data, o);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_loss, b.val_loss);
  EXPECT_EQ(a.model.net.parameters(), b.model.net.parameters());
}

TEST(Training, SmoothedLossDescendsOverFirstHundredIterations) {
  // One full batch per epoch, so every epoch is one optimizer step.
  const auto data = nonlinear_dataset(256, 3);
  TrainOptions o;
  o.hidden = {64, 64};
  o.epochs = 100;
  o.validation_fraction = 0.0;
  o.seed = 1;
  const auto r = train(data, o);
  ASSERT_EQ(r.train_loss.size(), 100u);
  auto window = [&](int start) {
    double s = 0.0;
    for (int i = start; i < start + 10; ++i) s += r.train_loss[static_cast<std::size_t>(i)];
    return s / 10.0;
  };
  for (int s = 1; s + 10 <= 100; ++s) EXPECT_LE(window(s), window(s - 1)) << s;
}

TEST(Training, BestValidationSnapshot) {
  const auto data = nonlinear_dataset(1000, 3);
  auto o = small_options();
  o.epochs = 30;
  const auto r = train(data, o);
  ASSERT_EQ(r.val_loss.size(), 30u);
  ASSERT_GE(r.best_epoch, 0);
  EXPECT_EQ(r.val_loss[static_cast<std::size_t>(r.best_epoch)], *std::min_element(r.val_loss.begin(), r.val_loss.end()));
}

TEST(Training, LargerLambdaShrinksWeights) {
  const auto data = nonlinear_dataset(400, 4);
  double previous = 1e300;
  for (double lambda : {1e-5, 1e-2, 1.0}) {
    auto o = small_options();
    o.epochs = 20;
    o.lambda = lambda;
    const auto r = train(data, o);
    double w = 0.0;
    for (int l = 0; l < r.model.net.num_layers(); ++l) w += r.model.net.weight(l).squaredNorm();
    EXPECT_LT(w, previous) << lambda;
    previous = w;
  }
}

TEST(Training, NetworkBeatsLinearOnNonlinearTask) {
  const auto train_set = nonlinear_dataset(3000, 5), test_set = nonlinear_dataset(500, 6);
  auto o = small_options();
  o.epochs = 60;
  const auto nn = train(train_set, o);
  const auto lr = train_linear_baseline(train_set);
  const auto e_nn = evaluate(nn.model.predict(test_set.inputs), test_set.targets);
  const auto e_lr = evaluate(lr.predict(test_set.inputs), test_set.targets);
  EXPECT_LT(e_nn.mean, e_lr.mean);
}

TEST(Linear, ExactOnLinearTargetsAndDuplicatedChannels) {
  Dataset d;
  d.inputs = gaussian(200, 4, 7);
  d.inputs.col(3) = d.inputs.col(0);  // rank deficient
  Eigen::MatrixXd w = gaussian(4, 3, 8);
  w.row(3).setZero();
  d.targets = (d.inputs * w).rowwise() + Eigen::RowVector3d(1, 2, 3);
  const auto model = train_linear_baseline(d, 1e-12);
  EXPECT_LT(evaluate(model.predict(d.inputs), d.targets).max, 1e-8);
  EXPECT_THROW(train_linear_baseline(d, 0.0), std::invalid_argument);
}

TEST(Evaluate, HandBuiltDistances) {
  // Two frames, two markers; errors 1, 3, 1, 3 mm.
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(2, 6), pred = truth;
  pred(0, 0) = 1.0;
  pred(0, 4) = 3.0;
  pred(1, 2) = -1.0;
  pred(1, 3) = 3.0;
  const auto e = evaluate(pred, truth);
  EXPECT_DOUBLE_EQ(e.mean, 2.0);
  EXPECT_DOUBLE_EQ(e.max, 3.0);
  EXPECT_DOUBLE_EQ(e.stddev, 1.0);
  EXPECT_EQ(e.samples, 4);
  EXPECT_EQ(e.per_frame_max, (std::vector<double>{3.0, 3.0}));
  EXPECT_EQ(e.per_marker_mean, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(evaluate(truth, truth).max, 0.0);
  EXPECT_THROW(evaluate(truth, Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST(AngleFilter, RetainsOutsideBand) {
  // Angle sweep 0..90 deg between marker lines (0->1) and (2->3).
  Dataset d;
  const int n = 901;
  d.inputs = Eigen::MatrixXd::Zero(n, 1);
  d.targets = Eigen::MatrixXd::Zero(n, 12);
  for (int i = 0; i < n; ++i) {
    const double a = 0.1 * i * M_PI / 180.0;
    d.targets.row(i).segment(3, 3) << 1, 0, 0;
    d.targets.row(i).segment(6, 3) << 5, 5, 5;
    d.targets.row(i).segment(9, 3) << 5 + std::cos(a), 5 + std::sin(a), 5;
    d.frames.push_back(i);
  }
  const auto angle = [](const Eigen::RowVectorXd& t) { return marker_line_angle(t, 0, 1, 2, 3); };
  EXPECT_NEAR(angle(d.targets.row(450)), 45.0, 1e-9);
  const auto f = angle_filter(d, angle, 20.0, 40.0);
  EXPECT_NEAR(static_cast<double>(f.retained) / n, 70.0 / 90.0, 0.005);
  EXPECT_EQ(f.data.size(), f.retained);
  EXPECT_TRUE(f.warning.empty());
  EXPECT_EQ(angle_filter(d, angle, 100.0, -1.0).retained, n);  // empty band
  EXPECT_FALSE(angle_filter(d, angle, 0.0, 100.0, 10).warning.empty());
}

TEST(ModelFile, SaveLoadRoundTrip) {
  const auto data = nonlinear_dataset(200, 9);
  auto o = small_options();
  o.epochs = 3;
  auto r = train(data, o);
  r.model.layout_hash = 0x1234abcdULL;
  TempDir dir;
  save_regressor(dir / "model.bin", r.model);
  const auto back = load_regressor(dir / "model.bin");
  EXPECT_EQ(back.layout_hash, r.model.layout_hash);
  EXPECT_EQ(back.net.dims(), r.model.net.dims());
  EXPECT_EQ(back.predict(data.inputs), r.model.predict(data.inputs));
  write_text_file_atomic(dir / "junk.bin", "not a model");
  EXPECT_THROW(load_regressor(dir / "junk.bin"), FormatError);
}

TEST(Dataset, ChronologicalSplitAndDiscardedFrames) {
  LabeledSession l;
  l.marker_vertices = {0};
  l.frames = 10;
  l.positions = Eigen::MatrixXd::Ones(10, 3);
  l.synthetic = Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(10, 1);
  l.positions(4, 1) = std::nan("");
  l.update_discarded();
  FrameTable cap;
  cap.columns = {"c0", "c1"};
  for (int t = 0; t < 10; ++t) cap.frames.push_back(t);
  cap.values = gaussian(10, 2, 1);
  const auto d = build_dataset(l, cap);
  EXPECT_EQ(d.size(), 9);
  EXPECT_EQ(std::count(d.frames.begin(), d.frames.end(), 4), 0);
  const auto [tr, va] = split_chronological(d, 0.34);
  EXPECT_EQ(va.size(), 3);
  EXPECT_EQ(va.frames.front(), 7);
  EXPECT_EQ(tr.frames.back(), 6);
  cap.values.conservativeResize(9, 2);
  EXPECT_THROW(build_dataset(l, cap), std::invalid_argument);
}
