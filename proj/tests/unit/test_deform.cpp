#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "stretchcap/deform.hpp"
#include "stretchcap/layout.hpp"

using namespace stretchcap;

namespace {

RigidTransform random_transform(std::mt19937_64& rng, double translation = 100.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  t.translation = translation * Eigen::Vector3d(n(rng), n(rng), n(rng));
  return t;
}

Eigen::MatrixX3d random_points(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  Eigen::MatrixX3d p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) << u(rng), u(rng), u(rng);
  return p;
}

double residual(const Eigen::MatrixX3d& s, const Eigen::MatrixX3d& t, const RigidTransform& x) {
  return (apply_transform(s, x) - t).squaredNorm();
}

const SensorMesh& cylinder() {
  static const SensorMesh mesh = [] {
    const auto layout = make_prototype_layout();
    MeshOptions opt;
    opt.target_edge_length = 10.0;
    return roll_to_cylinder(mesh_layout(layout, build_cells(layout), opt));
  }();
  return mesh;
}

PositionalConstraints end_rings(const Eigen::MatrixX3d& rest, double bend_deg, double weight = 1e4) {
  const double a = bend_deg * std::numbers::pi / 180.0;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Vector3d pivot(0.0, 0.0, 100.0);
  PositionalConstraints c;
  for (int v = 0; v < rest.rows(); ++v) {
    const Eigen::Vector3d p = rest.row(v).transpose();
    if (p.z() < 1e-6) c.push_back({v, p, weight});
    if (p.z() > 200.0 - 1e-6) c.push_back({v, rot * (p - pivot) + pivot, weight});
  }
  return c;
}

double max_constraint_error(const Eigen::MatrixX3d& p, const PositionalConstraints& c) {
  double worst = 0.0;
  for (const auto& k : c) worst = std::max(worst, (p.row(k.vertex).transpose() - k.target).norm());
  return worst;
}

}  // namespace

TEST(Transform, RoundTripAndCompose) {
  std::mt19937_64 rng(1);
  const auto t = random_transform(rng), u = random_transform(rng);
  t.validate();
  const auto p = random_points(rng, 100);
  EXPECT_LT((to_local_frame(apply_transform(p, t), t) - p).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((apply_transform(apply_transform(p, u), t) - apply_transform(p, t.compose(u))).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_LT((apply_transform(p, t.inverse()) - to_local_frame(p, t)).cwiseAbs().maxCoeff(), 1e-12);
  RigidTransform shift;
  shift.translation << 1, 2, 3;
  EXPECT_EQ(shift.apply(Eigen::Vector3d::Zero()), Eigen::Vector3d(1, 2, 3));
}

TEST(Transform, ValidateRejectsReflection) {
  RigidTransform t;
  t.rotation(2, 2) = -1.0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t.rotation(2, 2) = 1.1;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Procrustes, IdentityAndKnownRotation) {
  std::mt19937_64 rng(2);
  const auto s = random_points(rng, 10);
  const auto id = procrustes(s, s);
  EXPECT_LT((id.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-12);
  EXPECT_LT(id.translation.norm(), 1e-10);
  const auto t = random_transform(rng);
  const auto r = procrustes(s, apply_transform(s, t));
  EXPECT_LT((r.rotation - t.rotation).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((r.translation - t.translation).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Procrustes, MirroredTargetGivesProperRotation) {
  std::mt19937_64 rng(3);
  const auto s = random_points(rng, 8);
  Eigen::MatrixX3d m = s;
  m.col(0) *= -1.0;
  const auto r = procrustes(s, m);
  EXPECT_NEAR(r.rotation.determinant(), 1.0, 1e-12);
  r.validate();
}

TEST(Procrustes, BeatsRandomTransforms) {
  std::mt19937_64 rng(4);
  const auto s = random_points(rng, 12);
  Eigen::MatrixX3d t = apply_transform(s, random_transform(rng));
  std::normal_distribution<double> noise(0.0, 3.0);
  for (int i = 0; i < t.rows(); ++i) t.row(i) += Eigen::RowVector3d(noise(rng), noise(rng), noise(rng));
  const double best = residual(s, t, procrustes(s, t));
  for (int k = 0; k < 100; ++k) EXPECT_LE(best, residual(s, t, random_transform(rng)));
}

TEST(Procrustes, DegenerateInput) {
  Eigen::MatrixX3d line(4, 3);
  line << 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3;
  EXPECT_THROW(procrustes(line, line), DegenerateGeometry);
  EXPECT_THROW(procrustes(line.topRows(2), line.topRows(2)), DegenerateGeometry);
  EXPECT_THROW(procrustes(line, line.topRows(3)), std::invalid_argument);
}

TEST(Arap, AllVerticesPinnedAtRigidMotion) {
  const auto& mesh = cylinder();
  std::mt19937_64 rng(5);
  const auto t = random_transform(rng);
  const Eigen::MatrixX3d moved = apply_transform(mesh.vertices, t);
  PositionalConstraints c;
  for (int v = 0; v < mesh.num_vertices(); ++v) c.push_back({v, moved.row(v).transpose(), 1e4});
  const auto r = elastic_deform(mesh.vertices, mesh.faces, c);
  EXPECT_LT((r.vertices - moved).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Arap, SparseRigidConstraintsReproduceTheMotion) {
  const auto& mesh = cylinder();
  std::mt19937_64 rng(6);
  const auto t = random_transform(rng);
  const auto markers = select_markers_count(mesh, 12);
  PositionalConstraints c;
  for (int v : markers) c.push_back({v, t.apply(mesh.vertices.row(v).transpose()), 1e4});
  const auto r = elastic_deform(mesh.vertices, mesh.faces, c);
  EXPECT_LT((r.vertices - apply_transform(mesh.vertices, t)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Arap, SingleConstraintTranslatesTheMesh) {
  const auto& mesh = cylinder();
  const Eigen::Vector3d shift(10.0, -4.0, 7.0);
  PositionalConstraints c{{17, mesh.vertices.row(17).transpose() + shift, 1e4}};
  const auto r = elastic_deform(mesh.vertices, mesh.faces, c);
  EXPECT_LT((r.vertices - (mesh.vertices.rowwise() + shift.transpose())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Arap, BendEnergyMonotoneAndConstraintsMet) {
  const auto& mesh = cylinder();
  const auto c = end_rings(mesh.vertices, 45.0);
  ArapSolver solver(mesh.vertices, mesh.faces);
  const auto r = solver.solve(c);
  ASSERT_GE(r.energy_trace.size(), 2u);
  for (std::size_t i = 1; i < r.energy_trace.size(); ++i) EXPECT_LE(r.energy_trace[i], r.energy_trace[i - 1]);
  EXPECT_LT(max_constraint_error(r.vertices, c), 0.5);
  EXPECT_LE(solver.energy(r.vertices, c), solver.energy(mesh.vertices, c));
  // Interior rings deviate smoothly: mean displacement grows along the axis.
  double low = 0.0, high = 0.0;
  int nl = 0, nh = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double z = mesh.vertices(v, 2), d = (r.vertices.row(v) - mesh.vertices.row(v)).norm();
    if (z > 40 && z < 60) low += d, ++nl;
    if (z > 140 && z < 160) high += d, ++nh;
  }
  EXPECT_LT(low / nl, high / nh);
}

TEST(Arap, RigidMotionEquivariance) {
  const auto& mesh = cylinder();
  std::mt19937_64 rng(7);
  const auto t = random_transform(rng);
  const auto c = end_rings(mesh.vertices, 45.0);
  ArapOptions opt;
  opt.max_iterations = 30;
  opt.tolerance = 0.0;
  const auto a = elastic_deform(mesh.vertices, mesh.faces, c, opt);
  PositionalConstraints moved = c;
  for (auto& k : moved) k.target = t.apply(k.target);
  const auto b = elastic_deform(apply_transform(mesh.vertices, t), mesh.faces, moved, opt);
  EXPECT_LT((b.vertices - apply_transform(a.vertices, t)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Arap, HigherWeightTightensConstraints) {
  const auto& mesh = cylinder();
  const auto soft = elastic_deform(mesh.vertices, mesh.faces, end_rings(mesh.vertices, 60.0, 1e2));
  const auto hard = elastic_deform(mesh.vertices, mesh.faces, end_rings(mesh.vertices, 60.0, 1e6));
  const auto cs = end_rings(mesh.vertices, 60.0, 1e2);
  for (std::size_t k = 0; k < cs.size(); ++k) {
    const auto& c = cs[k];
    EXPECT_LE((hard.vertices.row(c.vertex).transpose() - c.target).norm(),
              (soft.vertices.row(c.vertex).transpose() - c.target).norm() + 1e-9);
  }
}

TEST(Arap, IterationCapReportsNotConverged) {
  const auto& mesh = cylinder();
  ArapOptions opt;
  opt.max_iterations = 2;
  opt.tolerance = 0.0;
  const auto r = elastic_deform(mesh.vertices, mesh.faces, end_rings(mesh.vertices, 45.0), opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
}

TEST(Arap, BadConstraints) {
  const auto& mesh = cylinder();
  ArapSolver solver(mesh.vertices, mesh.faces);
  EXPECT_THROW(solver.solve({{-1, Eigen::Vector3d::Zero(), 1.0}}), std::invalid_argument);
  EXPECT_THROW(solver.solve({{3, Eigen::Vector3d::Zero(), 1.0}, {3, Eigen::Vector3d::Ones(), 1.0}}),
               std::invalid_argument);
  EXPECT_THROW(solver.solve({}), std::domain_error);
}

TEST(Arap, FactorizationCacheGivesSameAnswer) {
  const auto& mesh = cylinder();
  ArapOptions opt;
  opt.factorization_cache = 1;
  ArapSolver solver(mesh.vertices, mesh.faces, opt);
  const auto c45 = end_rings(mesh.vertices, 45.0), c30 = end_rings(mesh.vertices, 30.0);
  const auto first = solver.solve(c45);
  solver.solve(c30);
  const auto again = solver.solve(c45);
  EXPECT_EQ(first.vertices, again.vertices);
}
