#include "stretchcap/deform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace stretchcap {

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

void RigidTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) throw std::invalid_argument("transform is not finite");
  if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("rotation is not orthonormal");
  if (!(rotation.determinant() > 0.0)) throw std::invalid_argument("rotation has negative determinant");
}

Eigen::MatrixX3d apply_transform(const Eigen::MatrixX3d& points, const RigidTransform& transform) {
  return (points * transform.rotation.transpose()).rowwise() + transform.translation.transpose();
}

Eigen::MatrixX3d to_local_frame(const Eigen::MatrixX3d& points, const RigidTransform& transform) {
  return (points.rowwise() - transform.translation.transpose()) * transform.rotation;
}

RigidTransform procrustes(const Eigen::MatrixX3d& source, const Eigen::MatrixX3d& target,
                          const Eigen::VectorXd& weights) {
  const Eigen::Index n = source.rows();
  if (target.rows() != n) throw std::invalid_argument("procrustes: point counts differ");
  if (n < 3) throw DegenerateGeometry("procrustes needs at least three points");
  Eigen::VectorXd w = weights.size() ? weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n || (w.array() < 0.0).any() || !(w.sum() > 0.0))
    throw std::invalid_argument("procrustes: weights must be non-negative with a positive sum");
  w /= w.sum();
  const Eigen::RowVector3d sc = w.transpose() * source;
  const Eigen::RowVector3d tc = w.transpose() * target;
  const Eigen::MatrixX3d s = source.rowwise() - sc;
  const Eigen::MatrixX3d t = target.rowwise() - tc;

  const Eigen::Matrix3d spread = s.transpose() * w.asDiagonal() * s;
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(spread).eigenvalues();
  if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300)))
    throw DegenerateGeometry("procrustes: source points are collinear");

  const Eigen::Matrix3d cov = s.transpose() * w.asDiagonal() * t;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = tc.transpose() - out.rotation * sc.transpose();
  return out;
}

ArapSolver::ArapSolver(const Eigen::MatrixX3d& rest, const Eigen::MatrixX3i& faces, const ArapOptions& options)
    : rest_(rest), options_(options) {
  const int n = static_cast<int>(rest.rows());
  if (n == 0 || faces.rows() == 0) throw std::invalid_argument("ARAP needs a non-empty mesh");
  if (faces.minCoeff() < 0 || faces.maxCoeff() >= n) throw std::invalid_argument("face index out of range");
  std::map<std::pair<int, int>, double> weight;
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int i = faces(f, k), j = faces(f, (k + 1) % 3), o = faces(f, (k + 2) % 3);
      const Eigen::Vector3d a = rest.row(i) - rest.row(o);
      const Eigen::Vector3d b = rest.row(j) - rest.row(o);
      const double cross = a.cross(b).norm();
      const double cot = cross > 0.0 ? a.dot(b) / cross : 0.0;
      weight[{std::min(i, j), std::max(i, j)}] += 0.5 * cot;
    }
  }
  neighbors_.assign(static_cast<std::size_t>(n), {});
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& [edge, w0] : weight) {
    const double w = std::max(w0, 1e-6);
    const auto [i, j] = edge;
    neighbors_[static_cast<std::size_t>(i)].emplace_back(j, w);
    neighbors_[static_cast<std::size_t>(j)].emplace_back(i, w);
    trip.emplace_back(i, i, 2.0 * w);
    trip.emplace_back(j, j, 2.0 * w);
    trip.emplace_back(i, j, -2.0 * w);
    trip.emplace_back(j, i, -2.0 * w);
  }
  laplacian2_.resize(n, n);
  laplacian2_.setFromTriplets(trip.begin(), trip.end());

  // Connected components of the edge graph (isolated vertices count as their own).
  component_.assign(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    if (component_[static_cast<std::size_t>(v)] >= 0) continue;
    std::vector<int> stack{v};
    component_[static_cast<std::size_t>(v)] = num_components_;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto& [j, w] : neighbors_[static_cast<std::size_t>(u)]) {
        if (component_[static_cast<std::size_t>(j)] >= 0) continue;
        component_[static_cast<std::size_t>(j)] = num_components_;
        stack.push_back(j);
      }
    }
    ++num_components_;
  }
}

void ArapSolver::check_constraints(const PositionalConstraints& constraints) const {
  std::set<int> seen;
  std::vector<char> anchored(static_cast<std::size_t>(num_components_), 0);
  for (const auto& c : constraints) {
    if (c.vertex < 0 || c.vertex >= num_vertices())
      throw std::invalid_argument("constraint vertex " + std::to_string(c.vertex) + " out of range");
    if (!seen.insert(c.vertex).second)
      throw std::invalid_argument("vertex " + std::to_string(c.vertex) + " constrained twice");
    if (!(c.weight >= 0.0) || !c.target.allFinite())
      throw std::invalid_argument("constraint on vertex " + std::to_string(c.vertex) + " is not finite");
    if (c.weight > 0.0) anchored[static_cast<std::size_t>(component_[static_cast<std::size_t>(c.vertex)])] = 1;
  }
  if (std::find(anchored.begin(), anchored.end(), 0) != anchored.end())
    throw std::domain_error("ARAP global system is singular: some mesh component has no positive-weight constraint");
}

const ArapSolver::Factor& ArapSolver::factor_for(const PositionalConstraints& constraints) {
  std::vector<std::pair<int, double>> key;
  for (const auto& c : constraints)
    if (c.weight > 0.0) key.emplace_back(c.vertex, c.weight);
  std::sort(key.begin(), key.end());
  auto it = cache_.find(key);
  if (it != cache_.end()) return *it->second;

  Eigen::SparseMatrix<double> a = laplacian2_;
  for (const auto& [v, w] : key) a.coeffRef(v, v) += w;
  auto factor = std::make_unique<Factor>(a);
  if (factor->info() != Eigen::Success) throw std::domain_error("ARAP global system factorization failed");
  if (options_.factorization_cache > 0 && cache_.size() >= options_.factorization_cache) {
    cache_.erase(cache_order_.front());
    cache_order_.erase(cache_order_.begin());
  }
  cache_order_.push_back(key);
  return *cache_.emplace(std::move(key), std::move(factor)).first->second;
}

void ArapSolver::optimal_rotations(const Eigen::MatrixX3d& p, std::vector<Eigen::Matrix3d>& rotations) const {
  const int n = num_vertices();
  rotations.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    for (const auto& [j, w] : neighbors_[static_cast<std::size_t>(i)]) {
      const Eigen::Vector3d e0 = rest_.row(i) - rest_.row(j);
      const Eigen::Vector3d e = p.row(i) - p.row(j);
      s.noalias() += w * e0 * e.transpose();
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d r = svd.matrixV() * u.transpose();
    if (r.determinant() < 0.0) {
      u.col(2) *= -1.0;
      r = svd.matrixV() * u.transpose();
    }
    rotations[static_cast<std::size_t>(i)] = r;
  }
}

double ArapSolver::energy_with(const Eigen::MatrixX3d& p, const std::vector<Eigen::Matrix3d>& rotations,
                               const PositionalConstraints& constraints) const {
  double e = 0.0;
  for (int i = 0; i < num_vertices(); ++i) {
    const auto& r = rotations[static_cast<std::size_t>(i)];
    for (const auto& [j, w] : neighbors_[static_cast<std::size_t>(i)]) {
      const Eigen::Vector3d e0 = rest_.row(i) - rest_.row(j);
      const Eigen::Vector3d d = (p.row(i) - p.row(j)).transpose() - r * e0;
      e += w * d.squaredNorm();
    }
  }
  for (const auto& c : constraints) e += c.weight * (p.row(c.vertex).transpose() - c.target).squaredNorm();
  return e;
}

double ArapSolver::energy(const Eigen::MatrixX3d& positions, const PositionalConstraints& constraints) const {
  if (positions.rows() != num_vertices()) throw std::invalid_argument("vertex count mismatch");
  std::vector<Eigen::Matrix3d> rotations;
  optimal_rotations(positions, rotations);
  return energy_with(positions, rotations, constraints);
}

ArapResult ArapSolver::solve(const PositionalConstraints& constraints, const Eigen::MatrixX3d* warm_start) {
  check_constraints(constraints);
  const int n = num_vertices();
  const Factor& factor = factor_for(constraints);

  // Rigid initial guess: weighted Procrustes, or a translation when the
  // constrained points are too few or collinear.
  Eigen::MatrixX3d p;
  {
    Eigen::MatrixX3d src(static_cast<Eigen::Index>(constraints.size()), 3), dst(src.rows(), 3);
    Eigen::VectorXd w(src.rows());
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      src.row(static_cast<Eigen::Index>(k)) = rest_.row(constraints[k].vertex);
      dst.row(static_cast<Eigen::Index>(k)) = constraints[k].target.transpose();
      w[static_cast<Eigen::Index>(k)] = constraints[k].weight;
    }
    RigidTransform init;
    try {
      init = procrustes(src, dst, w);
    } catch (const DegenerateGeometry&) {
      const Eigen::RowVector3d shift = (w.transpose() * (dst - src)) / w.sum();
      init.translation = shift.transpose();
    }
    p = apply_transform(rest_, init);
  }

  std::vector<Eigen::Matrix3d> rotations;
  optimal_rotations(p, rotations);
  double e = energy_with(p, rotations, constraints);
  if (warm_start) {
    if (warm_start->rows() != n) throw std::invalid_argument("warm start vertex count mismatch");
    std::vector<Eigen::Matrix3d> wr;
    optimal_rotations(*warm_start, wr);
    const double ew = energy_with(*warm_start, wr, constraints);
    if (ew < e) {
      p = *warm_start;
      rotations.swap(wr);
      e = ew;
    }
  }

  Eigen::MatrixX3d rhs_const = Eigen::MatrixX3d::Zero(n, 3);
  for (const auto& c : constraints) rhs_const.row(c.vertex) += c.weight * c.target.transpose();

  ArapResult result;
  result.energy_trace.push_back(e);
  Eigen::MatrixX3d b(n, 3);
  for (int it = 0; it < options_.max_iterations; ++it) {
    if (e == 0.0) {
      result.converged = true;
      break;
    }
    b = rhs_const;
    for (int i = 0; i < n; ++i) {
      const auto& ri = rotations[static_cast<std::size_t>(i)];
      for (const auto& [j, w] : neighbors_[static_cast<std::size_t>(i)]) {
        const Eigen::Vector3d e0 = rest_.row(i) - rest_.row(j);
        b.row(i) += (w * (ri + rotations[static_cast<std::size_t>(j)]) * e0).transpose();
      }
    }
    Eigen::MatrixX3d next = factor.solve(b);
    if (!next.allFinite()) throw std::domain_error("ARAP global solve produced non-finite positions");
    std::vector<Eigen::Matrix3d> next_rot;
    optimal_rotations(next, next_rot);
    const double en = energy_with(next, next_rot, constraints);
    ++result.iterations;
    if (en > e) {
      // Only round-off can increase the energy; keep the better iterate.
      result.converged = true;
      break;
    }
    const double decrease = (e - en) / e;
    p.swap(next);
    rotations.swap(next_rot);
    e = en;
    result.energy_trace.push_back(e);
    if (decrease < options_.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.vertices = std::move(p);
  return result;
}

ArapResult elastic_deform(const Eigen::MatrixX3d& rest, const Eigen::MatrixX3i& faces,
                          const PositionalConstraints& constraints, const ArapOptions& options) {
  ArapSolver solver(rest, faces, options);
  return solver.solve(constraints);
}

}  // namespace stretchcap
