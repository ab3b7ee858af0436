#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace stretchcap {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  /// (*this) after `other`: x -> this(other(x)).
  RigidTransform compose(const RigidTransform& other) const;
  /// Throws std::invalid_argument unless R^T R = I within 1e-10 and det R > 0.
  void validate() const;
};

class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rows of `points` mapped by `transform`.
Eigen::MatrixX3d apply_transform(const Eigen::MatrixX3d& points, const RigidTransform& transform);
/// Inverse map: R^T (p - t).
Eigen::MatrixX3d to_local_frame(const Eigen::MatrixX3d& points, const RigidTransform& transform);

/// Least-squares rigid transform (no scaling) taking `source` rows onto
/// `target` rows, optionally weighted. Throws DegenerateGeometry when fewer
/// than three points are given or the source is collinear.
RigidTransform procrustes(const Eigen::MatrixX3d& source, const Eigen::MatrixX3d& target,
                          const Eigen::VectorXd& weights = Eigen::VectorXd());

struct PositionalConstraint {
  int vertex = 0;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double weight = 1e4;
};
using PositionalConstraints = std::vector<PositionalConstraint>;

struct ArapOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // relative energy decrease
  std::size_t factorization_cache = 32;
};

struct ArapResult {
  Eigen::MatrixX3d vertices;
  std::vector<double> energy_trace;  // initial guess first
  int iterations = 0;
  bool converged = false;  // false: iteration cap hit, `vertices` is the last (lowest-energy) iterate
};

/// As-rigid-as-possible surface deformation with soft positional constraints,
/// solved by local/global alternation.
///
/// Energy: sum over vertices i and neighbours j of
///   w_ij |(p_i - p_j) - R_i (q_i - q_j)|^2  +  sum_c W_c |p_c - t_c|^2
/// with cotangent weights w_ij (clamped below at 1e-6) and per-vertex optimal
/// rotations R_i. The initial guess is the rest pose rigidly aligned to the
/// constraint targets, so the result never has more energy than the rest pose.
///
/// The global system matrix only depends on the constrained vertex set and
/// weights; factorizations are cached per set. A solver instance is not
/// thread-safe; use one per thread.
class ArapSolver {
 public:
  ArapSolver(const Eigen::MatrixX3d& rest, const Eigen::MatrixX3i& faces, const ArapOptions& options = {});

  /// `warm_start` (optional) is used instead of the rigid initial guess when
  /// it has lower energy.
  ArapResult solve(const PositionalConstraints& constraints, const Eigen::MatrixX3d* warm_start = nullptr);

  /// Energy with the rotations that are optimal for `positions`.
  double energy(const Eigen::MatrixX3d& positions, const PositionalConstraints& constraints) const;

  const Eigen::MatrixX3d& rest() const { return rest_; }
  int num_vertices() const { return static_cast<int>(rest_.rows()); }
  void set_max_iterations(int n) { options_.max_iterations = n; }

 private:
  using Factor = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;

  void optimal_rotations(const Eigen::MatrixX3d& p, std::vector<Eigen::Matrix3d>& rotations) const;
  double energy_with(const Eigen::MatrixX3d& p, const std::vector<Eigen::Matrix3d>& rotations,
                     const PositionalConstraints& constraints) const;
  const Factor& factor_for(const PositionalConstraints& constraints);
  void check_constraints(const PositionalConstraints& constraints) const;

  Eigen::MatrixX3d rest_;
  ArapOptions options_;
  std::vector<std::vector<std::pair<int, double>>> neighbors_;  // (j, w_ij)
  Eigen::SparseMatrix<double> laplacian2_;                      // 2 L
  std::vector<int> component_;
  int num_components_ = 0;
  std::map<std::vector<std::pair<int, double>>, std::unique_ptr<Factor>> cache_;
  std::vector<std::vector<std::pair<int, double>>> cache_order_;
};

/// Convenience wrapper building a one-off solver.
ArapResult elastic_deform(const Eigen::MatrixX3d& rest, const Eigen::MatrixX3i& faces,
                          const PositionalConstraints& constraints, const ArapOptions& options = {});

}  // namespace stretchcap
