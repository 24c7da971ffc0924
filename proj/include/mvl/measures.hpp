#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include "mvl/model.hpp"

namespace mvl {

/// Weighted point cloud; one column of `points` per sample.
class EmpiricalMeasure {
 public:
  /// Uniform weights.
  explicit EmpiricalMeasure(Matrix points);
  /// Nonnegative weights with positive total; stored normalized to sum 1.
  EmpiricalMeasure(Matrix points, Vector weights);

  Eigen::Index dim() const noexcept { return points_.rows(); }
  Eigen::Index size() const noexcept { return points_.cols(); }
  const Matrix& points() const noexcept { return points_; }
  const Vector& weights() const noexcept { return weights_; }
  bool is_uniform() const noexcept { return uniform_; }
  const Vector& mean() const noexcept { return mean_; }

  /// Keeps every ceil(n / max_points)-th point (uniform weights only).
  EmpiricalMeasure thinned(Eigen::Index max_points) const;
  /// Projection onto the given coordinates.
  EmpiricalMeasure coordinates(std::span<const Eigen::Index> rows) const;

 private:
  void validate_points() const;

  Matrix points_;
  Vector weights_;
  Vector mean_;
  bool uniform_ = true;
};

/// Streaming average m_j of z_0, ..., z_j.
class RunningMean {
 public:
  explicit RunningMean(Vector z0);

  std::int64_t count() const noexcept { return count_; }
  const Vector& mean() const noexcept { return mean_; }

  /// m_{j+1} = ((j+1)/(j+2)) m_j + (1/(j+2)) z_{j+1}.
  void update(const Vector& z);

 private:
  std::int64_t count_;
  Vector mean_;
};

RunningMean running_mean_update(RunningMean m, const Vector& z);

/// Exact W1 between two one-dimensional measures (quantile coupling).
double w1_exact_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// Exact W1 between uniform measures given by sorted samples.  Works on the
/// merged CDF in integer mass units, so unequal sizes are handled exactly.
double w1_uniform_sorted(std::span<const double> a_sorted, std::span<const double> b_sorted);

inline constexpr std::int64_t kExactTransportMaxCells = 40000;

/// Exact W1 in any dimension by solving the discrete transport problem on the
/// Euclidean cost matrix (successive shortest paths).  Throws
/// std::length_error when |a| * |b| exceeds kExactTransportMaxCells.
double w1_exact_small(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// Optimal transport cost for an explicit cost matrix (rows: sources).
double transport_cost(const Matrix& cost, const Vector& supply, const Vector& demand);

/// Mean over random unit directions of the 1-d W1 between projections.  This
/// is a surrogate: it is not W1 itself.
double w1_sliced(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int n_projections,
                 std::uint64_t rng_seed);

/// n independent draws from N(mean, diag(variances)).
EmpiricalMeasure gaussian_sampler(const Vector& mean, const Vector& diag_variances,
                                  Eigen::Index n, std::uint64_t rng_seed);

/// Column text: one point per line, weight in the last column.
void write_measure(std::ostream& out, const EmpiricalMeasure& m);
EmpiricalMeasure read_measure(std::istream& in);

}  // namespace mvl
