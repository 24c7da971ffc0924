#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Position and velocity of one particle (or a difference of two).
class PhaseState {
 public:
  /// Throws std::invalid_argument on dimension mismatch, empty vectors or
  /// non-finite components.
  PhaseState(Vector x, Vector v);

  static PhaseState zero(Eigen::Index dim);

  const Vector& x() const noexcept { return x_; }
  const Vector& v() const noexcept { return v_; }
  Eigen::Index dim() const noexcept { return x_.size(); }

  friend bool operator==(const PhaseState& a, const PhaseState& b) {
    return a.x_ == b.x_ && a.v_ == b.v_;
  }

 private:
  Vector x_;
  Vector v_;
};

PhaseState operator-(const PhaseState& a, const PhaseState& b);

using ForceFn = std::function<Vector(const Vector&)>;
using InteractionFn = std::function<Vector(const Vector& x, const Vector& y)>;

/// One McKean-Vlasov Langevin model:
///
///   dX = V dt,
///   dV = (b_E(X) + \int b_I(X, y) mu(dy) - gamma V) dt + sqrt(2 gamma) dB,
///
/// with b_E(x) = -K x + g(x).  The declared Lipschitz constants and the
/// dissipativity radius are inputs of record; nothing here proves them.
class ModelParams {
 public:
  struct Spec {
    double gamma = 1.0;
    Matrix k_matrix;
    ForceFn g;              // empty means g == 0
    InteractionFn b_int;    // empty means b_I == 0
    double l_g = 0.0;
    double l_int = 0.0;     // joint Lipschitz constant on R^{2d}
    double r_dissip = 0.0;
    // True when b_I(x, .) is affine, so averaging over a measure equals
    // evaluating at the measure's mean.
    bool interaction_affine_in_second = false;
    std::string label = "custom";
  };

  explicit ModelParams(Spec spec);

  /// gamma = 3, K = 2 (d = 1), g = 0, b_I(x, y) = k y, R = 0.
  static ModelParams sec5(double k);

  double gamma() const noexcept { return gamma_; }
  Eigen::Index dim() const noexcept { return k_matrix_.rows(); }
  const Matrix& k_matrix() const noexcept { return k_matrix_; }
  double kappa() const noexcept { return kappa_; }
  double l_k() const noexcept { return l_k_; }
  double l_g() const noexcept { return l_g_; }
  double l_int() const noexcept { return l_int_; }
  double r_dissip() const noexcept { return r_dissip_; }
  double lk_plus_lg() const noexcept { return l_k_ + l_g_; }
  bool interaction_affine_in_second() const noexcept { return affine_second_; }
  bool has_g() const noexcept { return static_cast<bool>(g_); }
  bool has_interaction() const noexcept { return static_cast<bool>(b_int_); }
  const std::string& label() const noexcept { return label_; }

  Vector g(const Vector& x) const;
  Vector interaction(const Vector& x, const Vector& y) const;

 private:
  double gamma_;
  Matrix k_matrix_;
  ForceFn g_;
  InteractionFn b_int_;
  double kappa_ = 0.0;
  double l_k_ = 0.0;
  double l_g_;
  double l_int_;
  double r_dissip_;
  bool affine_second_;
  std::string label_;
};

/// b_E(x) = -K x + g(x).
Vector external_force(const ModelParams& p, const Vector& x);

struct DissipativityViolation {
  Vector x;
  Vector x_prime;
  double inner_product;
};

struct ProbeReport {
  std::vector<DissipativityViolation> violations;
  double max_lipschitz_estimate = 0.0;              // lower bound on |g|_1
  double max_interaction_lipschitz_estimate = 0.0;  // lower bound on L^I
  std::size_t pairs_drawn = 0;
  std::size_t pairs_tested = 0;  // pairs with |x - x'| >= R
};

/// Samples pairs in [-box_radius, box_radius]^d and looks for counterexamples
/// to <g(x) - g(x'), x - x'> <= 0 at separation >= R.  It can only falsify.
ProbeReport probe_dissipativity(const ModelParams& p, std::size_t sample_count,
                                double box_radius, std::uint64_t rng_seed);

/// States on the uniform grid 0, stride*dt, 2*stride*dt, ...; one column per
/// stored state.
class Trajectory {
 public:
  Trajectory(double dt, Matrix positions, Matrix velocities, std::int64_t stride = 1);

  double dt() const noexcept { return dt_; }
  std::int64_t stride() const noexcept { return stride_; }
  Eigen::Index size() const noexcept { return positions_.cols(); }
  Eigen::Index dim() const noexcept { return positions_.rows(); }
  double time(Eigen::Index i) const noexcept { return static_cast<double>(i * stride_) * dt_; }
  PhaseState state(Eigen::Index i) const;
  const Matrix& positions() const noexcept { return positions_; }
  const Matrix& velocities() const noexcept { return velocities_; }

 private:
  double dt_;
  std::int64_t stride_;
  Matrix positions_;
  Matrix velocities_;
};

}  // namespace mvl
