#include "mvl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvl/rng.hpp"

namespace mvl {

namespace {

constexpr double kViolationTolerance = 1e-12;

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

PhaseState::PhaseState(Vector x, Vector v) : x_(std::move(x)), v_(std::move(v)) {
  if (x_.size() == 0) throw std::invalid_argument("PhaseState: empty state");
  if (x_.size() != v_.size()) throw std::invalid_argument("PhaseState: x and v dimensions differ");
  if (!all_finite(x_) || !all_finite(v_)) throw std::invalid_argument("PhaseState: non-finite component");
}

PhaseState PhaseState::zero(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Zero(dim)}; }

PhaseState operator-(const PhaseState& a, const PhaseState& b) {
  return {a.x() - b.x(), a.v() - b.v()};
}

ModelParams::ModelParams(Spec spec)
    : gamma_(spec.gamma),
      k_matrix_(std::move(spec.k_matrix)),
      g_(std::move(spec.g)),
      b_int_(std::move(spec.b_int)),
      l_g_(spec.l_g),
      l_int_(spec.l_int),
      r_dissip_(spec.r_dissip),
      affine_second_(spec.interaction_affine_in_second),
      label_(std::move(spec.label)) {
  if (!(gamma_ > 0.0) || !std::isfinite(gamma_)) throw std::invalid_argument("ModelParams: gamma must be > 0");
  if (!(l_g_ >= 0.0) || !(l_int_ >= 0.0) || !(r_dissip_ >= 0.0))
    throw std::invalid_argument("ModelParams: l_g, l_int and r_dissip must be >= 0");
  if (k_matrix_.rows() == 0 || k_matrix_.rows() != k_matrix_.cols())
    throw std::invalid_argument("ModelParams: K must be a non-empty square matrix");
  if (!k_matrix_.allFinite()) throw std::invalid_argument("ModelParams: K has non-finite entries");
  const double scale = std::max(1.0, k_matrix_.cwiseAbs().maxCoeff());
  if ((k_matrix_ - k_matrix_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("ModelParams: K must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k_matrix_, Eigen::EigenvaluesOnly);
  kappa_ = eig.eigenvalues().minCoeff();
  l_k_ = eig.eigenvalues().maxCoeff();
  if (!(kappa_ > 0.0)) throw std::invalid_argument("ModelParams: K must be positive definite");
}

ModelParams ModelParams::sec5(double k) {
  if (!(k >= 0.0)) throw std::invalid_argument("sec5: k must be >= 0");
  Spec spec;
  spec.gamma = 3.0;
  spec.k_matrix = Matrix::Constant(1, 1, 2.0);
  spec.b_int = [k](const Vector&, const Vector& y) -> Vector { return k * y; };
  spec.l_g = 0.0;
  spec.l_int = k;
  spec.r_dissip = 0.0;
  spec.interaction_affine_in_second = true;
  spec.label = "sec5";
  return ModelParams(std::move(spec));
}

Vector ModelParams::g(const Vector& x) const {
  if (!g_) return Vector::Zero(x.size());
  return g_(x);
}

Vector ModelParams::interaction(const Vector& x, const Vector& y) const {
  if (!b_int_) return Vector::Zero(x.size());
  return b_int_(x, y);
}

Vector external_force(const ModelParams& p, const Vector& x) {
  if (x.size() != p.dim()) throw std::invalid_argument("external_force: dimension mismatch");
  return -(p.k_matrix() * x) + p.g(x);
}

ProbeReport probe_dissipativity(const ModelParams& p, std::size_t sample_count,
                                double box_radius, std::uint64_t rng_seed) {
  if (sample_count < 1) throw std::invalid_argument("probe_dissipativity: sample_count must be >= 1");
  const Eigen::Index d = p.dim();
  const double r = p.r_dissip();
  ProbeReport report;

  // Each pair is drawn from its own step of a single stream; a pair that is
  // too close is redrawn on the next step (bounded number of attempts).
  std::uint64_t step = 0;
  const std::size_t max_attempts = 64 * sample_count + 1024;
  auto draw_point = [&](DrawStream& s) {
    Vector out(d);
    for (Eigen::Index i = 0; i < d; ++i) out[i] = box_radius * (2.0 * s.uniform() - 1.0);
    return out;
  };

  while (report.pairs_tested < sample_count && report.pairs_drawn < max_attempts) {
    DrawStream s(rng_seed, 0u, step++);
    Vector x = draw_point(s);
    Vector xp = draw_point(s);
    Vector y = draw_point(s);
    Vector yp = draw_point(s);
    ++report.pairs_drawn;

    const Vector dx = x - xp;
    const double sep = dx.norm();
    if (sep > 0.0) {
      const double lip = (p.g(x) - p.g(xp)).norm() / sep;
      report.max_lipschitz_estimate = std::max(report.max_lipschitz_estimate, lip);
    }
    // Joint Lipschitz quotient of b_I on the product space.
    const double joint = std::sqrt(dx.squaredNorm() + (y - yp).squaredNorm());
    if (joint > 0.0) {
      const double lip = (p.interaction(x, y) - p.interaction(xp, yp)).norm() / joint;
      report.max_interaction_lipschitz_estimate =
          std::max(report.max_interaction_lipschitz_estimate, lip);
    }

    if (sep < r) continue;
    ++report.pairs_tested;
    const double inner = (p.g(x) - p.g(xp)).dot(dx);
    if (inner > kViolationTolerance) report.violations.push_back({x, xp, inner});
  }
  return report;
}

Trajectory::Trajectory(double dt, Matrix positions, Matrix velocities, std::int64_t stride)
    : dt_(dt), stride_(stride), positions_(std::move(positions)), velocities_(std::move(velocities)) {
  if (!(dt_ > 0.0)) throw std::invalid_argument("Trajectory: dt must be > 0");
  if (stride_ < 1) throw std::invalid_argument("Trajectory: stride must be >= 1");
  if (positions_.cols() == 0) throw std::invalid_argument("Trajectory: empty");
  if (positions_.rows() != velocities_.rows() || positions_.cols() != velocities_.cols())
    throw std::invalid_argument("Trajectory: position/velocity shape mismatch");
}

PhaseState Trajectory::state(Eigen::Index i) const {
  return {positions_.col(i), velocities_.col(i)};
}

}  // namespace mvl
