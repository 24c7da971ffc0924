#include "mvl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "mvl/errors.hpp"
#include "mvl/rng.hpp"

namespace mvl {

namespace {

PhaseState checked_state(Vector x, Vector v, std::int64_t step, const char* where) {
  if (!x.allFinite() || !v.allFinite()) throw step_error(std::string(where) + ": non-finite state", step);
  return {std::move(x), std::move(v)};
}

PhaseState em_update(const ModelParams& p, const PhaseState& s, const Vector& interaction, double dt,
                     const Vector& noise, std::int64_t step, const char* where) {
  if (noise.size() != s.dim()) throw std::invalid_argument(std::string(where) + ": noise dimension mismatch");
  const double gamma = p.gamma();
  Vector x = s.x() + s.v() * dt;
  Vector v = s.v() + (external_force(p, s.x()) + interaction - gamma * s.v()) * dt +
             std::sqrt(2.0 * gamma * dt) * noise;
  return checked_state(std::move(x), std::move(v), step, where);
}

Vector draw_normals(std::uint64_t seed, std::uint32_t stream, std::int64_t step, Eigen::Index d) {
  DrawStream s(seed, stream, static_cast<std::uint64_t>(step));
  Vector out(d);
  s.normals({out.data(), static_cast<std::size_t>(d)});
  return out;
}

// Stores every stride-th state as one column.
class Recorder {
 public:
  Recorder(Eigen::Index d, std::int64_t n_steps, std::int64_t stride)
      : stride_(stride), x_(d, n_steps / stride + 1), v_(d, n_steps / stride + 1) {}

  void record(std::int64_t step, const PhaseState& s) {
    if (step % stride_ != 0) return;
    const Eigen::Index col = static_cast<Eigen::Index>(step / stride_);
    x_.col(col) = s.x();
    v_.col(col) = s.v();
  }

  Trajectory finish(double dt) { return Trajectory(dt, std::move(x_), std::move(v_), stride_); }

 private:
  std::int64_t stride_;
  Matrix x_;
  Matrix v_;
};

class CheckpointLog {
 public:
  explicit CheckpointLog(std::vector<std::int64_t> steps) : steps_(std::move(steps)) {
    std::sort(steps_.begin(), steps_.end());
  }
  void offer(std::int64_t j, const Vector& mean) {
    while (next_ < steps_.size() && steps_[next_] < j) ++next_;
    if (next_ < steps_.size() && steps_[next_] == j) {
      log_.emplace_back(j, mean.norm());
      ++next_;
    }
  }
  std::vector<std::pair<std::int64_t, double>> take() { return std::move(log_); }

 private:
  std::vector<std::int64_t> steps_;
  std::size_t next_ = 0;
  std::vector<std::pair<std::int64_t, double>> log_;
};

constexpr double kE1 = 0.36787944117144233;  // e^{-1}
constexpr double kE2 = 0.1353352832366127;   // e^{-2}
constexpr double kE4 = 0.018315638888734179; // e^{-4}

struct PrintedNoise {
  double z, w;
};

PrintedNoise printed_noise() {
  const double a = std::sqrt(3.0) * std::sqrt(1.0 - kE2);
  const double b = std::sqrt(6.0) * std::sqrt(1.0 - kE4);
  return {a - b / 2.0, -a + b};
}

}  // namespace

void validate(const IntegratorConfig& cfg, bool meanfield) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw std::invalid_argument("IntegratorConfig: dt must be > 0");
  if (cfg.n_steps < 1) throw std::invalid_argument("IntegratorConfig: n_steps must be >= 1");
  if (cfg.history_stride < 1) throw std::invalid_argument("IntegratorConfig: history_stride must be >= 1");
  if (meanfield && cfg.n_particles < 2) throw std::invalid_argument("IntegratorConfig: mean-field needs n_particles >= 2");
}

Vector interaction_average(const ModelParams& p, const Vector& x, const EmpiricalMeasure& mu_x) {
  if (!p.has_interaction()) return Vector::Zero(x.size());
  if (mu_x.dim() != x.size()) throw std::invalid_argument("interaction_average: dimension mismatch");
  if (p.interaction_affine_in_second()) return p.interaction(x, mu_x.mean());
  Vector acc = Vector::Zero(x.size());
  const Matrix& pts = mu_x.points();
  const Vector& w = mu_x.weights();
  for (Eigen::Index j = 0; j < pts.cols(); ++j) acc += w[j] * p.interaction(x, pts.col(j));
  return acc;
}

PhaseState em_step_frozen(const ModelParams& p, const PhaseState& s, const EmpiricalMeasure& mu_x,
                          double dt, const Vector& noise, std::int64_t step) {
  return em_update(p, s, interaction_average(p, s.x(), mu_x), dt, noise, step, "em_step_frozen");
}

std::vector<PhaseState> em_step_meanfield(const ModelParams& p, const std::vector<PhaseState>& ensemble,
                                          double dt, const std::vector<Vector>& noises, std::int64_t step) {
  if (ensemble.size() < 2) throw std::invalid_argument("em_step_meanfield: need at least two particles");
  if (noises.size() != ensemble.size()) throw std::invalid_argument("em_step_meanfield: one noise per particle");
  const Eigen::Index d = ensemble.front().dim();
  Matrix positions(d, static_cast<Eigen::Index>(ensemble.size()));
  for (std::size_t i = 0; i < ensemble.size(); ++i) positions.col(static_cast<Eigen::Index>(i)) = ensemble[i].x();
  const EmpiricalMeasure law(std::move(positions));
  std::vector<PhaseState> out;
  out.reserve(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i)
    out.push_back(em_update(p, ensemble[i], interaction_average(p, ensemble[i].x(), law), dt, noises[i], step,
                            "em_step_meanfield"));
  return out;
}

PhaseState em_step_selfinteracting(const ModelParams& p, const PhaseState& s, const Matrix& history,
                                   double dt, const Vector& noise, std::int64_t step) {
  if (history.cols() == 0) throw std::invalid_argument("em_step_selfinteracting: empty history");
  Vector avg = Vector::Zero(s.dim());
  if (p.has_interaction()) {
    for (Eigen::Index j = 0; j < history.cols(); ++j) avg += p.interaction(s.x(), history.col(j));
    avg /= static_cast<double>(history.cols());
  }
  return em_update(p, s, avg, dt, noise, step, "em_step_selfinteracting");
}

PhaseState em_step_selfinteracting_mean(const ModelParams& p, const PhaseState& s, const Vector& path_mean,
                                        double dt, const Vector& noise, std::int64_t step) {
  return em_update(p, s, p.interaction(s.x(), path_mean), dt, noise, step, "em_step_selfinteracting");
}

std::pair<double, double> exact_linear_step(double k, double z, double w, double m, double xi) {
  const PrintedNoise n = printed_noise();
  const double zn = (2.0 * kE1 - kE2) * z + (kE1 - kE2) * w + k * m * (0.5 - kE1 + kE2 / 2.0) + n.z * xi;
  const double wn = (-2.0 * kE1 + 2.0 * kE2) * z + (-kE1 + 2.0 * kE2) * w + k * m * (kE1 - kE2) + n.w * xi;
  return {zn, wn};
}

ExactLinearMap::ExactLinearMap(double gamma, double kappa, double k, double dt) : k_(k) {
  if (!(gamma > 0.0) || !(kappa > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("ExactLinearMap: gamma, kappa and dt must be > 0");
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -kappa, -gamma;
  Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
  q(1, 1) = 2.0 * gamma;
  // Van Loan: exp of [[-A, Q], [0, A^T]] dt carries both e^{A dt} and the
  // noise covariance \int_0^dt e^{As} Q e^{A^T s} ds.
  Eigen::Matrix4d c = Eigen::Matrix4d::Zero();
  c.topLeftCorner<2, 2>() = -a * dt;
  c.topRightCorner<2, 2>() = q * dt;
  c.bottomRightCorner<2, 2>() = a.transpose() * dt;
  const Eigen::Matrix4d e = c.exp();
  transition_ = e.bottomRightCorner<2, 2>().transpose();
  covariance_ = transition_ * e.topRightCorner<2, 2>();
  covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();
  forcing_ = a.inverse() * (transition_ - Eigen::Matrix2d::Identity()) * Eigen::Vector2d(0.0, 1.0);
  Eigen::LLT<Eigen::Matrix2d> llt(covariance_);
  if (llt.info() != Eigen::Success) throw std::runtime_error("ExactLinearMap: covariance not positive definite");
  chol_ = llt.matrixL();
}

std::pair<double, double> ExactLinearMap::step(double z, double w, double m, double xi1, double xi2) const {
  const Eigen::Vector2d next = transition_ * Eigen::Vector2d(z, w) + forcing_ * (k_ * m) +
                               chol_ * Eigen::Vector2d(xi1, xi2);
  return {next[0], next[1]};
}

Eigen::Matrix2d stationary_covariance(const Eigen::Matrix2d& m, const Eigen::Matrix2d& q) {
  // vec(S) = (I - M kron M)^{-1} vec(Q)
  Eigen::Matrix4d kron;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) kron.block<2, 2>(2 * i, 2 * j) = m(i, j) * m;
  const Eigen::Vector4d vq(q(0, 0), q(1, 0), q(0, 1), q(1, 1));
  const Eigen::Vector4d vs = (Eigen::Matrix4d::Identity() - kron).partialPivLu().solve(vq);
  Eigen::Matrix2d s;
  s << vs[0], vs[2], vs[1], vs[3];
  return s;
}

NoiseCovarianceReport sec5_noise_covariance_report() {
  NoiseCovarianceReport r;
  const ExactLinearMap exact = ExactLinearMap::sec5(0.0);
  r.exact_transition = exact.transition();
  r.printed_transition << 2.0 * kE1 - kE2, kE1 - kE2, -2.0 * kE1 + 2.0 * kE2, -kE1 + 2.0 * kE2;
  r.exact = exact.noise_covariance();
  const PrintedNoise n = printed_noise();
  const Eigen::Vector2d c(n.z, n.w);
  r.printed = c * c.transpose();
  r.discrepancy = r.printed - r.exact;
  r.exact_stationary = stationary_covariance(r.exact_transition, r.exact);
  r.printed_stationary = stationary_covariance(r.printed_transition, r.printed);
  r.max_abs_discrepancy = r.discrepancy.cwiseAbs().maxCoeff();
  r.printed_reproduces_exact = r.max_abs_discrepancy <= 1e-10;
  return r;
}

void write_noise_report(std::ostream& out, const NoiseCovarianceReport& r) {
  const auto old = out.precision(17);
  auto mat = [&](const char* name, const Eigen::Matrix2d& m) {
    out << name << " = [[" << m(0, 0) << ", " << m(0, 1) << "], [" << m(1, 0) << ", " << m(1, 1) << "]]\n";
  };
  mat("exact_transition", r.exact_transition);
  mat("printed_transition", r.printed_transition);
  mat("exact_noise_covariance", r.exact);
  mat("printed_noise_covariance", r.printed);
  mat("discrepancy_printed_minus_exact", r.discrepancy);
  mat("exact_stationary_covariance", r.exact_stationary);
  mat("printed_stationary_covariance", r.printed_stationary);
  out << "max_abs_discrepancy = " << r.max_abs_discrepancy << '\n';
  out << "printed_reproduces_exact = " << (r.printed_reproduces_exact ? "true" : "false") << '\n';
  out.precision(old);
}

namespace {

RunResult run_exact_linear(const ModelParams& p, const IntegratorConfig& cfg, const RunExtras& ex) {
  if (p.dim() != 1) throw std::invalid_argument("run_trajectory: exactlinear needs d = 1");
  const bool single = ex.linear_noise == LinearNoise::single_normal;
  if (single && (p.gamma() != 3.0 || p.kappa() != 2.0 || cfg.dt != 1.0))
    throw std::invalid_argument("run_trajectory: the printed recursion needs gamma = 3, K = 2, dt = 1");
  const std::optional<ExactLinearMap> map =
      single ? std::nullopt : std::optional<ExactLinearMap>(ExactLinearMap(p.gamma(), p.kappa(), ex.k, cfg.dt));

  const PhaseState init = ex.initial.value_or(PhaseState::zero(1));
  double z = init.x()[0], w = init.v()[0];
  RunningMean mean(init.x());
  double m = z;
  Recorder rec(1, cfg.n_steps, ex.storage_stride);
  CheckpointLog log(ex.checkpoints);
  rec.record(0, init);
  log.offer(0, mean.mean());
  Vector zv(1);
  for (std::int64_t j = 0; j < cfg.n_steps; ++j) {
    DrawStream s(cfg.rng_seed, ex.stream, static_cast<std::uint64_t>(j));
    const double drive = ex.linear_interaction == LinearInteraction::running_mean ? m : ex.fixed_mean;
    const double xi1 = s.normal();
    if (single) {
      std::tie(z, w) = exact_linear_step(ex.k, z, w, drive, xi1);
    } else {
      const double xi2 = s.normal();
      std::tie(z, w) = map->step(z, w, drive, xi1, xi2);
    }
    if (!std::isfinite(z) || !std::isfinite(w)) throw step_error("exactlinear: non-finite state", j + 1);
    zv[0] = z;
    mean.update(zv);
    m = mean.mean()[0];
    if ((j + 1) % ex.storage_stride == 0) rec.record(j + 1, PhaseState(zv, Vector::Constant(1, w)));
    log.offer(j + 1, mean.mean());
  }
  return {rec.finish(cfg.dt), log.take(), mean, {}};
}

}  // namespace

RunResult run_trajectory(DynamicsKind kind, const ModelParams& p, const IntegratorConfig& cfg,
                         const RunExtras& ex) {
  validate(cfg, kind == DynamicsKind::meanfield);
  if (ex.storage_stride < 1) throw std::invalid_argument("run_trajectory: storage_stride must be >= 1");
  if (kind == DynamicsKind::exactlinear) return run_exact_linear(p, cfg, ex);

  const Eigen::Index d = p.dim();
  const PhaseState init = ex.initial.value_or(PhaseState::zero(d));
  if (init.dim() != d) throw std::invalid_argument("run_trajectory: initial state dimension mismatch");
  Recorder rec(d, cfg.n_steps, ex.storage_stride);
  CheckpointLog log(ex.checkpoints);

  if (kind == DynamicsKind::meanfield) {
    std::vector<PhaseState> ens = ex.initial_ensemble;
    if (ens.empty()) ens.assign(static_cast<std::size_t>(cfg.n_particles), init);
    if (ens.size() != static_cast<std::size_t>(cfg.n_particles))
      throw std::invalid_argument("run_trajectory: initial ensemble size differs from n_particles");
    rec.record(0, ens.front());
    std::vector<Vector> noises(ens.size());
    for (std::int64_t j = 0; j < cfg.n_steps; ++j) {
      for (std::size_t i = 0; i < ens.size(); ++i)
        noises[i] = draw_normals(cfg.rng_seed, ex.stream + static_cast<std::uint32_t>(i), j, d);
      ens = em_step_meanfield(p, ens, cfg.dt, noises, j + 1);
      rec.record(j + 1, ens.front());
    }
    RunResult out{rec.finish(cfg.dt), {}, std::nullopt, std::move(ens)};
    return out;
  }

  if (kind == DynamicsKind::frozen) {
    if (p.has_interaction() && !ex.mu_x) throw std::invalid_argument("run_trajectory: frozen dynamics needs mu_x");
    const EmpiricalMeasure empty(Matrix::Zero(d, 1));
    const EmpiricalMeasure& mu = ex.mu_x ? *ex.mu_x : empty;
    PhaseState s = init;
    RunningMean mean(s.x());
    rec.record(0, s);
    log.offer(0, mean.mean());
    for (std::int64_t j = 0; j < cfg.n_steps; ++j) {
      s = em_step_frozen(p, s, mu, cfg.dt, draw_normals(cfg.rng_seed, ex.stream, j, d), j + 1);
      mean.update(s.x());
      rec.record(j + 1, s);
      log.offer(j + 1, mean.mean());
    }
    return {rec.finish(cfg.dt), log.take(), mean, {}};
  }

  // Self-interacting.
  const bool shortcut = ex.use_running_mean && p.interaction_affine_in_second();
  PhaseState s = init;
  RunningMean mean(s.x());
  std::vector<double> history(s.x().data(), s.x().data() + d);
  rec.record(0, s);
  log.offer(0, mean.mean());
  for (std::int64_t j = 0; j < cfg.n_steps; ++j) {
    const Vector noise = draw_normals(cfg.rng_seed, ex.stream, j, d);
    if (shortcut) {
      s = em_step_selfinteracting_mean(p, s, mean.mean(), cfg.dt, noise, j + 1);
    } else {
      const Eigen::Map<const Matrix> h(history.data(), d, static_cast<Eigen::Index>(history.size()) / d);
      s = em_step_selfinteracting(p, s, h, cfg.dt, noise, j + 1);
      if ((j + 1) % cfg.history_stride == 0) history.insert(history.end(), s.x().data(), s.x().data() + d);
    }
    mean.update(s.x());
    rec.record(j + 1, s);
    log.offer(j + 1, mean.mean());
  }
  return {rec.finish(cfg.dt), log.take(), mean, {}};
}

void write_trajectory(std::ostream& out, const Trajectory& t) {
  const auto old = out.precision(17);
  const Eigen::Index d = t.dim();
  out << "t";
  for (Eigen::Index i = 0; i < d; ++i) out << ",x" << i;
  for (Eigen::Index i = 0; i < d; ++i) out << ",v" << i;
  out << '\n';
  for (Eigen::Index c = 0; c < t.size(); ++c) {
    out << t.time(c);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << t.positions()(i, c);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << t.velocities()(i, c);
    out << '\n';
  }
  out.precision(old);
}

}  // namespace mvl
