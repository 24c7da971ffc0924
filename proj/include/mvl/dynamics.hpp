#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvl/measures.hpp"
#include "mvl/model.hpp"

namespace mvl {

struct IntegratorConfig {
  double dt = 0.01;
  std::int64_t n_steps = 1000;
  std::uint64_t rng_seed = 0;
  int n_particles = 2;               // mean-field only
  std::int64_t history_stride = 1;   // self-interacting memory thinning
};

/// Throws std::invalid_argument when the config cannot drive `kind`.
void validate(const IntegratorConfig& cfg, bool meanfield);

/// Average of b_I(x, .) over a weighted sample of positions.  Uses the
/// mean directly when b_I is affine in its second argument.
Vector interaction_average(const ModelParams& p, const Vector& x, const EmpiricalMeasure& mu_x);

/// One Euler-Maruyama step of the frozen-measure dynamics.
PhaseState em_step_frozen(const ModelParams& p, const PhaseState& s, const EmpiricalMeasure& mu_x,
                          double dt, const Vector& noise, std::int64_t step = 0);

/// One synchronous Euler-Maruyama step of the N-particle system; the
/// interaction average runs over all current positions including the
/// particle itself.
std::vector<PhaseState> em_step_meanfield(const ModelParams& p, const std::vector<PhaseState>& ensemble,
                                          double dt, const std::vector<Vector>& noises,
                                          std::int64_t step = 0);

/// One Euler-Maruyama step of the self-interacting dynamics; `history`
/// holds one stored past position per column.
PhaseState em_step_selfinteracting(const ModelParams& p, const PhaseState& s, const Matrix& history,
                                   double dt, const Vector& noise, std::int64_t step = 0);

/// Same step with the path average replaced by b_I(x, mean) (exact for
/// interactions affine in the second argument).
PhaseState em_step_selfinteracting_mean(const ModelParams& p, const PhaseState& s, const Vector& path_mean,
                                        double dt, const Vector& noise, std::int64_t step = 0);

/// The printed recursion for gamma = 3, K = 2, unit step, b_I(x, y) = k y,
/// driven by one scalar normal.
std::pair<double, double> exact_linear_step(double k, double z, double w, double m, double xi);

/// Exact Gaussian transition over one step of
///   dZ = W dt,  dW = (-kappa Z + k m - gamma W) dt + sqrt(2 gamma) dB
/// with m frozen over the step.
class ExactLinearMap {
 public:
  ExactLinearMap(double gamma, double kappa, double k, double dt);

  /// gamma = 3, kappa = 2, dt = 1.
  static ExactLinearMap sec5(double k) { return {3.0, 2.0, k, 1.0}; }

  const Eigen::Matrix2d& transition() const noexcept { return transition_; }
  /// Response of (z, w) to a unit value of k m held over the step.
  const Eigen::Vector2d& forcing() const noexcept { return forcing_; }
  const Eigen::Matrix2d& noise_covariance() const noexcept { return covariance_; }
  double k() const noexcept { return k_; }

  /// Advances with two independent standard normals.
  std::pair<double, double> step(double z, double w, double m, double xi1, double xi2) const;

 private:
  double k_;
  Eigen::Matrix2d transition_;
  Eigen::Vector2d forcing_;
  Eigen::Matrix2d covariance_;
  Eigen::Matrix2d chol_;
};

/// Which one-step noise the exact-linear integrator uses.
enum class LinearNoise {
  single_normal,     // one shared scalar normal, coefficients as printed
  exact_covariance,  // two normals through the Cholesky factor of the exact covariance
};

/// Comparison of the printed single-normal noise with the exact one-step
/// covariance for the built-in linear example.
struct NoiseCovarianceReport {
  Eigen::Matrix2d exact_transition;
  Eigen::Matrix2d printed_transition;
  Eigen::Matrix2d exact;        // Lyapunov integral over one step
  Eigen::Matrix2d printed;      // c c^T for the printed noise vector c
  Eigen::Matrix2d discrepancy;  // printed - exact
  Eigen::Matrix2d exact_stationary;  // k = 0
  Eigen::Matrix2d printed_stationary;  // k = 0
  double max_abs_discrepancy = 0.0;
  bool printed_reproduces_exact = false;  // within 1e-10
};

NoiseCovarianceReport sec5_noise_covariance_report();
void write_noise_report(std::ostream& out, const NoiseCovarianceReport& r);

/// Fixed point S = M S M^T + Q of a stable linear Gaussian recursion.
Eigen::Matrix2d stationary_covariance(const Eigen::Matrix2d& m, const Eigen::Matrix2d& q);

enum class DynamicsKind { frozen, meanfield, selfinteracting, exactlinear };

/// How the exact-linear recursion evaluates the interaction.
enum class LinearInteraction {
  running_mean,  // self-interacting: m_j is the average of z_0..z_j
  fixed_mean,    // frozen: m is the mean of the frozen marginal
};

struct RunExtras {
  std::optional<PhaseState> initial;             // defaults to the origin
  std::vector<PhaseState> initial_ensemble;      // mean-field; defaults to copies of `initial`
  std::optional<EmpiricalMeasure> mu_x;          // frozen
  double k = 0.0;                                // exactlinear
  LinearNoise linear_noise = LinearNoise::single_normal;
  LinearInteraction linear_interaction = LinearInteraction::running_mean;
  double fixed_mean = 0.0;
  // Self-interacting EM: use the running mean instead of stored history.
  bool use_running_mean = true;
  std::vector<std::int64_t> checkpoints;  // steps j at which |m_j| is logged
  std::int64_t storage_stride = 1;
  std::uint32_t stream = 0;               // path index
};

struct RunResult {
  Trajectory trajectory;                                      // particle 0 for mean-field
  std::vector<std::pair<std::int64_t, double>> mean_norm_log;  // (j, |m_j|)
  std::optional<RunningMean> final_mean;
  std::vector<PhaseState> final_ensemble;                      // mean-field only
};

/// Runs one path.  Draws for step j come from DrawStream(seed, stream, j)
/// (stream + particle index for mean-field), so a run is bit-reproducible.
RunResult run_trajectory(DynamicsKind kind, const ModelParams& p, const IntegratorConfig& cfg,
                         const RunExtras& extras);

/// Column text: t, x..., v...
void write_trajectory(std::ostream& out, const Trajectory& t);

}  // namespace mvl
