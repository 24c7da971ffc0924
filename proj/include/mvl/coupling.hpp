#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvl/measures.hpp"
#include "mvl/model.hpp"
#include "mvl/theory.hpp"

namespace mvl {

/// The two components of a coupled pair.
struct CouplingState {
  PhaseState first;
  PhaseState second;

  Vector f_diff() const { return first.x() - second.x(); }
  Vector g_diff() const { return first.v() - second.v(); }
  Vector h_diff(double gamma) const { return f_diff() + g_diff() / gamma; }
  /// h / |h|, or 0 when h = 0.
  Vector e_dir(double gamma) const;
  PhaseState difference() const { return {f_diff(), g_diff()}; }
};

struct BlendingParams {
  double delta = 1e-3;
  double d_threshold = 0.0;  // D(R~)
  // Literal case definition: with D(R~) = 0 every state has Delta >= 0,
  // so lambda vanishes identically and the coupling is synchronous.
  bool literal = false;

  static BlendingParams from(const TheoryConstants& tc, double delta = 1e-3) {
    return {delta, tc.d_of_r_tilde, false};
  }
};

void validate(const BlendingParams& bp);

/// C^2 smoothstep u^3 (10 - 15 u + 6 u^2) on [0, 1], clamped outside.
double smoothstep(double u) noexcept;

struct Blend {
  double lambda = 0.0;
  double pi = 1.0;
};

/// lambda(F, G) and pi = sqrt(1 - lambda^2).
Blend blending(const BlendingParams& bp, const TheoryConstants& tc, const ModelParams& p,
               const Vector& f_diff, const Vector& g_diff);

enum class CouplingMode { meanfield_vs_frozen, selfinteracting_vs_frozen, frozen_vs_frozen };

enum class CouplingNoise {
  // Second component gets lambda (I - 2 e e^T) dB with e from the pre-step H.
  reflection,
  // Per step, the reflected draw is replaced with probability
  // min(1, phi(xi_e + a) / phi(xi_e)) by the shift that makes H meet after
  // the step; e and a come from the noiseless update of H.  Marginals are
  // unchanged.
  maximal_reflection,
};

struct CouplingOptions {
  BlendingParams blend;
  CouplingNoise noise = CouplingNoise::maximal_reflection;
};

/// Measures the drifts are evaluated against.  Unused entries may be null.
struct CouplingAux {
  const EmpiricalMeasure* frozen_law = nullptr;     // sample of mu*_X
  const EmpiricalMeasure* meanfield_law = nullptr;  // surrogate for L(X^_t)
  const Vector* path_mean = nullptr;                // self-interacting, affine b_I
  const Matrix* path_history = nullptr;             // self-interacting, general b_I
};

/// Normals for dB and dB^ plus one uniform for the meeting decision.
struct CouplingNoiseDraw {
  Vector xi;
  Vector eta;
  double u = 0.5;
};

struct CoupledStepResult {
  CouplingState state;
  Blend blend;
  bool met = false;  // maximal coupling chose the meeting shift
};

CoupledStepResult coupled_step(CouplingMode mode, const ModelParams& p, const TheoryConstants& tc,
                               const CouplingOptions& opt, const CouplingState& cs,
                               const CouplingAux& aux, double dt, const CouplingNoiseDraw& noise,
                               std::int64_t step = 0);

struct InitialLaw {
  PhaseState mean = PhaseState::zero(1);
  double variance = 0.0;  // isotropic Gaussian spread per coordinate
};

struct ContractionConfig {
  CouplingMode mode = CouplingMode::frozen_vs_frozen;
  CouplingOptions options;
  double dt = 0.01;
  double t_end = 10.0;
  double checkpoint_every = 0.1;
  int n_pairs = 256;
  std::uint64_t seed = 0;
  InitialLaw first;
  InitialLaw second;
  // The same Gaussian displacement is applied to both members of a pair,
  // so the initial separation is fixed.
  bool common_initial_draw = true;
  std::optional<EmpiricalMeasure> mu_x;  // defaults to a point mass at 0
  int ensemble_size = 1024;              // mean-field surrogate
  int bootstrap = 200;
  bool delta_sensitivity = true;
  unsigned threads = 0;
};

struct RateFit {
  double rate = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double stderr_bootstrap = 0.0;
  std::size_t points = 0;
  bool valid = false;
};

struct ContractionReport {
  std::vector<double> times;
  std::vector<double> mean_rho;
  std::vector<double> stderr_rho;
  RateFit fit;
  double c3_reference = 0.0;
  double delta = 0.0;
  std::optional<RateFit> half_delta_fit;
  bool admissible = false;
  std::string admissibility_note;
  int ensemble_size = 0;
  double meeting_fraction = 0.0;  // pairs with rho = 0 at the end
};

/// Least squares of log y on t over the last half of the points (at least
/// min_points); entries with y <= 0 are skipped.
RateFit fit_log_linear(const std::vector<double>& t, const std::vector<double>& y,
                       std::size_t min_points = 8);

ContractionReport contraction_experiment(const ModelParams& p, const Theory& th,
                                         const ContractionConfig& cfg);

void write_contraction_csv(std::ostream& out, const ContractionReport& r);
void write_contraction_summary(std::ostream& out, const ContractionReport& r);

struct MomentConfig {
  double dt = 0.01;
  std::int64_t n_steps = 20000;
  std::int64_t checkpoint_stride = 100;
  int n_paths = 64;
  std::uint64_t seed = 0;
  InitialLaw initial;
  double burn_in_fraction = 0.1;
  std::optional<EmpiricalMeasure> mu_x;
  unsigned threads = 0;
};

struct MomentReport {
  std::vector<double> times;
  std::vector<double> second_moment;  // E|Y|^2 + E|U|^2
  std::vector<double> stderr_moment;
  std::vector<double> running_sup;
  double sup_first_quarter = 0.0;
  double sup_final_quarter = 0.0;
  bool growth_flag = false;
};

MomentReport moment_experiment(const ModelParams& p, const MomentConfig& cfg);

void write_moment_csv(std::ostream& out, const MomentReport& r);

}  // namespace mvl
