#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvl/config.hpp"
#include "mvl/coupling.hpp"
#include "mvl/measures.hpp"

namespace mvl {

/// Command-line overrides.  Their meaning depends on the verb: for
/// `contract`, steps sets coupling.t_end = steps * coupling.dt and paths
/// sets coupling.n_pairs; for `moments`, steps sets moments.n_steps.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<int> paths;
  std::optional<std::string> out;
};

void apply_overrides(ExperimentConfig& cfg, const std::string& verb, const Overrides& o);

/// Reference sample in phase space (2d rows: x then v).
EmpiricalMeasure reference_sample(const ExperimentConfig& cfg, const ModelParams& p);

struct Sec5Curve {
  double k = 0.0;
  std::vector<std::int64_t> steps;
  std::vector<double> mean_abs_m;
  std::vector<double> stderr_abs_m;
};

/// Self-interacting exact-linear recursion per k and path, logging |m_j| at
/// the configured checkpoints.  Writes sec5_k<k>.csv per k plus log and
/// linear SVG plots to cfg.output unless write_files is false.
std::vector<Sec5Curve> run_sec5_figure(const ExperimentConfig& cfg, bool write_files = true);

struct ConvergenceResult {
  std::vector<std::int64_t> steps;
  std::vector<double> times;
  std::vector<double> mean_w1;
  std::vector<double> stderr_w1;
  double slope = 0.0;  // log W1 against log t over the final decade
  std::size_t slope_points = 0;
  bool admissible = false;
  double eps_max_meanfield = 0.0;
  double eps_max_selfinteracting = 0.0;
  std::string admissibility_note;
  // Time averages over each path's whole trajectory, averaged over paths
  // (first coordinate).
  double var_x = 0.0;
  double var_v = 0.0;
  std::int64_t reference_size = 0;
};

/// W1 of each path's trajectory empirical measure against the reference at
/// every checkpoint, averaged over paths.  Writes convergence.csv,
/// convergence_summary.txt and SVG plots.
ConvergenceResult run_empirical_convergence(const ExperimentConfig& cfg, bool write_files = true);

/// Prints constants, verdicts, thresholds and epsilon ranges; returns 0 when
/// admissible and 1 otherwise.
int run_admissibility_report(const ExperimentConfig& cfg, std::ostream& out);

/// Builds the theory and delegates to contraction_experiment.  Writes
/// contraction.csv, contraction_summary.txt and contraction.svg.
ContractionReport run_contraction(const ExperimentConfig& cfg, bool write_files = true);

/// Frozen-dynamics second moments.  Writes moments.csv,
/// moments_summary.txt and moments.svg.
MomentReport run_moments(const ExperimentConfig& cfg, bool write_files = true);

}  // namespace mvl
