#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvl/coupling.hpp"
#include "mvl/dynamics.hpp"
#include "mvl/model.hpp"

namespace mvl {

class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Built-in "sec5" (parameter k) or "generic" with named forces:
///   g:           none | tanh (a tanh x) | sine (a sin x), componentwise, a = g_strength
///   interaction: none | mean (c y) | difference (c (y - x)) | sine_difference (c sin(y - x)),
///                c = interaction_strength
/// Lipschitz constants follow from the strengths.
struct ModelConfig {
  std::string name = "sec5";
  double k = 0.0;
  double gamma = 1.0;
  std::vector<std::vector<double>> k_matrix{{1.0}};
  std::string g = "none";
  double g_strength = 0.0;
  std::string interaction = "none";
  double interaction_strength = 0.0;
  double r_dissip = 0.0;
};

ModelParams build_model(const ModelConfig& mc);

/// geometric: first, first*base, ... (rounded, deduplicated); linear: every
/// `every` steps; list: `steps` as given.  The final step is always included.
struct CheckpointConfig {
  std::string kind = "geometric";
  double base = 2.0;
  std::int64_t first = 1;
  std::int64_t every = 100;
  std::vector<std::int64_t> steps;
};

std::vector<std::int64_t> make_checkpoints(const CheckpointConfig& cc, std::int64_t n_steps);

/// gaussian_invariant: N(0, K^{-1}) x N(0, I), valid when g = 0 and the
/// interaction vanishes at a centred law.  file: one point per line as
/// written by write_measure.
struct ReferenceConfig {
  std::string kind = "gaussian_invariant";
  std::int64_t size = 10000;
  std::uint64_t seed = 20240601;
  std::string path;
};

struct InitialConfig {
  std::vector<double> x{0.0};
  std::vector<double> v{0.0};
  double variance = 0.0;
};

struct Sec5FigureConfig {
  std::vector<double> k_list{0.4, 0.8, 1.2, 1.6, 2.0};
  std::string noise = "single_normal";
};

struct CouplingConfig {
  std::string mode = "frozen_vs_frozen";
  std::string noise = "maximal_reflection";
  double delta = 1e-3;
  bool literal_blending = false;
  double dt = 0.01;
  double t_end = 10.0;
  double checkpoint_every = 0.1;
  int n_pairs = 256;
  InitialConfig first{{1.0}, {0.0}, 0.0};
  InitialConfig second{{0.0}, {0.0}, 0.0};
  bool common_initial_draw = true;
  int ensemble_size = 1024;
  int bootstrap = 200;
  bool delta_sensitivity = true;
};

struct MomentsConfig {
  InitialConfig initial;
  double dt = 0.01;
  std::int64_t n_steps = 20000;
  std::int64_t checkpoint_stride = 100;
  double burn_in_fraction = 0.1;
};

struct ExperimentConfig {
  ModelConfig model;
  std::string dynamics = "exactlinear";  // frozen | meanfield | selfinteracting | exactlinear
  IntegratorConfig integrator{1.0, 100000, 1, 2, 1};
  int n_paths = 16;
  CheckpointConfig checkpoints;
  std::string metric = "w1_1d_marginals";  // w1_1d_marginals | w1_small | w1_sliced
  std::string space = "position";          // position | phase
  std::int64_t max_points = 200;           // thinning for w1_small
  int sliced_projections = 64;
  ReferenceConfig reference;
  std::string linear_noise = "exact_covariance";
  std::string linear_interaction = "fixed_mean";
  double fixed_mean = 0.0;
  InitialConfig initial;
  std::string output = "out";
  unsigned threads = 0;
  Sec5FigureConfig sec5_figure;
  CouplingConfig coupling;
  MomentsConfig moments;
};

/// Parses JSON text.  Unknown keys and malformed values throw config_error
/// naming the offending path.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& file);
/// Every field, pretty-printed; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

/// Cross-field checks: n_paths >= 1, checkpoints strictly increasing,
/// referenced files exist, enum strings known.
void validate(const ExperimentConfig& cfg);

DynamicsKind parse_dynamics(const std::string& s);
LinearNoise parse_linear_noise(const std::string& s);
LinearInteraction parse_linear_interaction(const std::string& s);
CouplingMode parse_coupling_mode(const std::string& s);
CouplingNoise parse_coupling_noise(const std::string& s);

}  // namespace mvl
