#include "mvl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mvl {

using json = nlohmann::json;
using ordered = nlohmann::ordered_json;

ModelParams build_model(const ModelConfig& mc) {
  if (mc.name == "sec5") return ModelParams::sec5(mc.k);
  if (mc.name != "generic") throw config_error("model.name: expected sec5 or generic, got " + mc.name);
  const auto d = static_cast<Eigen::Index>(mc.k_matrix.size());
  if (d == 0) throw config_error("model.k_matrix: must be a non-empty square matrix");
  ModelParams::Spec s;
  s.gamma = mc.gamma;
  s.k_matrix = Matrix(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (static_cast<Eigen::Index>(mc.k_matrix[i].size()) != d) throw config_error("model.k_matrix: must be square");
    for (Eigen::Index j = 0; j < d; ++j) s.k_matrix(i, j) = mc.k_matrix[i][j];
  }
  s.r_dissip = mc.r_dissip;
  s.label = "generic";

  const double a = mc.g_strength;
  if (mc.g == "tanh") {
    s.g = [a](const Vector& x) -> Vector { return a * x.array().tanh().matrix(); };
  } else if (mc.g == "sine") {
    s.g = [a](const Vector& x) -> Vector { return a * x.array().sin().matrix(); };
  } else if (mc.g != "none") {
    throw config_error("model.g: expected none, tanh or sine, got " + mc.g);
  }
  if (mc.g != "none") s.l_g = std::abs(a);

  const double c = mc.interaction_strength;
  if (mc.interaction == "mean") {
    s.b_int = [c](const Vector&, const Vector& y) -> Vector { return c * y; };
    s.l_int = std::abs(c);
    s.interaction_affine_in_second = true;
  } else if (mc.interaction == "difference") {
    s.b_int = [c](const Vector& x, const Vector& y) -> Vector { return c * (y - x); };
    s.l_int = std::abs(c) * std::sqrt(2.0);
    s.interaction_affine_in_second = true;
  } else if (mc.interaction == "sine_difference") {
    s.b_int = [c](const Vector& x, const Vector& y) -> Vector { return c * (y - x).array().sin().matrix(); };
    s.l_int = std::abs(c) * std::sqrt(2.0);
  } else if (mc.interaction != "none") {
    throw config_error("model.interaction: expected none, mean, difference or sine_difference, got " +
                       mc.interaction);
  }
  try {
    return ModelParams(std::move(s));
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("model: ") + e.what());
  }
}

std::vector<std::int64_t> make_checkpoints(const CheckpointConfig& cc, std::int64_t n_steps) {
  if (n_steps < 1) throw config_error("checkpoints: n_steps must be >= 1");
  std::vector<std::int64_t> out;
  if (cc.kind == "geometric") {
    if (!(cc.base > 1.0) || cc.first < 1) throw config_error("checkpoints: geometric needs base > 1 and first >= 1");
    for (double s = static_cast<double>(cc.first); s < static_cast<double>(n_steps); s *= cc.base) {
      const auto j = static_cast<std::int64_t>(std::llround(s));
      if (out.empty() || j > out.back()) out.push_back(j);
    }
  } else if (cc.kind == "linear") {
    if (cc.every < 1) throw config_error("checkpoints: linear needs every >= 1");
    for (std::int64_t j = cc.every; j < n_steps; j += cc.every) out.push_back(j);
  } else if (cc.kind == "list") {
    for (std::size_t i = 0; i < cc.steps.size(); ++i) {
      if (cc.steps[i] < 0 || cc.steps[i] > n_steps) throw config_error("checkpoints.steps: outside [0, n_steps]");
      if (i > 0 && cc.steps[i] <= cc.steps[i - 1]) throw config_error("checkpoints.steps: must be strictly increasing");
    }
    out.assign(cc.steps.begin(), cc.steps.end());
  } else {
    throw config_error("checkpoints.kind: expected geometric, linear or list, got " + cc.kind);
  }
  if (out.empty() || out.back() != n_steps) {
    if (!out.empty() && out.back() > n_steps) out.pop_back();
    out.push_back(n_steps);
  }
  return out;
}

namespace {

// Reads the members of one JSON object and rejects any key it was not asked
// about.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw config_error(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      j_.at(key).get_to(out);
    } catch (const json::exception& e) {
      throw config_error(sub(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw config_error(where() + ": unknown key '" + key + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(const json& j, const std::string& path, InitialConfig& c) {
  Reader r(j, path);
  r.get("x", c.x);
  r.get("v", c.v);
  r.get("variance", c.variance);
  r.finish();
}

ordered write(const InitialConfig& c) { return {{"x", c.x}, {"v", c.v}, {"variance", c.variance}}; }

void read(const json& j, const std::string& path, ModelConfig& c) {
  Reader r(j, path);
  r.get("name", c.name);
  r.get("k", c.k);
  r.get("gamma", c.gamma);
  r.get("k_matrix", c.k_matrix);
  r.get("g", c.g);
  r.get("g_strength", c.g_strength);
  r.get("interaction", c.interaction);
  r.get("interaction_strength", c.interaction_strength);
  r.get("r_dissip", c.r_dissip);
  r.finish();
}

ordered write(const ModelConfig& c) {
  return {{"name", c.name},         {"k", c.k},
          {"gamma", c.gamma},       {"k_matrix", c.k_matrix},
          {"g", c.g},               {"g_strength", c.g_strength},
          {"interaction", c.interaction}, {"interaction_strength", c.interaction_strength},
          {"r_dissip", c.r_dissip}};
}

void read(const json& j, const std::string& path, IntegratorConfig& c) {
  Reader r(j, path);
  r.get("dt", c.dt);
  r.get("n_steps", c.n_steps);
  r.get("seed", c.rng_seed);
  r.get("n_particles", c.n_particles);
  r.get("history_stride", c.history_stride);
  r.finish();
}

ordered write(const IntegratorConfig& c) {
  return {{"dt", c.dt},
          {"n_steps", c.n_steps},
          {"seed", c.rng_seed},
          {"n_particles", c.n_particles},
          {"history_stride", c.history_stride}};
}

void read(const json& j, const std::string& path, CheckpointConfig& c) {
  Reader r(j, path);
  r.get("kind", c.kind);
  r.get("base", c.base);
  r.get("first", c.first);
  r.get("every", c.every);
  r.get("steps", c.steps);
  r.finish();
}

ordered write(const CheckpointConfig& c) {
  return {{"kind", c.kind}, {"base", c.base}, {"first", c.first}, {"every", c.every}, {"steps", c.steps}};
}

void read(const json& j, const std::string& path, ReferenceConfig& c) {
  Reader r(j, path);
  r.get("kind", c.kind);
  r.get("size", c.size);
  r.get("seed", c.seed);
  r.get("path", c.path);
  r.finish();
}

ordered write(const ReferenceConfig& c) {
  return {{"kind", c.kind}, {"size", c.size}, {"seed", c.seed}, {"path", c.path}};
}

void read(const json& j, const std::string& path, Sec5FigureConfig& c) {
  Reader r(j, path);
  r.get("k_list", c.k_list);
  r.get("noise", c.noise);
  r.finish();
}

ordered write(const Sec5FigureConfig& c) { return {{"k_list", c.k_list}, {"noise", c.noise}}; }

void read(const json& j, const std::string& path, CouplingConfig& c) {
  Reader r(j, path);
  r.get("mode", c.mode);
  r.get("noise", c.noise);
  r.get("delta", c.delta);
  r.get("literal_blending", c.literal_blending);
  r.get("dt", c.dt);
  r.get("t_end", c.t_end);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("n_pairs", c.n_pairs);
  if (const json* f = r.child("first")) read(*f, r.sub("first"), c.first);
  if (const json* s = r.child("second")) read(*s, r.sub("second"), c.second);
  r.get("common_initial_draw", c.common_initial_draw);
  r.get("ensemble_size", c.ensemble_size);
  r.get("bootstrap", c.bootstrap);
  r.get("delta_sensitivity", c.delta_sensitivity);
  r.finish();
}

ordered write(const CouplingConfig& c) {
  return {{"mode", c.mode},
          {"noise", c.noise},
          {"delta", c.delta},
          {"literal_blending", c.literal_blending},
          {"dt", c.dt},
          {"t_end", c.t_end},
          {"checkpoint_every", c.checkpoint_every},
          {"n_pairs", c.n_pairs},
          {"first", write(c.first)},
          {"second", write(c.second)},
          {"common_initial_draw", c.common_initial_draw},
          {"ensemble_size", c.ensemble_size},
          {"bootstrap", c.bootstrap},
          {"delta_sensitivity", c.delta_sensitivity}};
}

void read(const json& j, const std::string& path, MomentsConfig& c) {
  Reader r(j, path);
  if (const json* i = r.child("initial")) read(*i, r.sub("initial"), c.initial);
  r.get("dt", c.dt);
  r.get("n_steps", c.n_steps);
  r.get("checkpoint_stride", c.checkpoint_stride);
  r.get("burn_in_fraction", c.burn_in_fraction);
  r.finish();
}

ordered write(const MomentsConfig& c) {
  return {{"initial", write(c.initial)},
          {"dt", c.dt},
          {"n_steps", c.n_steps},
          {"checkpoint_stride", c.checkpoint_stride},
          {"burn_in_fraction", c.burn_in_fraction}};
}

template <class T>
void read_child(Reader& r, const char* key, T& out) {
  if (const json* c = r.child(key)) read(*c, r.sub(key), out);
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(j, "");
  read_child(r, "model", c.model);
  r.get("dynamics", c.dynamics);
  read_child(r, "integrator", c.integrator);
  r.get("n_paths", c.n_paths);
  read_child(r, "checkpoints", c.checkpoints);
  r.get("metric", c.metric);
  r.get("space", c.space);
  r.get("max_points", c.max_points);
  r.get("sliced_projections", c.sliced_projections);
  read_child(r, "reference", c.reference);
  r.get("linear_noise", c.linear_noise);
  r.get("linear_interaction", c.linear_interaction);
  r.get("fixed_mean", c.fixed_mean);
  read_child(r, "initial", c.initial);
  r.get("output", c.output);
  r.get("threads", c.threads);
  read_child(r, "sec5_figure", c.sec5_figure);
  read_child(r, "coupling", c.coupling);
  read_child(r, "moments", c.moments);
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw config_error("config: cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  const ordered j = {{"model", write(c.model)},
                     {"dynamics", c.dynamics},
                     {"integrator", write(c.integrator)},
                     {"n_paths", c.n_paths},
                     {"checkpoints", write(c.checkpoints)},
                     {"metric", c.metric},
                     {"space", c.space},
                     {"max_points", c.max_points},
                     {"sliced_projections", c.sliced_projections},
                     {"reference", write(c.reference)},
                     {"linear_noise", c.linear_noise},
                     {"linear_interaction", c.linear_interaction},
                     {"fixed_mean", c.fixed_mean},
                     {"initial", write(c.initial)},
                     {"output", c.output},
                     {"threads", c.threads},
                     {"sec5_figure", write(c.sec5_figure)},
                     {"coupling", write(c.coupling)},
                     {"moments", write(c.moments)}};
  return j.dump(2) + "\n";
}

DynamicsKind parse_dynamics(const std::string& s) {
  if (s == "frozen") return DynamicsKind::frozen;
  if (s == "meanfield") return DynamicsKind::meanfield;
  if (s == "selfinteracting") return DynamicsKind::selfinteracting;
  if (s == "exactlinear") return DynamicsKind::exactlinear;
  throw config_error("dynamics: expected frozen, meanfield, selfinteracting or exactlinear, got " + s);
}

LinearNoise parse_linear_noise(const std::string& s) {
  if (s == "single_normal") return LinearNoise::single_normal;
  if (s == "exact_covariance") return LinearNoise::exact_covariance;
  throw config_error("linear_noise: expected single_normal or exact_covariance, got " + s);
}

LinearInteraction parse_linear_interaction(const std::string& s) {
  if (s == "running_mean") return LinearInteraction::running_mean;
  if (s == "fixed_mean") return LinearInteraction::fixed_mean;
  throw config_error("linear_interaction: expected running_mean or fixed_mean, got " + s);
}

CouplingMode parse_coupling_mode(const std::string& s) {
  if (s == "meanfield_vs_frozen") return CouplingMode::meanfield_vs_frozen;
  if (s == "selfinteracting_vs_frozen") return CouplingMode::selfinteracting_vs_frozen;
  if (s == "frozen_vs_frozen") return CouplingMode::frozen_vs_frozen;
  throw config_error("coupling.mode: unknown value " + s);
}

CouplingNoise parse_coupling_noise(const std::string& s) {
  if (s == "reflection") return CouplingNoise::reflection;
  if (s == "maximal_reflection") return CouplingNoise::maximal_reflection;
  throw config_error("coupling.noise: expected reflection or maximal_reflection, got " + s);
}

void validate(const ExperimentConfig& c) {
  const ModelParams p = build_model(c.model);
  const DynamicsKind kind = parse_dynamics(c.dynamics);
  parse_linear_noise(c.linear_noise);
  parse_linear_interaction(c.linear_interaction);
  parse_linear_noise(c.sec5_figure.noise);
  parse_coupling_mode(c.coupling.mode);
  parse_coupling_noise(c.coupling.noise);
  try {
    validate(c.integrator, kind == DynamicsKind::meanfield);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("integrator: ") + e.what());
  }
  if (c.n_paths < 1) throw config_error("n_paths: must be >= 1");
  make_checkpoints(c.checkpoints, c.integrator.n_steps);
  if (c.metric != "w1_1d_marginals" && c.metric != "w1_small" && c.metric != "w1_sliced")
    throw config_error("metric: expected w1_1d_marginals, w1_small or w1_sliced, got " + c.metric);
  if (c.space != "position" && c.space != "phase") throw config_error("space: expected position or phase, got " + c.space);
  if (c.max_points < 2) throw config_error("max_points: must be >= 2");
  if (c.sliced_projections < 1) throw config_error("sliced_projections: must be >= 1");
  if (c.reference.kind == "file") {
    if (!std::filesystem::exists(c.reference.path)) throw config_error("reference.path: no such file " + c.reference.path);
  } else if (c.reference.kind == "gaussian_invariant") {
    if (c.reference.size < 1) throw config_error("reference.size: must be >= 1");
  } else {
    throw config_error("reference.kind: expected gaussian_invariant or file, got " + c.reference.kind);
  }
  const auto d = static_cast<std::size_t>(p.dim());
  auto check_initial = [&](const InitialConfig& i, const std::string& where) {
    if (i.x.size() != d || i.v.size() != d) throw config_error(where + ": x and v must have the model dimension");
    if (!(i.variance >= 0.0)) throw config_error(where + ".variance: must be >= 0");
  };
  check_initial(c.initial, "initial");
  check_initial(c.coupling.first, "coupling.first");
  check_initial(c.coupling.second, "coupling.second");
  check_initial(c.moments.initial, "moments.initial");
  if (c.sec5_figure.k_list.empty()) throw config_error("sec5_figure.k_list: must be non-empty");
  if (!(c.coupling.delta > 0.0 && c.coupling.delta < 1.0)) throw config_error("coupling.delta: must lie in (0, 1)");
  if (c.coupling.n_pairs < 1) throw config_error("coupling.n_pairs: must be >= 1");
  if (!(c.coupling.dt > 0.0)) throw config_error("coupling.dt: must be > 0");
  if (!(c.moments.dt > 0.0) || c.moments.n_steps < 1) throw config_error("moments: need dt > 0 and n_steps >= 1");
  if (c.moments.checkpoint_stride < 1) throw config_error("moments.checkpoint_stride: must be >= 1");
  if (!(c.moments.burn_in_fraction >= 0.0 && c.moments.burn_in_fraction < 1.0))
    throw config_error("moments.burn_in_fraction: must lie in [0, 1)");
}

}  // namespace mvl
