#include "mvl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mvl/dynamics.hpp"
#include "mvl/parallel.hpp"
#include "mvl/report.hpp"
#include "mvl/rng.hpp"
#include "mvl/theory.hpp"

namespace mvl {

namespace fs = std::filesystem;

namespace {

// Non-affine interactions average over every point at every step.
constexpr Eigen::Index kFrozenLawPoints = 1024;

std::string format_k(double k) {
  std::ostringstream s;
  s << k;
  return s.str();
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

InitialLaw to_law(const InitialConfig& c) { return {PhaseState(to_vector(c.x), to_vector(c.v)), c.variance}; }

PhaseState draw_initial(const InitialConfig& c, std::uint64_t seed) {
  PhaseState s(to_vector(c.x), to_vector(c.v));
  if (c.variance == 0.0) return s;
  DrawStream ds(seed, 1, 0);
  const Eigen::Index d = s.dim();
  Vector x(d), v(d);
  ds.normals({x.data(), static_cast<std::size_t>(d)});
  ds.normals({v.data(), static_cast<std::size_t>(d)});
  const double sd = std::sqrt(c.variance);
  return {s.x() + sd * x, s.v() + sd * v};
}

std::vector<Eigen::Index> rows(Eigen::Index from, Eigen::Index count) {
  std::vector<Eigen::Index> r(static_cast<std::size_t>(count));
  std::iota(r.begin(), r.end(), from);
  return r;
}

EmpiricalMeasure frozen_law(const ModelParams& p, const EmpiricalMeasure& reference) {
  const auto r = rows(0, p.dim());
  EmpiricalMeasure law = reference.coordinates(r);
  if (p.has_interaction() && !p.interaction_affine_in_second()) law = law.thinned(kFrozenLawPoints);
  return law;
}

struct MeanStderr {
  double mean = 0.0, stderr_ = 0.0;
};

MeanStderr summarize(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

double exact_linear_k(const ExperimentConfig& cfg, const ModelParams& p) {
  if (p.dim() != 1) throw config_error("dynamics: exactlinear needs a one-dimensional model");
  if (p.has_g()) throw config_error("dynamics: exactlinear needs g = 0");
  if (cfg.model.name == "sec5") return cfg.model.k;
  if (cfg.model.interaction == "none") return 0.0;
  if (cfg.model.interaction == "mean") return cfg.model.interaction_strength;
  throw config_error("dynamics: exactlinear needs interaction none or mean");
}

}  // namespace

void apply_overrides(ExperimentConfig& cfg, const std::string& verb, const Overrides& o) {
  if (o.seed) cfg.integrator.rng_seed = *o.seed;
  if (o.out) cfg.output = *o.out;
  if (verb == "contract") {
    if (o.steps) cfg.coupling.t_end = static_cast<double>(*o.steps) * cfg.coupling.dt;
    if (o.paths) cfg.coupling.n_pairs = *o.paths;
    return;
  }
  if (o.paths) cfg.n_paths = *o.paths;
  if (o.steps) {
    if (verb == "moments")
      cfg.moments.n_steps = *o.steps;
    else
      cfg.integrator.n_steps = *o.steps;
  }
}

EmpiricalMeasure reference_sample(const ExperimentConfig& cfg, const ModelParams& p) {
  const Eigen::Index d = p.dim();
  if (cfg.reference.kind == "file") {
    std::ifstream in(cfg.reference.path);
    if (!in) throw config_error("reference.path: cannot open " + cfg.reference.path);
    EmpiricalMeasure m = read_measure(in);
    const Vector& w = m.weights();
    if (w.maxCoeff() - w.minCoeff() > 1e-12 * w.maxCoeff())
      throw config_error("reference: sample file must carry equal weights");
    m = EmpiricalMeasure(Matrix(m.points()));
    if (m.dim() != d && m.dim() != 2 * d)
      throw config_error("reference: sample dimension must be d (positions) or 2d (phase space)");
    return m;
  }
  if (p.has_g()) throw config_error("reference: gaussian_invariant needs g = 0");
  const Eigen::LLT<Matrix> llt(p.k_matrix().inverse());
  const Matrix l = llt.matrixL();
  const auto n = static_cast<Eigen::Index>(cfg.reference.size);
  Matrix pts(2 * d, n);
  Vector xi(2 * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    DrawStream s(cfg.reference.seed, 0, static_cast<std::uint64_t>(i));
    s.normals({xi.data(), static_cast<std::size_t>(2 * d)});
    pts.col(i).head(d) = l * xi.head(d);
    pts.col(i).tail(d) = xi.tail(d);
  }
  return EmpiricalMeasure(std::move(pts));
}

std::vector<Sec5Curve> run_sec5_figure(const ExperimentConfig& cfg, bool write_files) {
  if (cfg.sec5_figure.k_list.empty()) throw config_error("sec5_figure.k_list: must be non-empty");
  if (cfg.n_paths < 1) throw config_error("n_paths: must be >= 1");
  const LinearNoise noise = parse_linear_noise(cfg.sec5_figure.noise);
  const std::vector<std::int64_t> checkpoints = make_checkpoints(cfg.checkpoints, cfg.integrator.n_steps);
  std::vector<Sec5Curve> curves;
  for (double k : cfg.sec5_figure.k_list) {
    const ModelParams p = ModelParams::sec5(k);
    const auto n_paths = static_cast<std::size_t>(cfg.n_paths);
    std::vector<std::vector<std::pair<std::int64_t, double>>> logs(n_paths);
    parallel_for(n_paths, cfg.threads, [&](std::size_t path) {
      IntegratorConfig ic = cfg.integrator;
      ic.rng_seed = derive_seed(cfg.integrator.rng_seed, path);
      RunExtras ex;
      ex.initial = draw_initial(cfg.initial, ic.rng_seed);
      ex.k = k;
      ex.linear_noise = noise;
      ex.linear_interaction = LinearInteraction::running_mean;
      ex.checkpoints = checkpoints;
      ex.storage_stride = ic.n_steps;
      logs[path] = run_trajectory(DynamicsKind::exactlinear, p, ic, ex).mean_norm_log;
    });
    Sec5Curve c;
    c.k = k;
    for (std::size_t i = 0; i < logs.front().size(); ++i) {
      std::vector<double> v;
      for (const auto& l : logs) v.push_back(l[i].second);
      const MeanStderr s = summarize(v);
      c.steps.push_back(logs.front()[i].first);
      c.mean_abs_m.push_back(s.mean);
      c.stderr_abs_m.push_back(s.stderr_);
    }
    curves.push_back(std::move(c));
  }
  if (write_files) {
    const fs::path out = cfg.output;
    std::vector<Series> series;
    for (const auto& c : curves) {
      std::vector<double> j(c.steps.begin(), c.steps.end());
      write_csv_file(out / ("sec5_k" + format_k(c.k) + ".csv"), {"j", "mean_abs_m", "stderr"},
                     {j, c.mean_abs_m, c.stderr_abs_m});
      series.push_back({"k = " + format_k(c.k), j, c.mean_abs_m});
    }
    write_svg_file(out / "sec5_figure_log.svg", {"Mean |m_j| over paths", "j", "|m_j|", true, true}, series);
    write_svg_file(out / "sec5_figure_linear.svg", {"Mean |m_j| over paths", "j", "|m_j|", true, false}, series);
  }
  return curves;
}

ConvergenceResult run_empirical_convergence(const ExperimentConfig& cfg, bool write_files) {
  validate(cfg);
  const ModelParams p = build_model(cfg.model);
  const DynamicsKind kind = parse_dynamics(cfg.dynamics);
  const Eigen::Index d = p.dim();
  const EmpiricalMeasure reference = reference_sample(cfg, p);
  const bool phase = cfg.space == "phase";
  if (phase && reference.dim() != 2 * d) throw config_error("space: phase needs a phase-space reference sample");
  const std::vector<Eigen::Index> space_rows = rows(0, phase ? 2 * d : d);
  const EmpiricalMeasure ref_space = reference.coordinates(space_rows);
  std::vector<std::vector<double>> ref_sorted;
  for (Eigen::Index r = 0; r < ref_space.dim(); ++r) {
    std::vector<double> v(ref_space.points().row(r).begin(), ref_space.points().row(r).end());
    std::sort(v.begin(), v.end());
    ref_sorted.push_back(std::move(v));
  }
  const EmpiricalMeasure ref_small = ref_space.thinned(cfg.max_points);
  const std::vector<std::int64_t> checkpoints = make_checkpoints(cfg.checkpoints, cfg.integrator.n_steps);

  RunExtras base;
  if (kind == DynamicsKind::exactlinear) {
    base.k = exact_linear_k(cfg, p);
    base.linear_noise = parse_linear_noise(cfg.linear_noise);
    base.linear_interaction = parse_linear_interaction(cfg.linear_interaction);
    base.fixed_mean = cfg.fixed_mean;
  } else if (kind == DynamicsKind::frozen) {
    base.mu_x = frozen_law(p, reference);
  }

  const auto n_paths = static_cast<std::size_t>(cfg.n_paths);
  std::vector<std::vector<double>> w1(n_paths);
  std::vector<double> var_x(n_paths), var_v(n_paths);
  parallel_for(n_paths, cfg.threads, [&](std::size_t path) {
    IntegratorConfig ic = cfg.integrator;
    ic.rng_seed = derive_seed(cfg.integrator.rng_seed, path);
    RunExtras ex = base;
    ex.initial = draw_initial(cfg.initial, ic.rng_seed);
    const RunResult run = run_trajectory(kind, p, ic, ex);
    const Trajectory& tr = run.trajectory;
    Matrix states(2 * d, tr.size());
    states.topRows(d) = tr.positions();
    states.bottomRows(d) = tr.velocities();
    const auto var = [](const auto& row) {
      const double m = row.mean();
      return (row.array() - m).square().mean();
    };
    var_x[path] = var(tr.positions().row(0));
    var_v[path] = var(tr.velocities().row(0));

    for (std::int64_t j : checkpoints) {
      const Eigen::Index n = static_cast<Eigen::Index>(j) + 1;
      double value = 0.0;
      // Sliced W1 in one dimension is the exact quantile distance.
      if (cfg.metric == "w1_1d_marginals" || (cfg.metric == "w1_sliced" && space_rows.size() == 1)) {
        std::vector<double> buf(static_cast<std::size_t>(n));
        for (std::size_t r = 0; r < space_rows.size(); ++r) {
          for (Eigen::Index c = 0; c < n; ++c) buf[static_cast<std::size_t>(c)] = states(space_rows[r], c);
          std::sort(buf.begin(), buf.end());
          value = std::max(value, w1_uniform_sorted(buf, ref_sorted[r]));
        }
      } else {
        const EmpiricalMeasure emp(states.topRows(static_cast<Eigen::Index>(space_rows.size())).leftCols(n));
        if (cfg.metric == "w1_small")
          value = w1_exact_small(emp.thinned(cfg.max_points), ref_small);
        else
          value = w1_sliced(emp, ref_space, cfg.sliced_projections, derive_seed(ic.rng_seed, static_cast<std::uint64_t>(j)));
      }
      w1[path].push_back(value);
    }
  });

  ConvergenceResult r;
  r.steps = checkpoints;
  r.reference_size = reference.size();
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    std::vector<double> v;
    for (const auto& w : w1) v.push_back(w[k]);
    const MeanStderr s = summarize(v);
    r.times.push_back(static_cast<double>(checkpoints[k]) * cfg.integrator.dt);
    r.mean_w1.push_back(s.mean);
    r.stderr_w1.push_back(s.stderr_);
  }
  r.var_x = summarize(var_x).mean;
  r.var_v = summarize(var_v).mean;

  // Slope over the final decade of time.
  std::vector<double> lx, ly;
  const double t_last = r.times.back();
  for (std::size_t k = 0; k < r.times.size(); ++k)
    if (r.times[k] > 0.0 && r.times[k] >= t_last / 10.0 * (1.0 - 1e-12) && r.mean_w1[k] > 0.0) {
      lx.push_back(std::log(r.times[k]));
      ly.push_back(std::log(r.mean_w1[k]));
    }
  r.slope_points = lx.size();
  if (lx.size() >= 2) {
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    r.slope = sxy / sxx;
  }

  const Admissibility a = admissibility(p);
  r.admissible = a.admissible();
  r.eps_max_meanfield = a.eps_max_meanfield;
  r.eps_max_selfinteracting = a.eps_max_selfinteracting;
  r.admissibility_note = a.note;

  if (write_files) {
    const fs::path out = cfg.output;
    std::vector<double> steps(r.steps.begin(), r.steps.end());
    write_csv_file(out / "convergence.csv", {"t", "step", "mean_w1", "stderr"}, {r.times, steps, r.mean_w1, r.stderr_w1});
    std::ostringstream s;
    s << std::setprecision(17) << "metric = " << cfg.metric << "\nspace = " << cfg.space << "\nn_paths = " << cfg.n_paths
      << "\nreference_size = " << r.reference_size << "\nfinal_decade_slope = " << r.slope
      << "\nslope_points = " << r.slope_points << "\neps_max_meanfield = " << r.eps_max_meanfield
      << "\neps_max_selfinteracting = " << r.eps_max_selfinteracting
      << "\nadmissible = " << (r.admissible ? "true" : "false") << "\nadmissibility_note = " << r.admissibility_note
      << "\nvar_x = " << r.var_x << "\nvar_v = " << r.var_v << '\n';
    write_text_file(out / "convergence_summary.txt", s.str());
    const std::vector<Series> series{{"mean W1", r.times, r.mean_w1}};
    write_svg_file(out / "convergence_log.svg", {"Empirical measure vs reference", "t", "W1", true, true}, series);
    write_svg_file(out / "convergence_linear.svg", {"Empirical measure vs reference", "t", "W1", true, false}, series);
  }
  return r;
}

int run_admissibility_report(const ExperimentConfig& cfg, std::ostream& out) {
  const ModelParams p = build_model(cfg.model);
  const Admissibility a = admissibility(p);
  const auto old = out.precision(17);
  out << "model = " << p.label() << '\n'
      << "gamma = " << p.gamma() << "\nkappa = " << p.kappa() << "\nL_K = " << p.l_k() << "\nL_g = " << p.l_g()
      << "\nL_I = " << p.l_int() << "\nR = " << p.r_dissip() << '\n'
      << "eq2_ok = " << (a.eq2_ok ? "true" : "false") << '\n'
      << "eq3_ok = " << (a.eq3_ok ? "true" : "false") << '\n'
      << "l_int_threshold = " << a.l_int_threshold << '\n'
      << "eps_range_meanfield = (0, " << a.eps_max_meanfield << ")\n"
      << "eps_range_selfinteracting = (0, " << a.eps_max_selfinteracting << ")\n"
      << "note = " << a.note << '\n';
  if (a.constants) write_constants_report(out, *a.constants);
  if (cfg.model.name == "sec5") write_noise_report(out, sec5_noise_covariance_report());
  out << "admissible = " << (a.admissible() ? "true" : "false") << '\n';
  out.precision(old);
  return a.admissible() ? 0 : 1;
}

ContractionReport run_contraction(const ExperimentConfig& cfg, bool write_files) {
  validate(cfg);
  const ModelParams p = build_model(cfg.model);
  const Theory th = build_theory(p);
  const CouplingConfig& cc = cfg.coupling;
  ContractionConfig c;
  c.mode = parse_coupling_mode(cc.mode);
  c.options.noise = parse_coupling_noise(cc.noise);
  c.options.blend = {cc.delta, th.constants.d_of_r_tilde, cc.literal_blending};
  c.dt = cc.dt;
  c.t_end = cc.t_end;
  c.checkpoint_every = cc.checkpoint_every;
  c.n_pairs = cc.n_pairs;
  c.seed = cfg.integrator.rng_seed;
  c.first = to_law(cc.first);
  c.second = to_law(cc.second);
  c.common_initial_draw = cc.common_initial_draw;
  if (p.has_interaction()) c.mu_x = frozen_law(p, reference_sample(cfg, p));
  c.ensemble_size = cc.ensemble_size;
  c.bootstrap = cc.bootstrap;
  c.delta_sensitivity = cc.delta_sensitivity;
  c.threads = cfg.threads;
  const ContractionReport r = contraction_experiment(p, th, c);
  if (write_files) {
    const fs::path out = cfg.output;
    fs::create_directories(out);
    {
      std::ofstream f(out / "contraction.csv", std::ios::binary);
      write_contraction_csv(f, r);
    }
    std::ostringstream s;
    write_contraction_summary(s, r);
    s << "note = " << r.admissibility_note << '\n';
    write_text_file(out / "contraction_summary.txt", s.str());
    std::vector<double> ref;
    for (double t : r.times) ref.push_back(r.mean_rho.front() * std::exp(-r.c3_reference * t));
    write_svg_file(out / "contraction.svg", {"Coupled pairs", "t", "E[rho]", false, true},
                   {{"mean rho", r.times, r.mean_rho}, {"c3 reference", r.times, ref}});
  }
  return r;
}

MomentReport run_moments(const ExperimentConfig& cfg, bool write_files) {
  validate(cfg);
  const ModelParams p = build_model(cfg.model);
  MomentConfig m;
  m.dt = cfg.moments.dt;
  m.n_steps = cfg.moments.n_steps;
  m.checkpoint_stride = cfg.moments.checkpoint_stride;
  m.n_paths = cfg.n_paths;
  m.seed = cfg.integrator.rng_seed;
  m.initial = to_law(cfg.moments.initial);
  m.burn_in_fraction = cfg.moments.burn_in_fraction;
  if (p.has_interaction()) m.mu_x = frozen_law(p, reference_sample(cfg, p));
  m.threads = cfg.threads;
  const MomentReport r = moment_experiment(p, m);
  if (write_files) {
    const fs::path out = cfg.output;
    fs::create_directories(out);
    {
      std::ofstream f(out / "moments.csv", std::ios::binary);
      write_moment_csv(f, r);
    }
    std::ostringstream s;
    s << std::setprecision(17) << "sup_first_quarter = " << r.sup_first_quarter
      << "\nsup_final_quarter = " << r.sup_final_quarter << "\ngrowth_flag = " << (r.growth_flag ? "true" : "false")
      << '\n';
    write_text_file(out / "moments_summary.txt", s.str());
    write_svg_file(out / "moments.svg", {"Second moment, frozen dynamics", "t", "E|Y|^2 + E|U|^2", false, false},
                   {{"second moment", r.times, r.second_moment}, {"running sup", r.times, r.running_sup}});
  }
  return r;
}

}  // namespace mvl
