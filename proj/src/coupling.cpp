#include "mvl/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mvl/dynamics.hpp"
#include "mvl/errors.hpp"
#include "mvl/parallel.hpp"
#include "mvl/rng.hpp"

namespace mvl {

Vector CouplingState::e_dir(double gamma) const {
  const Vector h = h_diff(gamma);
  const double n = h.norm();
  return n > 0.0 ? Vector(h / n) : Vector(Vector::Zero(h.size()));
}

void validate(const BlendingParams& bp) {
  if (!(bp.delta > 0.0 && bp.delta < 1.0)) throw std::invalid_argument("BlendingParams: delta must lie in (0, 1)");
  if (!(bp.d_threshold >= 0.0)) throw std::invalid_argument("BlendingParams: d_threshold must be >= 0");
}

double smoothstep(double u) noexcept {
  if (!(u > 0.0)) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

Blend blending(const BlendingParams& bp, const TheoryConstants& tc, const ModelParams& p,
               const Vector& f_diff, const Vector& g_diff) {
  const double h = (f_diff + g_diff / p.gamma()).norm();
  if (h == 0.0) return {0.0, 1.0};
  const double d = bp.d_threshold;
  double lambda = smoothstep(h / bp.delta);
  if (d > 0.0 || bp.literal) {
    const PhaseState diff(f_diff, g_diff);
    const double big_delta = r_s_norm(p, diff) - tc.eps0 * r_l_norm(p, tc.tau, diff);
    const double offset = d > 0.0 ? bp.delta : 0.0;
    lambda *= smoothstep((d + offset - big_delta) / bp.delta);
  }
  return {lambda, std::sqrt(std::max(0.0, 1.0 - lambda * lambda))};
}

namespace {

Vector first_interaction(CouplingMode mode, const ModelParams& p, const Vector& x, const CouplingAux& aux) {
  if (!p.has_interaction()) return Vector::Zero(x.size());
  switch (mode) {
    case CouplingMode::meanfield_vs_frozen:
      if (!aux.meanfield_law) throw std::invalid_argument("coupled_step: mean-field mode needs meanfield_law");
      return interaction_average(p, x, *aux.meanfield_law);
    case CouplingMode::selfinteracting_vs_frozen:
      if (aux.path_mean) return p.interaction(x, *aux.path_mean);
      if (!aux.path_history) throw std::invalid_argument("coupled_step: self-interacting mode needs a path measure");
      {
        Vector acc = Vector::Zero(x.size());
        for (Eigen::Index j = 0; j < aux.path_history->cols(); ++j) acc += p.interaction(x, aux.path_history->col(j));
        return acc / static_cast<double>(aux.path_history->cols());
      }
    case CouplingMode::frozen_vs_frozen:
      break;
  }
  if (!aux.frozen_law) throw std::invalid_argument("coupled_step: frozen mode needs frozen_law");
  return interaction_average(p, x, *aux.frozen_law);
}

}  // namespace

CoupledStepResult coupled_step(CouplingMode mode, const ModelParams& p, const TheoryConstants& tc,
                               const CouplingOptions& opt, const CouplingState& cs,
                               const CouplingAux& aux, double dt, const CouplingNoiseDraw& noise,
                               std::int64_t step) {
  const Eigen::Index d = p.dim();
  if (noise.xi.size() != d || noise.eta.size() != d) throw std::invalid_argument("coupled_step: noise dimension mismatch");
  const double gamma = p.gamma();
  const double sigma = std::sqrt(2.0 * gamma * dt);

  Vector b2 = Vector::Zero(d);
  if (p.has_interaction()) {
    if (!aux.frozen_law) throw std::invalid_argument("coupled_step: frozen_law is required");
    b2 = interaction_average(p, cs.second.x(), *aux.frozen_law);
  }
  const Vector b1 = first_interaction(mode, p, cs.first.x(), aux);

  const Vector f = cs.f_diff(), g = cs.g_diff();
  CoupledStepResult out{cs, blending(opt.blend, tc, p, f, g), false};
  const double lambda = out.blend.lambda, pi = out.blend.pi;

  // Noiseless part of the step.
  Vector x1 = cs.first.x() + cs.first.v() * dt;
  Vector x2 = cs.second.x() + cs.second.v() * dt;
  Vector v1 = cs.first.v() + (external_force(p, cs.first.x()) + b1 - gamma * cs.first.v()) * dt;
  Vector v2 = cs.second.v() + (external_force(p, cs.second.x()) + b2 - gamma * cs.second.v()) * dt;

  Vector xi2 = noise.xi;
  if (lambda > 0.0) {
    if (opt.noise == CouplingNoise::reflection) {
      const Vector e = cs.e_dir(gamma);
      xi2 -= 2.0 * e.dot(noise.xi) * e;
    } else {
      const Vector hdet = (x1 - x2) + (v1 - v2) / gamma;
      const double hn = hdet.norm();
      if (hn > 0.0) {
        const Vector e = hdet / hn;
        const double a = gamma * hn / (sigma * lambda);
        const double xe = e.dot(noise.xi);
        // Accept the meeting shift with probability phi(xe + a) / phi(xe).
        if (std::log(noise.u) <= -a * xe - 0.5 * a * a) {
          xi2 += a * e;
          out.met = true;
        } else {
          xi2 -= 2.0 * xe * e;
        }
      }
    }
  }
  v1 += sigma * (lambda * noise.xi + pi * noise.eta);
  v2 += sigma * (lambda * xi2 + pi * noise.eta);
  if (!x1.allFinite() || !v1.allFinite() || !x2.allFinite() || !v2.allFinite())
    throw step_error("coupled_step: non-finite state", step);
  out.state = {PhaseState(std::move(x1), std::move(v1)), PhaseState(std::move(x2), std::move(v2))};
  return out;
}

RateFit fit_log_linear(const std::vector<double>& t, const std::vector<double>& y, std::size_t min_points) {
  if (t.size() != y.size()) throw std::invalid_argument("fit_log_linear: size mismatch");
  RateFit fit;
  const std::size_t n = t.size();
  const std::size_t take = std::min(n, std::max((n + 1) / 2, min_points));
  std::vector<double> xs, ys;
  for (std::size_t i = n - take; i < n; ++i)
    if (y[i] > 0.0 && std::isfinite(y[i])) {
      xs.push_back(t[i]);
      ys.push_back(std::log(y[i]));
    }
  fit.points = xs.size();
  if (xs.size() < 2) return fit;
  const double m = static_cast<double>(xs.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) return fit;
  fit.rate = sxy / sxx;
  fit.intercept = my - fit.rate * mx;
  fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  fit.valid = true;
  return fit;
}

namespace {

std::int64_t steps_for(double span, double dt, const char* what) {
  const double n = span / dt;
  const auto r = static_cast<std::int64_t>(std::llround(n));
  if (r < 1 || std::abs(n - static_cast<double>(r)) > 1e-6 * std::max(1.0, n))
    throw std::invalid_argument(std::string("contraction_experiment: ") + what + " must be a positive multiple of dt");
  return r;
}

PhaseState draw_initial(const InitialLaw& law, DrawStream& s) {
  const Eigen::Index d = law.mean.dim();
  if (law.variance == 0.0) return law.mean;
  const double sd = std::sqrt(law.variance);
  Vector x(d), v(d);
  s.normals({x.data(), static_cast<std::size_t>(d)});
  s.normals({v.data(), static_cast<std::size_t>(d)});
  return {law.mean.x() + sd * x, law.mean.v() + sd * v};
}

// Positions of the mean-field surrogate ensemble at every step.
std::vector<EmpiricalMeasure> simulate_surrogate(const ModelParams& p, const ContractionConfig& cfg,
                                                 std::int64_t n_steps) {
  const std::uint64_t seed = derive_seed(cfg.seed, kAuxStreamBase);
  std::vector<PhaseState> ens;
  for (int i = 0; i < cfg.ensemble_size; ++i) {
    DrawStream s(seed, kAuxStreamBase + static_cast<std::uint32_t>(i), 0);
    ens.push_back(draw_initial(cfg.first, s));
  }
  auto law_of = [&] {
    Matrix pts(p.dim(), static_cast<Eigen::Index>(ens.size()));
    for (std::size_t i = 0; i < ens.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = ens[i].x();
    return EmpiricalMeasure(std::move(pts));
  };
  std::vector<EmpiricalMeasure> laws;
  laws.reserve(static_cast<std::size_t>(n_steps));
  std::vector<Vector> noises(ens.size(), Vector(p.dim()));
  for (std::int64_t j = 0; j < n_steps; ++j) {
    laws.push_back(law_of());
    for (std::size_t i = 0; i < ens.size(); ++i) {
      DrawStream s(seed, static_cast<std::uint32_t>(i), static_cast<std::uint64_t>(j));
      s.normals({noises[i].data(), static_cast<std::size_t>(p.dim())});
    }
    ens = em_step_meanfield(p, ens, cfg.dt, noises, j + 1);
  }
  return laws;
}

struct PairCurves {
  std::vector<std::vector<double>> rho;  // [pair][checkpoint]
};

PairCurves simulate_pairs(const ModelParams& p, const Theory& th, const ContractionConfig& cfg,
                          std::int64_t n_steps, std::int64_t stride,
                          const std::vector<EmpiricalMeasure>& surrogate) {
  const Eigen::Index d = p.dim();
  const EmpiricalMeasure frozen = cfg.mu_x ? *cfg.mu_x : EmpiricalMeasure(Matrix::Zero(d, 1));
  const std::size_t n_ck = static_cast<std::size_t>(n_steps / stride) + 1;
  PairCurves out;
  out.rho.assign(static_cast<std::size_t>(cfg.n_pairs), std::vector<double>(n_ck, 0.0));
  const bool shortcut = p.interaction_affine_in_second();

  parallel_for(static_cast<std::size_t>(cfg.n_pairs), cfg.threads, [&](std::size_t pair) {
    const std::uint64_t seed = derive_seed(cfg.seed, pair);
    DrawStream init(seed, 1, 0);
    const PhaseState a = draw_initial(cfg.first, init);
    PhaseState b = cfg.second.mean;
    if (cfg.common_initial_draw) {
      b = PhaseState(cfg.second.mean.x() + (a.x() - cfg.first.mean.x()),
                     cfg.second.mean.v() + (a.v() - cfg.first.mean.v()));
    } else {
      b = draw_initial(cfg.second, init);
    }
    CouplingState cs{a, b};
    RunningMean path_mean(a.x());
    std::vector<double> history(a.x().data(), a.x().data() + d);
    CouplingNoiseDraw nd{Vector(d), Vector(d), 0.5};
    auto& rho = out.rho[pair];
    rho[0] = rho_semimetric(th.constants, th.aux, p, cs.difference());
    for (std::int64_t j = 0; j < n_steps; ++j) {
      DrawStream s(seed, 0, static_cast<std::uint64_t>(j));
      s.normals({nd.xi.data(), static_cast<std::size_t>(d)});
      s.normals({nd.eta.data(), static_cast<std::size_t>(d)});
      nd.u = s.uniform();
      CouplingAux aux;
      aux.frozen_law = &frozen;
      Matrix hist_view;
      if (cfg.mode == CouplingMode::meanfield_vs_frozen) aux.meanfield_law = &surrogate[static_cast<std::size_t>(j)];
      if (cfg.mode == CouplingMode::selfinteracting_vs_frozen) {
        if (shortcut) {
          aux.path_mean = &path_mean.mean();
        } else {
          hist_view = Eigen::Map<const Matrix>(history.data(), d, static_cast<Eigen::Index>(history.size()) / d);
          aux.path_history = &hist_view;
        }
      }
      cs = coupled_step(cfg.mode, p, th.constants, cfg.options, cs, aux, cfg.dt, nd, j + 1).state;
      if (cfg.mode == CouplingMode::selfinteracting_vs_frozen) {
        path_mean.update(cs.first.x());
        if (!shortcut) history.insert(history.end(), cs.first.x().data(), cs.first.x().data() + d);
      }
      if ((j + 1) % stride == 0)
        rho[static_cast<std::size_t>((j + 1) / stride)] = rho_semimetric(th.constants, th.aux, p, cs.difference());
    }
  });
  return out;
}

std::vector<double> mean_curve(const PairCurves& c, const std::vector<std::size_t>& idx) {
  std::vector<double> m(c.rho.front().size(), 0.0);
  for (std::size_t i : idx)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += c.rho[i][k];
  for (double& v : m) v /= static_cast<double>(idx.size());
  return m;
}

RateFit fit_with_bootstrap(const PairCurves& c, const std::vector<double>& times, const ContractionConfig& cfg) {
  const std::size_t n = c.rho.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  RateFit fit = fit_log_linear(times, mean_curve(c, all));
  if (!fit.valid || cfg.bootstrap < 2) return fit;
  const std::uint64_t seed = derive_seed(cfg.seed, kAuxStreamBase + 1);
  std::vector<double> rates;
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < cfg.bootstrap; ++b) {
    DrawStream s(seed, 0, static_cast<std::uint64_t>(b));
    for (auto& i : idx) i = std::min(n - 1, static_cast<std::size_t>(s.uniform() * static_cast<double>(n)));
    const RateFit r = fit_log_linear(times, mean_curve(c, idx));
    if (r.valid) rates.push_back(r.rate);
  }
  if (rates.size() >= 2) {
    double m = 0.0;
    for (double r : rates) m += r;
    m /= static_cast<double>(rates.size());
    double ss = 0.0;
    for (double r : rates) ss += (r - m) * (r - m);
    fit.stderr_bootstrap = std::sqrt(ss / static_cast<double>(rates.size() - 1));
  }
  return fit;
}

}  // namespace

ContractionReport contraction_experiment(const ModelParams& p, const Theory& th, const ContractionConfig& cfg) {
  validate(cfg.options.blend);
  if (cfg.n_pairs < 1) throw std::invalid_argument("contraction_experiment: n_pairs must be >= 1");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("contraction_experiment: dt must be > 0");
  if (cfg.first.mean.dim() != p.dim() || cfg.second.mean.dim() != p.dim())
    throw std::invalid_argument("contraction_experiment: initial law dimension mismatch");
  if (cfg.first.variance < 0.0 || cfg.second.variance < 0.0)
    throw std::invalid_argument("contraction_experiment: initial variance must be >= 0");
  if (cfg.mode == CouplingMode::meanfield_vs_frozen && cfg.ensemble_size < 2)
    throw std::invalid_argument("contraction_experiment: ensemble_size must be >= 2");
  const std::int64_t n_steps = steps_for(cfg.t_end, cfg.dt, "t_end");
  const std::int64_t stride = steps_for(cfg.checkpoint_every, cfg.dt, "checkpoint_every");

  ContractionReport rep;
  rep.delta = cfg.options.blend.delta;
  rep.c3_reference = th.constants.c3;
  rep.ensemble_size = cfg.mode == CouplingMode::meanfield_vs_frozen ? cfg.ensemble_size : 0;
  rep.admissible = p.l_int() <= th.constants.l_int_threshold;
  {
    std::ostringstream note;
    note << std::setprecision(6) << "L^I = " << p.l_int() << (rep.admissible ? " <= " : " > ") << "threshold "
         << th.constants.l_int_threshold;
    if (!rep.admissible) note << "; not admissible, proceeding anyway";
    rep.admissibility_note = note.str();
  }

  const std::vector<EmpiricalMeasure> surrogate =
      cfg.mode == CouplingMode::meanfield_vs_frozen ? simulate_surrogate(p, cfg, n_steps) : std::vector<EmpiricalMeasure>{};
  const PairCurves curves = simulate_pairs(p, th, cfg, n_steps, stride, surrogate);

  const std::size_t n_ck = curves.rho.front().size();
  const double n = static_cast<double>(cfg.n_pairs);
  for (std::size_t k = 0; k < n_ck; ++k) {
    rep.times.push_back(static_cast<double>(static_cast<std::int64_t>(k) * stride) * cfg.dt);
    double m = 0.0;
    for (const auto& c : curves.rho) m += c[k];
    m /= n;
    double ss = 0.0;
    for (const auto& c : curves.rho) ss += (c[k] - m) * (c[k] - m);
    rep.mean_rho.push_back(m);
    rep.stderr_rho.push_back(cfg.n_pairs > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0);
  }
  std::size_t met = 0;
  for (const auto& c : curves.rho) met += c.back() == 0.0;
  rep.meeting_fraction = static_cast<double>(met) / n;
  rep.fit = fit_with_bootstrap(curves, rep.times, cfg);

  if (cfg.delta_sensitivity) {
    ContractionConfig half = cfg;
    half.options.blend.delta = cfg.options.blend.delta / 2.0;
    half.delta_sensitivity = false;
    const PairCurves hc = simulate_pairs(p, th, half, n_steps, stride, surrogate);
    rep.half_delta_fit = fit_with_bootstrap(hc, rep.times, half);
  }
  return rep;
}

void write_contraction_csv(std::ostream& out, const ContractionReport& r) {
  const auto old = out.precision(17);
  out << "t,mean_rho,stderr,c3_reference\n";
  const double start = r.mean_rho.empty() ? 0.0 : r.mean_rho.front();
  for (std::size_t i = 0; i < r.times.size(); ++i)
    out << r.times[i] << ',' << r.mean_rho[i] << ',' << r.stderr_rho[i] << ','
        << start * std::exp(-r.c3_reference * r.times[i]) << '\n';
  out.precision(old);
}

void write_contraction_summary(std::ostream& out, const ContractionReport& r) {
  const auto old = out.precision(17);
  out << "fitted_rate=" << r.fit.rate << " rate_stderr=" << r.fit.stderr_bootstrap << " r_squared=" << r.fit.r_squared
      << " fit_points=" << r.fit.points << " c3_reference=" << r.c3_reference << " delta=" << r.delta;
  if (r.half_delta_fit)
    out << " half_delta_rate=" << r.half_delta_fit->rate << " half_delta_stderr=" << r.half_delta_fit->stderr_bootstrap;
  out << " ensemble_size=" << r.ensemble_size << " meeting_fraction=" << r.meeting_fraction
      << " admissible=" << (r.admissible ? "true" : "false") << '\n';
  out.precision(old);
}

MomentReport moment_experiment(const ModelParams& p, const MomentConfig& cfg) {
  if (cfg.n_paths < 1) throw std::invalid_argument("moment_experiment: n_paths must be >= 1");
  if (!(cfg.dt > 0.0) || cfg.n_steps < 1 || cfg.checkpoint_stride < 1)
    throw std::invalid_argument("moment_experiment: need dt > 0, n_steps >= 1, checkpoint_stride >= 1");
  if (cfg.initial.mean.dim() != p.dim()) throw std::invalid_argument("moment_experiment: initial law dimension mismatch");
  if (cfg.initial.variance < 0.0) throw std::invalid_argument("moment_experiment: variance must be >= 0");
  const Eigen::Index d = p.dim();
  const EmpiricalMeasure mu = cfg.mu_x ? *cfg.mu_x : EmpiricalMeasure(Matrix::Zero(d, 1));
  const std::size_t n_ck = static_cast<std::size_t>(cfg.n_steps / cfg.checkpoint_stride) + 1;
  std::vector<std::vector<double>> m2(static_cast<std::size_t>(cfg.n_paths), std::vector<double>(n_ck));

  parallel_for(m2.size(), cfg.threads, [&](std::size_t path) {
    const std::uint64_t seed = derive_seed(cfg.seed, path);
    DrawStream init(seed, 1, 0);
    PhaseState s = draw_initial(cfg.initial, init);
    auto& out = m2[path];
    out[0] = s.x().squaredNorm() + s.v().squaredNorm();
    Vector noise(d);
    for (std::int64_t j = 0; j < cfg.n_steps; ++j) {
      DrawStream ds(seed, 0, static_cast<std::uint64_t>(j));
      ds.normals({noise.data(), static_cast<std::size_t>(d)});
      s = em_step_frozen(p, s, mu, cfg.dt, noise, j + 1);
      if ((j + 1) % cfg.checkpoint_stride == 0)
        out[static_cast<std::size_t>((j + 1) / cfg.checkpoint_stride)] = s.x().squaredNorm() + s.v().squaredNorm();
    }
  });

  MomentReport r;
  const double n = static_cast<double>(cfg.n_paths);
  double sup = 0.0;
  for (std::size_t k = 0; k < n_ck; ++k) {
    r.times.push_back(static_cast<double>(static_cast<std::int64_t>(k) * cfg.checkpoint_stride) * cfg.dt);
    double m = 0.0;
    for (const auto& c : m2) m += c[k];
    m /= n;
    double ss = 0.0;
    for (const auto& c : m2) ss += (c[k] - m) * (c[k] - m);
    r.second_moment.push_back(m);
    r.stderr_moment.push_back(cfg.n_paths > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0);
    sup = std::max(sup, m);
    r.running_sup.push_back(sup);
  }
  const std::size_t burn = std::min(n_ck - 1, static_cast<std::size_t>(cfg.burn_in_fraction * static_cast<double>(n_ck)));
  const std::size_t m = n_ck - burn;
  const std::size_t quarter = std::max<std::size_t>(1, (m + 3) / 4);
  for (std::size_t k = burn; k < burn + quarter; ++k) r.sup_first_quarter = std::max(r.sup_first_quarter, r.second_moment[k]);
  for (std::size_t k = n_ck - quarter; k < n_ck; ++k) r.sup_final_quarter = std::max(r.sup_final_quarter, r.second_moment[k]);
  r.growth_flag = r.sup_final_quarter > 2.0 * r.sup_first_quarter;
  return r;
}

void write_moment_csv(std::ostream& out, const MomentReport& r) {
  const auto old = out.precision(17);
  out << "t,second_moment,stderr,running_sup\n";
  for (std::size_t i = 0; i < r.times.size(); ++i)
    out << r.times[i] << ',' << r.second_moment[i] << ',' << r.stderr_moment[i] << ',' << r.running_sup[i] << '\n';
  out.precision(old);
}

}  // namespace mvl
