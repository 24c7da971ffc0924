// Acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mvl/dynamics.hpp"
#include "mvl/harness.hpp"
#include "mvl/measures.hpp"
#include "mvl/rng.hpp"
#include "mvl/theory.hpp"

using namespace mvl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") out[e.path().filename().string()] = slurp(e.path());
  return out;
}

// e^{A s} for A = [[0, 1], [-2, -3]] from its eigen-decomposition.
Eigen::Matrix2d sec5_exp(double s) {
  const double a = std::exp(-s), b = std::exp(-2.0 * s);
  Eigen::Matrix2d m;
  m << 2 * a - b, a - b, -2 * a + 2 * b, -a + 2 * b;
  return m;
}

Outcome constants_identity() {
  const Theory th = build_theory(ModelParams::sec5(0.0));
  const TheoryConstants& c = th.constants;
  double err = 0.0;
  auto check = [&](double got, double want) { err = std::max(err, std::abs(got - want)); };
  check(c.tau, 1.0 / 9.0);
  check(c.alpha, 4.0 / 9.0);
  check(c.eps0, 2.0 / 9.0);
  check(c.e0, 3.0 / 8.0);
  check(c.c0, 1.0);
  check(c.l_int_threshold, std::sqrt(2.0) / 24.0);
  check(admissibility(ModelParams::sec5(0.04)).l_int_threshold, std::sqrt(2.0) / 24.0);
  for (double r : {0.0, 0.1, 1.0, 3.7, 50.0}) check(th.aux.value(r), r / 2.0);
  return {err <= 1e-12, fmt("max deviation %.3g, threshold %.15f", err, c.l_int_threshold)};
}

Outcome aux_function() {
  double rel0 = 0.0, ode = 0.0, tail = 0.0;
  for (int t = 0; t < 5; ++t) {
    DrawStream s(4242, 0, static_cast<std::uint64_t>(t));
    const double lk = 0.5 + 1.5 * s.uniform(), lg = s.uniform(), kappa = 0.5 + 1.5 * s.uniform();
    const double r1 = 0.2 + 1.3 * s.uniform();
    const double l = lk + lg;
    const AuxFunction f(r1, kappa, l);
    const double e = std::exp(l * r1 * r1 / 4.0);
    const double closed = e / kappa + (e - 1.0) / l;
    rel0 = std::max({rel0, std::abs(f.derivative_by_quadrature(0.0) / closed - 1.0),
                     std::abs(f.derivative(0.0) / closed - 1.0)});
    const auto r = f.nodes();
    const auto d = f.table_derivatives();
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
      if (r[i - 1] < r1 && r[i + 1] > r1) continue;
      if (r[i] == r1) continue;
      const double fpp = (d[i + 1] - d[i - 1]) / (r[i + 1] - r[i - 1]);
      ode = std::max(ode, std::abs(2.0 * fpp - r[i] * f.theta(r[i]) * d[i] + r[i]) / (1.0 + r[i]));
    }
    for (double x : {r1, 1.01 * r1, 2.0 * r1, 5.0 * r1 + 10.0}) tail = std::max(tail, std::abs(f.derivative(x) - 1.0 / kappa));
  }
  return {rel0 <= 1e-6 && ode < 1e-6 && tail <= 1e-10,
          fmt("f'(0) rel err %.3g, ODE residual %.3g, tail err %.3g", rel0, ode, tail)};
}

Outcome w1_oracles() {
  double worst = 0.0;
  bool axioms = true;
  auto cloud = [](std::uint64_t seed, Eigen::Index dim, Eigen::Index n, double shift) {
    Matrix m(dim, n);
    DrawStream s(seed, 0, 0);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) m(i, j) = s.normal() + shift;
    return EmpiricalMeasure(std::move(m));
  };
  for (int t = 0; t < 100; ++t) {
    DrawStream s(99, 0, static_cast<std::uint64_t>(t));
    const auto n = static_cast<Eigen::Index>(1 + s.uniform() * 50);
    const auto m = static_cast<Eigen::Index>(1 + s.uniform() * 50);
    const EmpiricalMeasure a = cloud(10000 + t, 1, n, 0.0), b = cloud(20000 + t, 1, m, 0.4);
    worst = std::max(worst, std::abs(w1_exact_1d(a, b) - w1_exact_small(a, b)));
  }
  for (int t = 0; t < 30; ++t) {
    const EmpiricalMeasure a = cloud(t, 2, 20, 0.0), b = cloud(t + 100, 2, 25, 0.5), c = cloud(t + 200, 2, 15, -1.0);
    const double ab = w1_exact_small(a, b);
    axioms = axioms && ab == w1_exact_small(b, a) && ab > 0.0;
    axioms = axioms && w1_exact_small(a, c) <= ab + w1_exact_small(b, c) + 1e-9;
    axioms = axioms && std::abs(w1_exact_small(a, a)) <= 1e-12;
  }
  return {worst <= 1e-9 && axioms, fmt("max |quantile - LP| %.3g over 100 instances, axioms %s", worst, axioms ? "hold" : "violated")};
}

Outcome exact_linear() {
  const ExactLinearMap m = ExactLinearMap::sec5(0.0);
  const double terr = (m.transition() - sec5_exp(1.0)).cwiseAbs().maxCoeff();
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  double cerr = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto integrand = [&](double s) {
        const Eigen::Matrix2d e = sec5_exp(s);
        return 6.0 * e(i, 1) * e(j, 1);
      };
      cerr = std::max(cerr, std::abs(m.noise_covariance()(i, j) - GK::integrate(integrand, 0.0, 1.0, 0, 0.0)));
    }
  const NoiseCovarianceReport r = sec5_noise_covariance_report();
  std::ostringstream report;
  write_noise_report(report, r);
  const bool generated = report.str().find("discrepancy_printed_minus_exact") != std::string::npos;
  return {terr <= 1e-12 && cerr <= 1e-12 && generated,
          fmt("transition err %.3g, covariance vs Lyapunov integral %.3g, printed-minus-exact "
              "[[%+.6f, %+.6f], [%+.6f, %+.6f]]",
              terr, cerr, r.discrepancy(0, 0), r.discrepancy(0, 1), r.discrepancy(1, 0), r.discrepancy(1, 1))};
}

ExperimentConfig stationary_config(const fs::path& out) {
  ExperimentConfig c;
  c.model.k = 0.0;
  c.dynamics = "exactlinear";
  c.linear_noise = "exact_covariance";
  c.linear_interaction = "fixed_mean";
  c.fixed_mean = 0.0;
  c.integrator.dt = 1.0;
  c.integrator.n_steps = 100000;
  c.n_paths = 64;
  c.checkpoints.base = 10.0;
  c.checkpoints.first = 100;
  c.reference.size = 10000;
  c.output = out.string();
  return c;
}

ExperimentConfig figure_config(const fs::path& out) {
  ExperimentConfig c;
  c.sec5_figure.k_list = {0.4, 0.8, 1.2, 1.6, 2.0};
  c.integrator.dt = 1.0;
  c.integrator.n_steps = 100000;
  c.n_paths = 16;
  c.checkpoints.base = 10.0;
  c.checkpoints.first = 1;
  c.output = out.string();
  return c;
}

ExperimentConfig contraction_config(const fs::path& out) {
  ExperimentConfig c;
  c.model.k = 0.04;
  c.output = out.string();
  return c;
}

ExperimentConfig moments_config(const fs::path& out, double variance) {
  ExperimentConfig c;
  c.model.k = 0.04;
  c.n_paths = 64;
  c.moments.initial.variance = variance;
  c.output = out.string();
  return c;
}

std::size_t index_of(const std::vector<std::int64_t>& steps, std::int64_t j) {
  return static_cast<std::size_t>(std::find(steps.begin(), steps.end(), j) - steps.begin());
}

}  // namespace

int main(int argc, char** argv) {
  // Criteria listed with --allow-fail still print FAIL but do not set the exit status.
  std::set<int> allowed;
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--allow-fail") allowed.insert(std::stoi(argv[i + 1]));

  const fs::path root = fs::temp_directory_path() / "mvl_acceptance";
  fs::remove_all(root);
  int failures = 0, blocking = 0;
  auto report = [&](int n, const char* name, double budget_s, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = run();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = budget_s <= 0.0 || secs < budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    blocking += pass || allowed.count(n) ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s (%.2f s%s)\n", n, pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  };

  report(1, "constants identity", 1.0, constants_identity);
  report(2, "auxiliary function", 10.0, aux_function);
  report(3, "W1 oracle equivalence", 30.0, w1_oracles);
  report(4, "exact-linear map", 5.0, exact_linear);

  ConvergenceResult conv;
  report(5, "stationary moments", 120.0, [&] {
    conv = run_empirical_convergence(stationary_config(root / "a" / "converge"));
    const double ex = std::abs(conv.var_x / 0.5 - 1.0), ev = std::abs(conv.var_v - 1.0);
    return Outcome{ex < 0.05 && ev < 0.05, fmt("Var(x) = %.4f, Var(v) = %.4f", conv.var_x, conv.var_v)};
  });
  report(6, "empirical-measure convergence", 0.0, [&] {
    bool monotone = true;
    std::string curve;
    for (std::size_t i = 0; i < conv.steps.size(); ++i) {
      curve += fmt("%s%.4g", i ? " > " : "", conv.mean_w1[i]);
      if (i > 0 && conv.mean_w1[i] > conv.mean_w1[i - 1] + std::max(conv.stderr_w1[i], conv.stderr_w1[i - 1]))
        monotone = false;
    }
    const bool third = conv.mean_w1.back() < conv.mean_w1.front() / 3.0;
    return Outcome{monotone && third && conv.slope < 0.0,
                   fmt("W1 at t = 1e2..1e5: %s, slope %.3f (admissible eps < %.3f)", curve.c_str(), conv.slope,
                       conv.eps_max_meanfield)};
  });

  std::vector<Sec5Curve> curves;
  report(7, "figure reproduction", 600.0, [&] {
    curves = run_sec5_figure(figure_config(root / "a" / "figure"));
    bool ok = true;
    std::string detail;
    std::vector<double> ratios;
    for (const auto& c : curves) {
      const std::size_t i100 = index_of(c.steps, 100), i1e4 = index_of(c.steps, 10000);
      const double ratio = c.mean_abs_m.back() / c.mean_abs_m[i100];
      ratios.push_back(ratio);
      if (c.k <= 1.6) {
        ok = ok && ratio < 0.1;
        // Running mean of the linear chain decays like j^-min(1/2, 1 - k/kappa).
        const double predicted = std::pow(1000.0, -std::min(0.5, 1.0 - c.k / 2.0));
        detail += fmt("k=%.1f ratio %.3f (decay law %.3f)%s; ", c.k, ratio, predicted, ratio < 0.1 ? "" : " >= 0.1");
      } else {
        const double change = c.mean_abs_m.back() - c.mean_abs_m[i1e4];
        const bool flat = change >= -c.stderr_abs_m.back();
        ok = ok && flat;
        detail += fmt("k=%.1f final-decade change %+.3f (stderr %.3f); ", c.k, change, c.stderr_abs_m.back());
      }
    }
    bool ordered = true;
    for (std::size_t i = 1; i < ratios.size(); ++i) ordered = ordered && ratios[i] > ratios[i - 1];
    detail += ordered ? "speed decreases with k" : "speed not ordered in k";
    return Outcome{ok && ordered, detail};
  });

  report(8, "contraction", 300.0, [&] {
    const ContractionReport r = run_contraction(contraction_config(root / "a" / "contract"));
    const double drop = r.mean_rho.front() / r.mean_rho.back();
    const bool has_half = r.half_delta_fit.has_value() && r.half_delta_fit->valid;
    const double dr = has_half ? std::abs(r.fit.rate - r.half_delta_fit->rate) : INFINITY;
    const std::string header = slurp(root / "a" / "contract" / "contraction.csv").substr(0, 64);
    const bool reference_line = r.c3_reference > 0.0 && header.find("c3_reference") != std::string::npos;
    const bool ok = drop >= 10.0 && r.fit.valid && r.fit.r_squared >= 0.9 && r.fit.rate < 0.0 &&
                    dr < r.fit.stderr_bootstrap && reference_line;
    return Outcome{ok, fmt("E[rho] %.4g -> %.4g (x%.1f), rate %.3f +- %.3f, R2 %.3f, half-delta rate %.3f, c3 %.5f",
                           r.mean_rho.front(), r.mean_rho.back(), drop, r.fit.rate, r.fit.stderr_bootstrap,
                           r.fit.r_squared, has_half ? r.half_delta_fit->rate : NAN, r.c3_reference)};
  });

  report(9, "moment boundedness", 120.0, [&] {
    const MomentReport cold = run_moments(moments_config(root / "a" / "moments_cold", 0.0));
    const MomentReport over = run_moments(moments_config(root / "a" / "moments_over", 10.0));
    return Outcome{!cold.growth_flag && !over.growth_flag,
                   fmt("cold sup %.3f -> %.3f, overdispersed sup %.3f -> %.3f (first vs final quarter)",
                       cold.sup_first_quarter, cold.sup_final_quarter, over.sup_first_quarter, over.sup_final_quarter)};
  });

  report(10, "determinism", 0.0, [&] {
    const fs::path b = root / "b";
    auto rerun = [&](ExperimentConfig c, const fs::path& dir) {
      c.output = dir.string();
      c.threads = 3;
      return c;
    };
    run_empirical_convergence(rerun(stationary_config(""), b / "converge"));
    run_sec5_figure(rerun(figure_config(""), b / "figure"));
    run_contraction(rerun(contraction_config(""), b / "contract"));
    run_moments(rerun(moments_config("", 0.0), b / "moments_cold"));
    run_moments(rerun(moments_config("", 10.0), b / "moments_over"));
    int compared = 0, differing = 0;
    for (const char* sub : {"converge", "figure", "contract", "moments_cold", "moments_over"}) {
      const auto first = csv_files(root / "a" / sub), second = csv_files(b / sub);
      if (first.size() != second.size()) ++differing;
      for (const auto& [name, bytes] : first) {
        ++compared;
        const auto it = second.find(name);
        if (it == second.end() || it->second != bytes) ++differing;
      }
    }
    return Outcome{compared > 0 && differing == 0,
                   fmt("%d CSV files re-run with another thread count, %d differ", compared, differing)};
  });

  std::printf("%d of 10 criteria failed, %d not covered by --allow-fail\n", failures, blocking);
  return blocking == 0 ? 0 : 1;
}
