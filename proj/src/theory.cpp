#include "mvl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mvl/errors.hpp"

namespace mvl {

namespace {

void check_dims(const ModelParams& p, const PhaseState& s) {
  if (s.dim() != p.dim()) throw std::invalid_argument("theory: state dimension does not match the model");
}

}  // namespace

double compute_tau(const ModelParams& p) {
  const double g2 = p.gamma() * p.gamma();
  const double tau = std::min(0.125, p.kappa() / (2.0 * g2) - p.l_g() * p.l_g() / (g2 * g2));
  if (!(tau > 0.0)) {
    std::ostringstream msg;
    msg << "compute_tau: L_g = " << p.l_g() << " violates L_g < gamma sqrt(kappa/2) = "
        << p.gamma() * std::sqrt(p.kappa() / 2.0);
    throw hypothesis_error(msg.str());
  }
  return tau;
}

double compute_alpha(const ModelParams& p) { return 2.0 * p.lk_plus_lg() / (p.gamma() * p.gamma()); }

double compute_eps0(const ModelParams& p) {
  const double a = compute_alpha(p);
  return 0.5 * std::min({1.0, 2.0 * a * p.gamma() / (3.0 * std::sqrt(p.l_k())), a});
}

double compute_e0(const ModelParams& p) {
  const double a = compute_alpha(p);
  return 0.5 * std::min(1.0, std::sqrt(p.kappa()) / (std::sqrt(2.0) * a * p.gamma()));
}

double r_l_norm(const ModelParams& p, double tau, const PhaseState& s) {
  check_dims(p, s);
  const double ig = 1.0 / p.gamma();
  const Vector& x = s.x();
  const Vector& v = s.v();
  const double q = ig * ig * x.dot(p.k_matrix() * x) + 0.5 * ig * ig * v.squaredNorm() +
                   0.5 * ((1.0 - 2.0 * tau) * x + ig * v).squaredNorm();
  return std::sqrt(std::max(q, 0.0));
}

double r_s_norm(const ModelParams& p, const PhaseState& s) {
  check_dims(p, s);
  return compute_alpha(p) * s.x().norm() + (s.x() + s.v() / p.gamma()).norm();
}

double delta_fn(const ModelParams& p, double tau, const PhaseState& s) {
  return r_s_norm(p, s) - compute_eps0(p) * r_l_norm(p, tau, s);
}

Theory build_theory(const ModelParams& p, const GeometryOptions& opt) {
  TheoryConstants tc;
  tc.tau = compute_tau(p);
  tc.alpha = compute_alpha(p);
  tc.eps0 = compute_eps0(p);
  tc.e0 = compute_e0(p);
  const Geometry geo = compute_geometry(p, opt);
  tc.r_tilde = geo.r_tilde;
  tc.d_of_r_tilde = geo.d_of_r_tilde;
  tc.r1 = geo.r1;

  AuxFunction aux = build_aux_function(p, tc.r1);
  const double L = p.lk_plus_lg();
  const double kappa = p.kappa();
  const double e = std::exp(-L * tc.r1 * tc.r1 / 4.0);
  tc.c0 = e / (1.0 + (1.0 - e) * kappa / L);
  tc.f_prime_0 = aux.derivative(0.0);
  tc.f_prime_r1 = aux.derivative(tc.r1);

  const double gamma = p.gamma();
  tc.c1 = tc.tau * gamma / 2.0;
  tc.c2 = std::min(2.0 / gamma, gamma / 4.0 * tc.f_prime_r1) / tc.f_prime_0;
  tc.c3 = std::min(tc.c2, 0.5 * tc.f_prime_r1 / tc.f_prime_0 * tc.c1 * tc.eps0 * tc.e0);
  tc.cap_c1 = tc.f_prime_r1 * tc.eps0 / gamma * std::min(std::sqrt(kappa), std::sqrt(2.0) / 2.0);
  tc.cap_c3 = tc.c3 * tc.cap_c1 / tc.f_prime_0;

  if (p.r_dissip() == 0.0)
    tc.l_int_threshold = tc.tau * gamma * std::sqrt(kappa) / 8.0;
  else
    tc.l_int_threshold = tc.c0 * std::min(gamma * tc.tau / 12.0 * std::sqrt(2.0 * kappa) *
                                              std::min(1.0, tc.alpha),
                                          L / 4.0);

  const double d = static_cast<double>(p.dim());
  tc.eps_max_meanfield = std::min(0.25, 1.0 / (2.0 * d));
  const double si_term = tc.cap_c3 / (tc.cap_c3 + p.l_int() / (2.0 * gamma));
  tc.eps_max_selfinteracting = std::min(tc.eps_max_meanfield, si_term);
  return {tc, std::move(aux)};
}

double rho_semimetric(const TheoryConstants& tc, const AuxFunction& f, const ModelParams& p,
                      const PhaseState& s) {
  const double rl = r_l_norm(p, tc.tau, s);
  const double delta = r_s_norm(p, s) - tc.eps0 * rl;
  return f.value(std::max(0.0, std::min(delta, tc.d_of_r_tilde)) + tc.eps0 * rl);
}

Admissibility admissibility(const ModelParams& p, const GeometryOptions& opt) {
  Admissibility out;
  const double bound = p.gamma() * std::sqrt(p.kappa() / 2.0);
  out.eq2_ok = p.l_g() < bound;
  const double d = static_cast<double>(p.dim());
  out.eps_max_meanfield = std::min(0.25, 1.0 / (2.0 * d));
  if (!out.eq2_ok) {
    std::ostringstream msg;
    msg << "L_g = " << p.l_g() << " is not below gamma sqrt(kappa/2) = " << bound
        << "; the remaining constants are undefined";
    out.note = msg.str();
    return out;
  }
  const Theory th = build_theory(p, opt);
  out.constants = th.constants;
  out.l_int_threshold = th.constants.l_int_threshold;
  out.eq3_ok = p.l_int() <= out.l_int_threshold;
  out.eps_max_selfinteracting = th.constants.eps_max_selfinteracting;
  std::ostringstream msg;
  msg << std::setprecision(6) << "L^I = " << p.l_int() << (out.eq3_ok ? " <= " : " > ")
      << "threshold " << out.l_int_threshold
      << (p.r_dissip() == 0.0 ? " (R = 0 form tau gamma sqrt(kappa)/8)" : "");
  out.note = msg.str();
  return out;
}

std::vector<std::pair<std::string, double>> constants_as_pairs(const TheoryConstants& tc) {
  return {{"tau", tc.tau},
          {"alpha", tc.alpha},
          {"eps0", tc.eps0},
          {"e0", tc.e0},
          {"r_tilde", tc.r_tilde},
          {"d_of_r_tilde", tc.d_of_r_tilde},
          {"r1", tc.r1},
          {"c0", tc.c0},
          {"f_prime_0", tc.f_prime_0},
          {"f_prime_r1", tc.f_prime_r1},
          {"c1", tc.c1},
          {"c2", tc.c2},
          {"c3", tc.c3},
          {"cap_c1", tc.cap_c1},
          {"cap_c3", tc.cap_c3},
          {"l_int_threshold", tc.l_int_threshold},
          {"eps_max_meanfield", tc.eps_max_meanfield},
          {"eps_max_selfinteracting", tc.eps_max_selfinteracting}};
}

void write_constants_report(std::ostream& out, const TheoryConstants& tc) {
  const auto old = out.precision(17);
  for (const auto& [name, value] : constants_as_pairs(tc)) out << name << " = " << value << '\n';
  out.precision(old);
}

}  // namespace mvl
