// Sup computations over the phase-space norms.
//
// In the coordinates (x, h) with h = x + v/gamma we have
//   r_s = alpha |x| + |h|,
//   r_l^2 = x^T A x - (1 + 2 tau) <x, h> + |h|^2,  A = K/gamma^2 + (1/2 + 2 tau^2) I.
// Writing x = cos(t) p, h = sin(t) q with |p| = |q| = 1 and t in [0, pi/2]
// puts both kinks of r_s (x = 0 and h = 0) on the boundary of the box for t,
// so the ratio r_s / r_l is smooth in the interior and projected gradient
// ascent can be used from many starts.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "mvl/errors.hpp"
#include "mvl/rng.hpp"
#include "mvl/theory.hpp"

namespace mvl {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

struct Point {
  double t;
  Vector p;
  Vector q;
};

class RatioObjective {
 public:
  RatioObjective(const ModelParams& model, double tau, double sign)
      : a_(model.k_matrix() / (model.gamma() * model.gamma()) +
           (0.5 + 2.0 * tau * tau) * Matrix::Identity(model.dim(), model.dim())),
        cross_(1.0 + 2.0 * tau),
        alpha_(compute_alpha(model)),
        sign_(sign) {}

  // sign * log(r_s / r_l)
  double value(const Point& z) const {
    const double c = std::cos(z.t), s = std::sin(z.t);
    return sign_ * (std::log(alpha_ * c + s) - 0.5 * std::log(phi(z, c, s)));
  }

  double ratio(const Point& z) const {
    const double c = std::cos(z.t), s = std::sin(z.t);
    return (alpha_ * c + s) / std::sqrt(phi(z, c, s));
  }

  void gradient(const Point& z, double& gt, Vector& gp, Vector& gq) const {
    const double c = std::cos(z.t), s = std::sin(z.t);
    const double ph = phi(z, c, s);
    const double pap = z.p.dot(a_ * z.p);
    const double pq = z.p.dot(z.q);
    const double phi_t = -2.0 * c * s * pap - cross_ * (c * c - s * s) * pq + 2.0 * s * c;
    gt = sign_ * ((c - alpha_ * s) / (alpha_ * c + s) - phi_t / (2.0 * ph));
    const Vector phi_p = 2.0 * c * c * (a_ * z.p) - cross_ * c * s * z.q;
    const Vector phi_q = -cross_ * c * s * z.p;
    gp = -sign_ * phi_p / (2.0 * ph);
    gq = -sign_ * phi_q / (2.0 * ph);
    gp -= gp.dot(z.p) * z.p;
    gq -= gq.dot(z.q) * z.q;
  }

 private:
  double phi(const Point& z, double c, double s) const {
    return c * c * z.p.dot(a_ * z.p) - cross_ * c * s * z.p.dot(z.q) + s * s;
  }

  Matrix a_;
  double cross_;
  double alpha_;
  double sign_;
};

double projected_theta_gradient(double t, double gt) {
  if (t <= 0.0 && gt < 0.0) return 0.0;
  if (t >= kHalfPi && gt > 0.0) return 0.0;
  return gt;
}

Point step(const Point& z, double eta, double gt, const Vector& gp, const Vector& gq) {
  Point out{std::clamp(z.t + eta * gt, 0.0, kHalfPi), z.p + eta * gp, z.q + eta * gq};
  out.p.normalize();
  out.q.normalize();
  return out;
}

// Projected gradient ascent with Armijo backtracking.  Returns the best point
// reached; throws convergence_error if the iteration cap is hit first.
Point ascend(const RatioObjective& obj, Point z, const GeometryOptions& opt, double& best_seen) {
  double eta = 0.1;
  double f = obj.value(z);
  const Eigen::Index d = z.p.size();
  Vector gp(d), gq(d);
  for (int it = 0; it < opt.max_iterations; ++it) {
    double gt;
    obj.gradient(z, gt, gp, gq);
    gt = projected_theta_gradient(z.t, gt);
    const double gnorm2 = gt * gt + gp.squaredNorm() + gq.squaredNorm();
    if (std::sqrt(gnorm2) < opt.tolerance) return z;

    bool moved = false;
    while (eta > 1e-18) {
      Point trial = step(z, eta, gt, gp, gq);
      const double ft = obj.value(trial);
      if (ft >= f + 1e-4 * eta * gnorm2 || (ft > f && eta < 1e-12)) {
        const double gain = ft - f;
        z = std::move(trial);
        f = ft;
        best_seen = std::max(best_seen, f);
        eta = std::min(eta * 2.0, 1e3);
        moved = true;
        if (gain < 1e-16 * std::max(1.0, std::abs(f)) && std::sqrt(gnorm2) < 1e-6) return z;
        break;
      }
      eta *= 0.5;
    }
    // No ascent step exists at machine precision: stationary to rounding.
    if (!moved) return z;
  }
  throw convergence_error("norm_ratio_extrema: projected ascent did not converge", best_seen);
}

std::vector<Point> starting_points(Eigen::Index d, const GeometryOptions& opt) {
  std::vector<Point> starts;
  const double thetas[] = {0.0, kHalfPi / 2.0, kHalfPi};
  // Axis starts: signed coordinate directions for p and q.
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      if (d > 4 && i != j) continue;
      for (double si : {1.0, -1.0})
        for (double sj : {1.0, -1.0})
          for (double t : thetas) {
            Vector p = Vector::Zero(d), q = Vector::Zero(d);
            p[i] = si;
            q[j] = sj;
            starts.push_back({t, p, q});
          }
    }
  for (int k = 0; k < opt.random_starts; ++k) {
    DrawStream s(opt.seed, 0u, static_cast<std::uint64_t>(k));
    Vector p(d), q(d);
    do {
      for (Eigen::Index i = 0; i < d; ++i) p[i] = s.normal();
    } while (p.norm() == 0.0);
    do {
      for (Eigen::Index i = 0; i < d; ++i) q[i] = s.normal();
    } while (q.norm() == 0.0);
    starts.push_back({kHalfPi * s.uniform(), p.normalized(), q.normalized()});
  }
  return starts;
}

double extreme_ratio(const ModelParams& model, double tau, double sign, const GeometryOptions& opt) {
  const RatioObjective obj(model, tau, sign);
  double best = -std::numeric_limits<double>::infinity();
  double best_ratio = 0.0;
  for (const Point& start : starting_points(model.dim(), opt)) {
    double seen = obj.value(start);
    double best_value_seen = std::max(best, seen);
    Point end;
    try {
      end = ascend(obj, start, opt, best_value_seen);
    } catch (const convergence_error&) {
      const double best_known = std::max(best, best_value_seen);
      throw convergence_error("norm_ratio_extrema: optimizer did not converge",
                              std::exp(sign * best_known));
    }
    const double v = obj.value(end);
    if (v > best) {
      best = v;
      best_ratio = obj.ratio(end);
    }
  }
  return best_ratio;
}

}  // namespace

NormRatioExtrema norm_ratio_extrema(const ModelParams& p, double tau, const GeometryOptions& opt) {
  return {extreme_ratio(p, tau, +1.0, opt), extreme_ratio(p, tau, -1.0, opt)};
}

double sup_delta_over_ball(const ModelParams& p, double tau, double radius, const GeometryOptions& opt) {
  if (!(radius >= 0.0)) throw std::invalid_argument("sup_delta_over_ball: radius must be >= 0");
  if (radius == 0.0) return 0.0;
  const auto ext = norm_ratio_extrema(p, tau, opt);
  return radius * (ext.max_ratio - compute_eps0(p));
}

Geometry compute_geometry(const ModelParams& p, const GeometryOptions& opt) {
  const double r = p.r_dissip();
  if (r == 0.0) return {};
  const double tau = compute_tau(p);
  const double gamma = p.gamma();
  Geometry g;
  g.r_tilde = (8.0 + p.l_g() * r * r) / (tau * gamma * gamma);
  const double radius =
      opt.reading == GeometryReading::proof_radius ? std::sqrt(g.r_tilde) : g.r_tilde;
  const auto ext = norm_ratio_extrema(p, tau, opt);
  const double eps0 = compute_eps0(p);
  g.d_of_r_tilde = radius * (ext.max_ratio - eps0);
  // sup{r_s : Delta <= D}: along a ray with r_s/r_l = s the constraint binds
  // at r_s = D s / (s - eps0), largest for the smallest ratio.
  g.r1 = g.d_of_r_tilde * ext.min_ratio / (ext.min_ratio - eps0);
  return g;
}

}  // namespace mvl
