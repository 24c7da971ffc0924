#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mvl/errors.hpp"
#include "mvl/theory.hpp"

namespace mvl {

namespace {

constexpr double kQuadTolerance = 1e-10;
// exp(-36.84) < 1e-16: the neglected Gaussian tail is below rounding.
constexpr double kTailExponent = 36.84;
constexpr double kPanelExponent = 4.0;
constexpr double kResidualTarget = 2.5e-7;
constexpr double kInterpTarget = 1e-9;
constexpr std::size_t kMaxIntervals = std::size_t{1} << 22;

// Absolute targets while f' is moderate.  f'(0) grows like
// exp((L_K + L_g) R1^2 / 4), so for large R1 the targets become relative,
// loosening with log f' to keep the table size bounded.
double target_scale(double fprime) {
  const double rel = std::min(1.0, 0.01 * (1.0 + std::log(std::max(fprime, 1.0))));
  return std::max(1.0, rel * fprime);
}

// Hermite basis on t in [0, 1] for values and slopes.
struct Hermite {
  double h00, h10, h01, h11;
};

Hermite basis(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2};
}

// Antiderivatives of the basis, vanishing at t = 0.
Hermite integrated_basis(double t) {
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
  return {t - t3 + t4 / 2, t2 / 2 - 2 * t3 / 3 + t4 / 4, t3 - t4 / 2, -t3 / 3 + t4 / 4};
}

// Fritsch-Carlson limiter applied to a pair of end slopes of one interval.
void limit_slopes(double y0, double y1, double h, double& m0, double& m1) {
  const double secant = (y1 - y0) / h;
  if (secant == 0.0) {
    m0 = m1 = 0.0;
    return;
  }
  if (m0 * secant < 0.0) m0 = 0.0;
  if (m1 * secant < 0.0) m1 = 0.0;
  const double a = m0 / secant, b = m1 / secant;
  const double s = a * a + b * b;
  if (s > 9.0) {
    const double t = 3.0 / std::sqrt(s);
    m0 = t * a * secant;
    m1 = t * b * secant;
  }
}

}  // namespace

AuxFunction::AuxFunction(double r1, double kappa, double lk_plus_lg)
    : r1_(r1), kappa_(kappa), lk_plus_lg_(lk_plus_lg) {
  if (!(r1 >= 0.0) || !std::isfinite(r1)) throw std::invalid_argument("AuxFunction: r1 must be >= 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("AuxFunction: kappa must be > 0");
  if (!(lk_plus_lg >= kappa)) throw std::invalid_argument("AuxFunction: need L_K + L_g >= kappa");

  if (r1_ == 0.0) {
    build(0);
    return;
  }
  // Double the node count until both the ODE residual of the table (centered
  // differences) and the interpolation error at midpoints are small.
  for (std::size_t n1 = 256;; n1 *= 2) {
    build(n1);
    bool ok = true;
    for (std::size_t i = 1; ok && i < n1; ++i) {
      const double r = nodes_[i];
      const double fpp = (derivs_[i + 1] - derivs_[i - 1]) / (nodes_[i + 1] - nodes_[i - 1]);
      const double res = std::abs(2.0 * fpp - r * theta(r) * derivs_[i] + r);
      if (res > kResidualTarget * (1.0 + r) * target_scale(derivs_[i])) ok = false;
    }
    for (std::size_t i = 0; ok && i < n1; ++i) {
      const double mid = 0.5 * (nodes_[i] + nodes_[i + 1]);
      const double exact = derivative_by_quadrature(mid);
      if (std::abs(derivative(mid) - exact) > kInterpTarget * target_scale(exact)) ok = false;
    }
    if (ok) return;
    if (2 * n1 > kMaxIntervals)
      throw convergence_error("AuxFunction: table refinement limit reached",
                              static_cast<double>(n1));
  }
}

double AuxFunction::derivative_by_quadrature(double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("AuxFunction: r must be >= 0");
  if (r >= r1_) return 1.0 / kappa_;
  const double lk = lk_plus_lg_;
  // With u = s^2 the inner integral of x theta(x) is exact on each constant
  // piece of theta and the outer integrand becomes a plain exponential.
  auto exponent = [&](double u) {
    if (u <= r1_ * r1_) return lk * (u - r * r) / 4.0;
    return lk * (r1_ * r1_ - r * r) / 4.0 - kappa_ * (u - r1_ * r1_) / 4.0;
  };
  auto integrand = [&](double u) { return 0.25 * std::exp(exponent(u)); };

  // Panels over which the exponent moves by at most kPanelExponent; one
  // Gauss-Kronrod rule per panel is then accurate to rounding and its
  // embedded Gauss rule gives the error estimate.
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double value = 0.0, err = 0.0;
  auto integrate = [&](double a, double b, double variation) {
    const int panels = std::max(1, static_cast<int>(std::ceil(variation / kPanelExponent)));
    const double w = (b - a) / panels;
    for (int k = 0; k < panels; ++k) {
      double e = 0.0;
      value += GK::integrate(integrand, a + k * w, k + 1 == panels ? b : a + (k + 1) * w, 0, 0.0, &e);
      err += e;
    }
  };
  integrate(r * r, r1_ * r1_, lk * (r1_ * r1_ - r * r) / 4.0);
  integrate(r1_ * r1_, r1_ * r1_ + 4.0 * kTailExponent / kappa_, kTailExponent);
  if (!(err <= kQuadTolerance * std::max(1.0, std::abs(value))) || !std::isfinite(value))
    throw convergence_error("AuxFunction: quadrature did not reach tolerance", value);
  return value;
}

void AuxFunction::build(std::size_t n1) {
  const double r_max = std::max(2.0 * r1_, 1.0);
  const double lk = lk_plus_lg_;
  // Below R1 the derivatives of f' grow like powers of (1 + L r / 2), so the
  // nodes are r = R1 ((1 + c) t - c t^3) for uniform t: spacing shrinks
  // towards R1 by the factor q = (1 + (L R1 / 2)^2)^{3/4}, and the map has no
  // curvature at 0, where a graded grid would spoil centered differences.
  const double q = std::pow(1.0 + 0.25 * lk * lk * r1_ * r1_, 0.75);
  const double c = (q - 1.0) / (2.0 * q + 1.0);
  auto node = [&](std::size_t i) {
    const double t = static_cast<double>(i) / static_cast<double>(n1);
    return r1_ * ((1.0 + c) * t - c * t * t * t);
  };
  const double h_tail = n1 > 0 ? r1_ / static_cast<double>(n1) : r_max;
  const std::size_t n2 = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((r_max - r1_) / h_tail - 1e-9)));
  const double h2 = (r_max - r1_) / static_cast<double>(n2);

  const std::size_t n = n1 + n2 + 1;
  nodes_.assign(n, 0.0);
  derivs_.assign(n, 0.0);
  slope_left_.assign(n, 0.0);
  slope_right_.assign(n, 0.0);
  values_.assign(n, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    nodes_[i] = i <= n1 ? node(i) : r1_ + h2 * static_cast<double>(i - n1);
    if (i == n1) nodes_[i] = r1_;
    if (i == n - 1) nodes_[i] = r_max;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double r = nodes_[i];
    derivs_[i] = i < n1 ? derivative_by_quadrature(r) : 1.0 / kappa_;
    // f'' from the ODE: one-sided values at the kink.
    const double below = -r * (lk * derivs_[i] + 1.0) / 2.0;
    slope_left_[i] = i <= n1 ? below : 0.0;
    slope_right_[i] = i < n1 ? below : 0.0;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double hi = nodes_[i + 1] - nodes_[i];
    limit_slopes(derivs_[i], derivs_[i + 1], hi, slope_right_[i], slope_left_[i + 1]);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double hi = nodes_[i + 1] - nodes_[i];
    values_[i + 1] = values_[i] + hi * (derivs_[i] + derivs_[i + 1]) / 2.0 +
                     hi * hi * (slope_right_[i] - slope_left_[i + 1]) / 12.0;
  }
}

std::size_t AuxFunction::interval(double r) const {
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), r);
  std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
  return i == 0 ? 0 : std::min(i - 1, nodes_.size() - 2);
}

double AuxFunction::derivative(double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("AuxFunction: r must be >= 0");
  if (r >= r1_ || r >= r_max()) return 1.0 / kappa_;
  const std::size_t i = interval(r);
  const double h = nodes_[i + 1] - nodes_[i];
  const Hermite b = basis((r - nodes_[i]) / h);
  return b.h00 * derivs_[i] + b.h10 * h * slope_right_[i] + b.h01 * derivs_[i + 1] +
         b.h11 * h * slope_left_[i + 1];
}

double AuxFunction::value(double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("AuxFunction: r must be >= 0");
  if (r >= r_max()) return values_.back() + (r - r_max()) / kappa_;
  const std::size_t i = interval(r);
  const double h = nodes_[i + 1] - nodes_[i];
  const Hermite b = integrated_basis((r - nodes_[i]) / h);
  return values_[i] + h * (b.h00 * derivs_[i] + b.h10 * h * slope_right_[i] +
                           b.h01 * derivs_[i + 1] + b.h11 * h * slope_left_[i + 1]);
}

AuxFunction build_aux_function(const ModelParams& p, double r1) {
  return AuxFunction(r1, p.kappa(), p.lk_plus_lg());
}

}  // namespace mvl
