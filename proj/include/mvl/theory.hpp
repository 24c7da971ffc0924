#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvl/model.hpp"

namespace mvl {

/// tau = min{1/8, kappa/(2 gamma^2) - L_g^2/gamma^4}.  Throws
/// hypothesis_error when L_g >= gamma sqrt(kappa/2).
double compute_tau(const ModelParams& p);

/// alpha = 2 (L_K + L_g) / gamma^2.
double compute_alpha(const ModelParams& p);
double compute_eps0(const ModelParams& p);
double compute_e0(const ModelParams& p);

/// The "large" quadratic norm on phase space.
double r_l_norm(const ModelParams& p, double tau, const PhaseState& s);
/// The "small" norm alpha |x| + |x + v/gamma|.
double r_s_norm(const ModelParams& p, const PhaseState& s);
/// r_s - eps0 r_l.
double delta_fn(const ModelParams& p, double tau, const PhaseState& s);

/// How to read the constraint set in the definition of D(R~).
enum class GeometryReading {
  proof_radius,    // sup over r_l <= sqrt(R~), matching how D(R~) is used
  literal_radius,  // sup over r_l <= R~
};

struct GeometryOptions {
  GeometryReading reading = GeometryReading::proof_radius;
  int random_starts = 64;
  std::uint64_t seed = 0x6d766c67656f6dULL;
  double tolerance = 1e-8;
  int max_iterations = 100000;
};

/// Extremes of r_s over the unit sphere of r_l (degree-1 homogeneity turns
/// every sup below into one of these two numbers).
struct NormRatioExtrema {
  double max_ratio = 0.0;
  double min_ratio = 0.0;
};

NormRatioExtrema norm_ratio_extrema(const ModelParams& p, double tau, const GeometryOptions& opt = {});

/// sup of Delta over {r_l <= radius}.
double sup_delta_over_ball(const ModelParams& p, double tau, double radius,
                           const GeometryOptions& opt = {});

struct Geometry {
  double r_tilde = 0.0;
  double d_of_r_tilde = 0.0;
  double r1 = 0.0;
};

/// R~, D(R~) and R1.  All zero when R = 0.
Geometry compute_geometry(const ModelParams& p, const GeometryOptions& opt = {});

/// The concave auxiliary function f with
///   f'(r) = 1/2 \int_r^inf s exp(-1/2 \int_r^s x theta(x) dx) ds,  f(0) = 0,
/// theta = -(L_K + L_g) below R1 and kappa above.  f' is tabulated on
/// [0, max(2 R1, 1)] by quadrature on a graded grid and interpolated with
/// monotone cubic Hermite pieces; f is the exact integral of that
/// interpolant.
class AuxFunction {
 public:
  AuxFunction(double r1, double kappa, double lk_plus_lg);

  double r1() const noexcept { return r1_; }
  double kappa() const noexcept { return kappa_; }
  double lk_plus_lg() const noexcept { return lk_plus_lg_; }
  double r_max() const noexcept { return nodes_.back(); }

  double value(double r) const;
  double derivative(double r) const;
  double theta(double r) const noexcept { return r < r1_ ? -lk_plus_lg_ : kappa_; }

  /// Direct quadrature of the defining integral (not the table).
  double derivative_by_quadrature(double r) const;

  std::span<const double> nodes() const noexcept { return nodes_; }
  std::span<const double> table_values() const noexcept { return values_; }
  std::span<const double> table_derivatives() const noexcept { return derivs_; }

 private:
  void build(std::size_t intervals_below_r1);
  std::size_t interval(double r) const;

  double r1_;
  double kappa_;
  double lk_plus_lg_;
  std::vector<double> nodes_;
  std::vector<double> values_;      // f
  std::vector<double> derivs_;      // f'
  std::vector<double> slope_right_; // f'' used on [r_i, r_{i+1}] at r_i
  std::vector<double> slope_left_;  // f'' used on [r_{i-1}, r_i] at r_i
};

AuxFunction build_aux_function(const ModelParams& p, double r1);

struct TheoryConstants {
  double tau = 0.0;
  double alpha = 0.0;
  double eps0 = 0.0;
  double e0 = 0.0;
  double r_tilde = 0.0;
  double d_of_r_tilde = 0.0;
  double r1 = 0.0;
  double c0 = 0.0;
  double f_prime_0 = 0.0;
  double f_prime_r1 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double cap_c1 = 0.0;
  double cap_c3 = 0.0;
  double l_int_threshold = 0.0;
  double eps_max_meanfield = 0.0;
  double eps_max_selfinteracting = 0.0;
};

struct Theory {
  TheoryConstants constants;
  AuxFunction aux;
};

/// All constants plus the auxiliary function.  Throws hypothesis_error when
/// L_g >= gamma sqrt(kappa/2).
Theory build_theory(const ModelParams& p, const GeometryOptions& opt = {});

/// rho(x, v) = f(min(Delta, D(R~)) + eps0 r_l).
double rho_semimetric(const TheoryConstants& tc, const AuxFunction& f, const ModelParams& p,
                      const PhaseState& s);

struct Admissibility {
  bool eq2_ok = false;  // L_g < gamma sqrt(kappa/2)
  bool eq3_ok = false;  // L^I below the interaction threshold
  double l_int_threshold = 0.0;
  double eps_max_meanfield = 0.0;
  double eps_max_selfinteracting = 0.0;
  std::optional<TheoryConstants> constants;
  std::string note;

  bool admissible() const noexcept { return eq2_ok && eq3_ok; }
};

Admissibility admissibility(const ModelParams& p, const GeometryOptions& opt = {});

/// `name = value` lines with 17 significant digits.
void write_constants_report(std::ostream& out, const TheoryConstants& tc);
std::vector<std::pair<std::string, double>> constants_as_pairs(const TheoryConstants& tc);

}  // namespace mvl
