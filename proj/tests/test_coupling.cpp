#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "mvl/coupling.hpp"
#include "mvl/rng.hpp"

using namespace mvl;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Only tau and eps0 enter the blending.
TheoryConstants constants_for(const ModelParams& p, double d_threshold) {
  TheoryConstants tc;
  tc.tau = compute_tau(p);
  tc.eps0 = compute_eps0(p);
  tc.d_of_r_tilde = d_threshold;
  return tc;
}

const Theory& sec5_theory() {
  static const Theory th = build_theory(ModelParams::sec5(0.04));
  return th;
}

CouplingNoiseDraw draw(std::uint64_t seed, std::uint64_t step, Eigen::Index d) {
  CouplingNoiseDraw n{Vector(d), Vector(d), 0.0};
  DrawStream s(seed, 0, step);
  s.normals({n.xi.data(), static_cast<std::size_t>(d)});
  s.normals({n.eta.data(), static_cast<std::size_t>(d)});
  n.u = s.uniform();
  return n;
}

ModelParams plain_2d() {
  ModelParams::Spec s;
  s.gamma = 2.0;
  s.k_matrix = Matrix::Identity(2, 2);
  s.k_matrix(0, 1) = s.k_matrix(1, 0) = 0.3;
  return ModelParams(std::move(s));
}

}  // namespace

TEST(Smoothstep, EndpointsAndShape) {
  EXPECT_EQ(smoothstep(-1.0), 0.0);
  EXPECT_EQ(smoothstep(0.0), 0.0);
  EXPECT_EQ(smoothstep(1.0), 1.0);
  EXPECT_EQ(smoothstep(2.0), 1.0);
  EXPECT_DOUBLE_EQ(smoothstep(0.5), 0.5);
  double prev = 0.0;
  for (int i = 1; i <= 100; ++i) {
    const double s = smoothstep(i / 100.0);
    EXPECT_GE(s, prev);
    prev = s;
  }
  // Flat to second order at both ends.
  const double h = 1e-4;
  EXPECT_LT(smoothstep(h) / (h * h), 1e-2);
  EXPECT_LT((1.0 - smoothstep(1.0 - h)) / (h * h), 1e-2);
}

TEST(Blending, CoincidentIsZero) {
  const ModelParams p = ModelParams::sec5(0.0);
  const Blend b = blending({1e-3, 0.0, false}, constants_for(p, 0.0), p, vec({0}), vec({0}));
  EXPECT_EQ(b.lambda, 0.0);
  EXPECT_EQ(b.pi, 1.0);
}

TEST(Blending, PlateauWhenDissipativeRegionApplies) {
  const ModelParams p = ModelParams::sec5(0.0);
  const TheoryConstants tc = constants_for(p, 5.0);
  const Vector f = vec({0.3}), g = vec({0.1});
  ASSERT_LE(delta_fn(p, tc.tau, PhaseState(f, g)), 5.0);
  const Blend b = blending({1e-3, 5.0, false}, tc, p, f, g);
  EXPECT_EQ(b.lambda, 1.0);
  EXPECT_EQ(b.pi, 0.0);
  // Far outside D + delta the coupling is synchronous.
  const Blend far = blending({1e-3, 5.0, false}, tc, p, vec({40.0}), vec({0.0}));
  EXPECT_EQ(far.lambda, 0.0);
}

TEST(Blending, ZeroThresholdReadings) {
  const ModelParams p = ModelParams::sec5(0.0);
  const TheoryConstants tc = constants_for(p, 0.0);
  const double delta = 1e-2;
  const Vector f = vec({0.004}), g = vec({0.0});
  const Blend smooth = blending({delta, 0.0, false}, tc, p, f, g);
  EXPECT_DOUBLE_EQ(smooth.lambda, smoothstep(0.4));
  EXPECT_EQ(blending({delta, 0.0, false}, tc, p, vec({1.0}), g).lambda, 1.0);
  EXPECT_EQ(blending({delta, 0.0, true}, tc, p, f, g).lambda, 0.0);
  EXPECT_EQ(blending({delta, 0.0, true}, tc, p, vec({1.0}), g).lambda, 0.0);
}

TEST(Blending, PythagoreanIdentity) {
  const ModelParams p = plain_2d();
  for (double d : {0.0, 0.7}) {
    const TheoryConstants tc = constants_for(p, d);
    for (std::uint64_t i = 0; i < 2000; ++i) {
      DrawStream s(5, 0, i);
      const double scale = std::exp(6.0 * s.uniform() - 5.0);
      const Vector f = scale * vec({s.normal(), s.normal()});
      const Vector g = scale * vec({s.normal(), s.normal()});
      const Blend b = blending({0.05, d, false}, tc, p, f, g);
      EXPECT_GE(b.lambda, 0.0);
      EXPECT_LE(b.lambda, 1.0);
      EXPECT_NEAR(b.lambda * b.lambda + b.pi * b.pi, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(validate(BlendingParams{0.0, 0.0, false}), std::invalid_argument);
  EXPECT_THROW(validate(BlendingParams{1.0, 0.0, false}), std::invalid_argument);
}

TEST(CouplingState, DerivedFields) {
  const CouplingState cs{PhaseState(vec({1, 2}), vec({3, 0})), PhaseState(vec({0, 2}), vec({0, 0}))};
  EXPECT_EQ(cs.f_diff(), vec({1, 0}));
  EXPECT_EQ(cs.g_diff(), vec({3, 0}));
  EXPECT_EQ(cs.h_diff(3.0), vec({2, 0}));
  EXPECT_EQ(cs.e_dir(3.0), vec({1, 0}));
  const CouplingState same{cs.first, cs.first};
  EXPECT_EQ(same.e_dir(3.0), vec({0, 0}));
}

TEST(CoupledStep, CoincidenceIsAbsorbing) {
  const ModelParams p = ModelParams::sec5(0.04);
  const EmpiricalMeasure mu(Matrix::Zero(1, 1));
  CouplingAux aux;
  aux.frozen_law = &mu;
  for (CouplingNoise kind : {CouplingNoise::reflection, CouplingNoise::maximal_reflection}) {
    CouplingState cs{PhaseState(vec({0.7}), vec({-0.2})), PhaseState(vec({0.7}), vec({-0.2}))};
    for (std::uint64_t j = 0; j < 500; ++j) {
      const auto r = coupled_step(CouplingMode::frozen_vs_frozen, p, sec5_theory().constants,
                                  {BlendingParams::from(sec5_theory().constants), kind}, cs, aux, 0.01,
                                  draw(1, j, 1));
      EXPECT_EQ(r.blend.lambda, 0.0);
      cs = r.state;
      ASSERT_EQ(cs.first, cs.second);
    }
  }
}

TEST(CoupledStep, NoiselessDriftOfH) {
  const ModelParams p = plain_2d();
  const TheoryConstants tc = constants_for(p, 0.0);
  const CouplingState cs{PhaseState(vec({1.0, -0.5}), vec({0.3, 0.2})), PhaseState(vec({0.2, 0.1}), vec({-0.4, 0.0}))};
  const double dt = 0.01;
  CouplingNoiseDraw none{Vector::Zero(2), Vector::Zero(2), 0.5};
  const auto r = coupled_step(CouplingMode::frozen_vs_frozen, p, tc, {}, cs, {}, dt, none);
  const Vector f = cs.f_diff(), h = cs.h_diff(p.gamma());
  // dF = gamma (H - F) dt and dH = gamma^{-1} (b(x1) - b(x2)) dt.
  EXPECT_LT((r.state.f_diff() - f - p.gamma() * (h - f) * dt).norm(), 1e-15);
  const Vector db = external_force(p, cs.first.x()) - external_force(p, cs.second.x());
  EXPECT_LT((r.state.h_diff(p.gamma()) - h - db * dt / p.gamma()).norm(), 1e-15);
}

TEST(CoupledStep, ReflectionIsIsometricInvolution) {
  const ModelParams p = plain_2d();
  const TheoryConstants tc = constants_for(p, 0.0);
  const double dt = 0.01, sigma = std::sqrt(2.0 * p.gamma() * dt);
  const CouplingState cs{PhaseState(vec({1.0, 0.5}), vec({0.0, 0.2})), PhaseState(vec({0.0, 0.0}), vec({0.0, 0.0}))};
  const CouplingOptions opt{{1e-3, 0.0, false}, CouplingNoise::reflection};
  CouplingNoiseDraw none{Vector::Zero(2), Vector::Zero(2), 0.5};
  const auto base = coupled_step(CouplingMode::frozen_vs_frozen, p, tc, opt, cs, {}, dt, none);
  const Vector e = cs.e_dir(p.gamma());
  const Matrix refl = Matrix::Identity(2, 2) - 2.0 * e * e.transpose();
  EXPECT_LT((refl * refl - Matrix::Identity(2, 2)).norm(), 1e-12);
  for (std::uint64_t j = 0; j < 50; ++j) {
    CouplingNoiseDraw n = draw(3, j, 2);
    n.eta.setZero();
    const auto r = coupled_step(CouplingMode::frozen_vs_frozen, p, tc, opt, cs, {}, dt, n);
    ASSERT_EQ(r.blend.lambda, 1.0);
    const Vector n1 = (r.state.first.v() - base.state.first.v()) / sigma;
    const Vector n2 = (r.state.second.v() - base.state.second.v()) / sigma;
    EXPECT_NEAR(n1.norm(), n2.norm(), 1e-12);
    EXPECT_LT((n2 - refl * n1).norm(), 1e-12);
  }
}

// The maximal coupling must leave the second marginal standard normal and
// make H meet whenever it takes the shift.
TEST(CoupledStep, MaximalReflectionMarginalAndMeeting) {
  const ModelParams p = ModelParams::sec5(0.0);
  const TheoryConstants tc = constants_for(p, 0.0);
  const double dt = 0.01, sigma = std::sqrt(2.0 * p.gamma() * dt);
  const CouplingState cs{PhaseState(vec({0.02}), vec({0.0})), PhaseState(vec({0.0}), vec({0.0}))};
  const CouplingOptions opt{{1e-3, 0.0, false}, CouplingNoise::maximal_reflection};
  const EmpiricalMeasure mu(Matrix::Zero(1, 1));
  CouplingAux aux;
  aux.frozen_law = &mu;
  // Noiseless update of the second component, and of H.
  const double v2det = cs.second.v()[0] + (-2.0 * cs.second.x()[0] - 3.0 * cs.second.v()[0]) * dt;
  const double fdet = cs.f_diff()[0] + cs.g_diff()[0] * dt;
  const double gdet = cs.g_diff()[0] + (-2.0 * cs.f_diff()[0] - 3.0 * cs.g_diff()[0]) * dt;
  const double hdet = std::abs(fdet + gdet / p.gamma());
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  int met = 0;
  for (int j = 0; j < n; ++j) {
    CouplingNoiseDraw d = draw(11, static_cast<std::uint64_t>(j), 1);
    d.eta.setZero();
    const auto r = coupled_step(CouplingMode::frozen_vs_frozen, p, tc, opt, cs, aux, dt, d);
    const double z = (r.state.second.v()[0] - v2det) / sigma;
    sum += z;
    sum2 += z * z;
    if (r.met) {
      ++met;
      EXPECT_NEAR(r.state.h_diff(p.gamma())[0], 0.0, 1e-15);
    }
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 0.02);
  // P(meet) = 2 Phi(-a/2) with a = gamma |h_det| / sigma.
  const double a = p.gamma() * hdet / sigma;
  const double expected = std::erfc(a / (2.0 * std::sqrt(2.0)));
  EXPECT_NEAR(static_cast<double>(met) / n, expected, 0.005);
}

TEST(FitLogLinear, RecoversExponential) {
  std::vector<double> t, y;
  for (int i = 0; i <= 40; ++i) {
    t.push_back(0.25 * i);
    y.push_back(3.0 * std::exp(-0.7 * t.back()));
  }
  const RateFit f = fit_log_linear(t, y);
  EXPECT_TRUE(f.valid);
  EXPECT_NEAR(f.rate, -0.7, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.points, 21u);
  const RateFit zero = fit_log_linear(t, std::vector<double>(t.size(), 0.0));
  EXPECT_FALSE(zero.valid);
}

TEST(Contraction, CoincidentPairsStayAtZero) {
  const ModelParams p = ModelParams::sec5(0.04);
  ContractionConfig cfg;
  cfg.options.blend = BlendingParams::from(sec5_theory().constants);
  cfg.first.mean = cfg.second.mean = PhaseState(vec({1}), vec({0}));
  cfg.first.variance = cfg.second.variance = 0.5;
  cfg.n_pairs = 16;
  cfg.t_end = 2.0;
  const ContractionReport r = contraction_experiment(p, sec5_theory(), cfg);
  for (double m : r.mean_rho) EXPECT_EQ(m, 0.0);
  EXPECT_FALSE(r.fit.valid);
  EXPECT_EQ(r.meeting_fraction, 1.0);
}

TEST(Contraction, FrozenDecaysAndIsDeterministic) {
  const ModelParams p = ModelParams::sec5(0.04);
  ContractionConfig cfg;
  cfg.options.blend = BlendingParams::from(sec5_theory().constants);
  cfg.first.mean = PhaseState(vec({1}), vec({0}));
  cfg.second.mean = PhaseState(vec({0}), vec({0}));
  cfg.n_pairs = 64;
  cfg.t_end = 5.0;
  cfg.seed = 9;
  cfg.bootstrap = 50;
  const ContractionReport a = contraction_experiment(p, sec5_theory(), cfg);
  EXPECT_TRUE(a.admissible);
  EXPECT_TRUE(a.fit.valid);
  EXPECT_LT(a.fit.rate, 0.0);
  EXPECT_LT(a.mean_rho.back(), a.mean_rho.front());
  ASSERT_TRUE(a.half_delta_fit.has_value());
  EXPECT_DOUBLE_EQ(a.c3_reference, sec5_theory().constants.c3);
  cfg.threads = 1;
  const ContractionReport b = contraction_experiment(p, sec5_theory(), cfg);
  std::ostringstream sa, sb;
  write_contraction_csv(sa, a);
  write_contraction_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Contraction, OtherModesRun) {
  const ModelParams p = ModelParams::sec5(0.04);
  ContractionConfig cfg;
  cfg.options.blend = BlendingParams::from(sec5_theory().constants);
  cfg.first.mean = PhaseState(vec({1}), vec({0}));
  cfg.second.mean = PhaseState(vec({0}), vec({0}));
  cfg.n_pairs = 8;
  cfg.t_end = 1.0;
  cfg.bootstrap = 0;
  cfg.delta_sensitivity = false;
  cfg.ensemble_size = 32;
  for (CouplingMode mode : {CouplingMode::meanfield_vs_frozen, CouplingMode::selfinteracting_vs_frozen}) {
    cfg.mode = mode;
    const ContractionReport r = contraction_experiment(p, sec5_theory(), cfg);
    EXPECT_EQ(r.times.size(), 11u);
    EXPECT_EQ(r.ensemble_size, mode == CouplingMode::meanfield_vs_frozen ? 32 : 0);
    for (double m : r.mean_rho) EXPECT_TRUE(std::isfinite(m));
  }
  cfg.t_end = 0.015;
  EXPECT_THROW(contraction_experiment(p, sec5_theory(), cfg), std::invalid_argument);
}

TEST(Contraction, InadmissibleIsFlaggedNotRefused) {
  const ModelParams p = ModelParams::sec5(0.4);
  const Theory th = build_theory(p);
  ContractionConfig cfg;
  cfg.options.blend = BlendingParams::from(th.constants);
  cfg.first.mean = PhaseState(vec({1}), vec({0}));
  cfg.second.mean = PhaseState(vec({0}), vec({0}));
  cfg.n_pairs = 4;
  cfg.t_end = 1.0;
  cfg.delta_sensitivity = false;
  const ContractionReport r = contraction_experiment(p, th, cfg);
  EXPECT_FALSE(r.admissible);
  EXPECT_NE(r.admissibility_note.find("not admissible"), std::string::npos);
}

TEST(Moments, ColdStartApproachesStationaryValue) {
  const ModelParams p = ModelParams::sec5(0.5);
  MomentConfig cfg;
  cfg.dt = 0.005;
  cfg.n_steps = 10000;
  cfg.checkpoint_stride = 200;
  cfg.n_paths = 256;
  cfg.seed = 4;
  const MomentReport r = moment_experiment(p, cfg);
  EXPECT_EQ(r.second_moment.front(), 0.0);
  EXPECT_FALSE(r.growth_flag);
  double tail = 0.0;
  int count = 0;
  for (std::size_t i = r.times.size() / 2; i < r.times.size(); ++i, ++count) tail += r.second_moment[i];
  EXPECT_NEAR(tail / count, 1.5, 0.08);
  for (std::size_t i = 1; i < r.running_sup.size(); ++i) EXPECT_GE(r.running_sup[i], r.running_sup[i - 1]);
}

TEST(Moments, OverdispersedStartDecays) {
  const ModelParams p = ModelParams::sec5(0.0);
  MomentConfig cfg;
  cfg.n_steps = 5000;
  cfg.n_paths = 128;
  cfg.initial.variance = 10.0;
  const MomentReport r = moment_experiment(p, cfg);
  EXPECT_NEAR(r.second_moment.front(), 20.0, 4.0 * std::sqrt(800.0 / 128.0));
  EXPECT_LT(r.second_moment.back(), 2.5);
  EXPECT_FALSE(r.growth_flag);
}
