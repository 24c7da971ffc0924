#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "mvl/dynamics.hpp"
#include "mvl/errors.hpp"
#include "mvl/rng.hpp"

using namespace mvl;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// e^{A s} for A = [[0, 1], [-2, -3]] (eigenvalues -1 and -2).
Eigen::Matrix2d sec5_exp(double s) {
  const double a = std::exp(-s), b = std::exp(-2.0 * s);
  Eigen::Matrix2d m;
  m << 2 * a - b, a - b, -2 * a + 2 * b, -a + 2 * b;
  return m;
}

ModelParams nonaffine_2d() {
  ModelParams::Spec s;
  s.gamma = 2.0;
  s.k_matrix = Matrix::Identity(2, 2);
  s.b_int = [](const Vector& x, const Vector& y) -> Vector { return 0.1 * (y - x).array().sin().matrix(); };
  s.l_int = 0.2;
  return ModelParams(std::move(s));
}

}  // namespace

TEST(IntegratorConfig, Validation) {
  IntegratorConfig cfg;
  EXPECT_NO_THROW(validate(cfg, true));
  cfg.dt = 0.0;
  EXPECT_THROW(validate(cfg, false), std::invalid_argument);
  cfg = {};
  cfg.n_steps = 0;
  EXPECT_THROW(validate(cfg, false), std::invalid_argument);
  cfg = {};
  cfg.n_particles = 1;
  EXPECT_THROW(validate(cfg, true), std::invalid_argument);
  EXPECT_NO_THROW(validate(cfg, false));
  cfg = {};
  cfg.history_stride = 0;
  EXPECT_THROW(validate(cfg, false), std::invalid_argument);
}

TEST(EmStep, FrozenExample) {
  const ModelParams p = ModelParams::sec5(0.0);
  const EmpiricalMeasure mu(Matrix::Zero(1, 1));
  const PhaseState s = em_step_frozen(p, PhaseState(vec({1}), vec({0})), mu, 0.01, vec({0}));
  EXPECT_DOUBLE_EQ(s.x()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.v()[0], -0.02);

  const PhaseState t = em_step_frozen(p, PhaseState(vec({0}), vec({1})), mu, 0.01, vec({1}));
  EXPECT_DOUBLE_EQ(t.x()[0], 0.01);
  EXPECT_NEAR(t.v()[0], 1.0 - 0.03 + std::sqrt(0.06), 1e-15);
}

TEST(EmStep, FrozenInteractionUsesMeasureMean) {
  const ModelParams p = ModelParams::sec5(1.5);
  Matrix pts(1, 3);
  pts << 1.0, 2.0, 6.0;
  const EmpiricalMeasure mu(pts);
  const PhaseState s = em_step_frozen(p, PhaseState(vec({0}), vec({0})), mu, 0.1, vec({0}));
  EXPECT_NEAR(s.v()[0], 0.1 * 1.5 * 3.0, 1e-15);
}

TEST(EmStep, InteractionAverageNonAffine) {
  const ModelParams p = nonaffine_2d();
  Matrix pts(2, 2);
  pts << 0.0, 1.0, 2.0, -1.0;
  const Vector w = vec({0.25, 0.75});
  const EmpiricalMeasure mu(pts, w);
  const Vector x = vec({0.3, -0.2});
  const Vector expected = 0.25 * p.interaction(x, pts.col(0)) + 0.75 * p.interaction(x, pts.col(1));
  EXPECT_LT((interaction_average(p, x, mu) - expected).norm(), 1e-15);
}

TEST(EmStep, NonFiniteThrowsStepError) {
  const ModelParams p = ModelParams::sec5(0.0);
  const EmpiricalMeasure mu(Matrix::Zero(1, 1));
  try {
    em_step_frozen(p, PhaseState(vec({1e250}), vec({0})), mu, 1e100, vec({0}), 7);
    FAIL() << "expected step_error";
  } catch (const step_error& e) {
    EXPECT_EQ(e.step(), 7);
  }
}

TEST(EmStep, MeanFieldPermutationSymmetry) {
  const ModelParams p = ModelParams::sec5(0.8);
  std::vector<PhaseState> ens;
  std::vector<Vector> noise;
  for (int i = 0; i < 5; ++i) {
    ens.emplace_back(vec({0.3 * i - 0.5}), vec({0.1 * i * i}));
    noise.push_back(vec({std::sin(1.0 + i)}));
  }
  const auto out = em_step_meanfield(p, ens, 0.05, noise);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<PhaseState> ens_p;
  std::vector<Vector> noise_p;
  for (int i : perm) {
    ens_p.push_back(ens[i]);
    noise_p.push_back(noise[i]);
  }
  const auto out_p = em_step_meanfield(p, ens_p, 0.05, noise_p);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    EXPECT_NEAR(out_p[j].x()[0], out[perm[j]].x()[0], 1e-15);
    EXPECT_NEAR(out_p[j].v()[0], out[perm[j]].v()[0], 1e-15);
  }
}

TEST(EmStep, MeanFieldEqualsFrozenAtEnsembleLaw) {
  const ModelParams p = nonaffine_2d();
  std::vector<PhaseState> ens;
  std::vector<Vector> noise;
  Matrix pts(2, 4);
  for (int i = 0; i < 4; ++i) {
    ens.emplace_back(vec({0.5 * i, 1.0 - i}), vec({0.1, -0.2 * i}));
    noise.push_back(vec({0.3 * i, -0.1}));
    pts.col(i) = ens.back().x();
  }
  const auto out = em_step_meanfield(p, ens, 0.02, noise);
  const EmpiricalMeasure mu(pts);
  for (int i = 0; i < 4; ++i) {
    const PhaseState f = em_step_frozen(p, ens[i], mu, 0.02, noise[i]);
    EXPECT_LT((f.v() - out[i].v()).norm(), 1e-15);
  }
}

TEST(EmStep, SelfInteractingHistoryMatchesMean) {
  const ModelParams p = ModelParams::sec5(1.2);
  Matrix hist(1, 3);
  hist << 0.5, -1.0, 2.0;
  const PhaseState s(vec({0.4}), vec({-0.3}));
  const PhaseState a = em_step_selfinteracting(p, s, hist, 0.01, vec({0.7}));
  const PhaseState b = em_step_selfinteracting_mean(p, s, vec({0.5}), 0.01, vec({0.7}));
  EXPECT_NEAR(a.v()[0], b.v()[0], 1e-15);
  EXPECT_THROW(em_step_selfinteracting(p, s, Matrix(1, 0), 0.01, vec({0})), std::invalid_argument);
}

TEST(ExactLinear, TransitionMatchesEigenOracle) {
  const ExactLinearMap m = ExactLinearMap::sec5(0.0);
  EXPECT_LT((m.transition() - sec5_exp(1.0)).cwiseAbs().maxCoeff(), 1e-14);
  const ExactLinearMap half(3.0, 2.0, 0.0, 0.5);
  EXPECT_LT((half.transition() - sec5_exp(0.5)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ExactLinear, ForcingMatchesIntegral) {
  const ExactLinearMap m = ExactLinearMap::sec5(1.0);
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
  EXPECT_NEAR(m.forcing()[0], 0.5 - e1 + e2 / 2.0, 1e-14);
  EXPECT_NEAR(m.forcing()[1], e1 - e2, 1e-14);
}

TEST(ExactLinear, CovarianceMatchesLyapunovQuadrature) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const ExactLinearMap m = ExactLinearMap::sec5(0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto integrand = [&](double s) {
        const Eigen::Matrix2d e = sec5_exp(s);
        return 6.0 * e(i, 1) * e(j, 1);
      };
      const double oracle = GK::integrate(integrand, 0.0, 1.0, 0, 0.0);
      EXPECT_NEAR(m.noise_covariance()(i, j), oracle, 1e-13) << i << j;
    }
  EXPECT_NEAR(m.noise_covariance()(0, 0), 0.265669, 1e-6);
  EXPECT_NEAR(m.noise_covariance()(0, 1), 0.162230, 1e-6);
  EXPECT_NEAR(m.noise_covariance()(1, 1), 0.882397, 1e-6);
}

TEST(ExactLinear, PrintedRecursionSharesDeterministicPart) {
  const ExactLinearMap m = ExactLinearMap::sec5(1.7);
  for (double z : {-1.0, 0.5})
    for (double w : {0.0, 2.0})
      for (double mm : {-0.3, 1.1}) {
        const auto a = exact_linear_step(1.7, z, w, mm, 0.0);
        const auto b = m.step(z, w, mm, 0.0, 0.0);
        EXPECT_NEAR(a.first, b.first, 1e-14);
        EXPECT_NEAR(a.second, b.second, 1e-14);
      }
}

TEST(ExactLinear, NoiseReport) {
  const NoiseCovarianceReport r = sec5_noise_covariance_report();
  EXPECT_NEAR(r.printed(0, 0), 0.157697, 1e-6);
  EXPECT_NEAR(r.printed(0, 1), 0.324188, 1e-6);
  EXPECT_NEAR(r.printed(1, 1), 0.666453, 1e-6);
  EXPECT_FALSE(r.printed_reproduces_exact);
  EXPECT_NEAR(r.max_abs_discrepancy, std::abs(r.printed(1, 1) - r.exact(1, 1)), 1e-15);
  // The exact chain keeps the continuous invariant law N(0, diag(1/kappa, 1)).
  EXPECT_NEAR(r.exact_stationary(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(r.exact_stationary(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(r.exact_stationary(1, 1), 1.0, 1e-12);
  EXPECT_GT((r.printed_stationary - r.exact_stationary).cwiseAbs().maxCoeff(), 0.05);
  std::ostringstream out;
  write_noise_report(out, r);
  EXPECT_NE(out.str().find("printed_reproduces_exact = false"), std::string::npos);
}

TEST(ExactLinear, StationaryCovarianceIsFixedPoint) {
  Eigen::Matrix2d m, q;
  m << 0.5, 0.2, -0.1, 0.3;
  q << 1.0, 0.3, 0.3, 2.0;
  const Eigen::Matrix2d s = stationary_covariance(m, q);
  EXPECT_LT((s - (m * s * m.transpose() + q)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(RunTrajectory, Deterministic) {
  const ModelParams p = ModelParams::sec5(1.0);
  IntegratorConfig cfg{0.01, 500, 42, 2, 1};
  RunExtras ex;
  ex.initial = PhaseState(vec({1}), vec({0}));
  for (DynamicsKind kind : {DynamicsKind::selfinteracting, DynamicsKind::meanfield}) {
    const RunResult a = run_trajectory(kind, p, cfg, ex);
    const RunResult b = run_trajectory(kind, p, cfg, ex);
    EXPECT_EQ(a.trajectory.positions(), b.trajectory.positions());
    cfg.rng_seed = 43;
    const RunResult c = run_trajectory(kind, p, cfg, ex);
    EXPECT_NE(a.trajectory.positions(), c.trajectory.positions());
    cfg.rng_seed = 42;
  }
}

TEST(RunTrajectory, StorageStrideAndCheckpoints) {
  const ModelParams p = ModelParams::sec5(1.0);
  IntegratorConfig cfg{0.01, 100, 3, 2, 1};
  RunExtras ex;
  ex.initial = PhaseState(vec({2}), vec({0}));
  ex.checkpoints = {0, 10, 100};
  const RunResult full = run_trajectory(DynamicsKind::selfinteracting, p, cfg, ex);
  ex.storage_stride = 10;
  const RunResult thin = run_trajectory(DynamicsKind::selfinteracting, p, cfg, ex);
  ASSERT_EQ(thin.trajectory.size(), 11);
  for (Eigen::Index i = 0; i < 11; ++i) EXPECT_EQ(thin.trajectory.positions()(0, i), full.trajectory.positions()(0, 10 * i));
  EXPECT_DOUBLE_EQ(thin.trajectory.time(10), 1.0);

  ASSERT_EQ(full.mean_norm_log.size(), 3u);
  EXPECT_EQ(full.mean_norm_log[0].first, 0);
  EXPECT_DOUBLE_EQ(full.mean_norm_log[0].second, 2.0);
  const auto& x = full.trajectory.positions();
  const double m10 = x.leftCols(11).sum() / 11.0;
  EXPECT_NEAR(full.mean_norm_log[1].second, std::abs(m10), 1e-14);
  EXPECT_NEAR(full.final_mean->mean()[0], x.sum() / 101.0, 1e-14);
}

TEST(RunTrajectory, SelfInteractingHistoryAgreesWithShortcut) {
  const ModelParams p = ModelParams::sec5(1.3);
  IntegratorConfig cfg{0.01, 300, 9, 2, 1};
  RunExtras ex;
  ex.initial = PhaseState(vec({1}), vec({-1}));
  const RunResult a = run_trajectory(DynamicsKind::selfinteracting, p, cfg, ex);
  ex.use_running_mean = false;
  const RunResult b = run_trajectory(DynamicsKind::selfinteracting, p, cfg, ex);
  EXPECT_LT((a.trajectory.positions() - b.trajectory.positions()).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(RunTrajectory, FrozenNeedsMeasure) {
  const ModelParams p = ModelParams::sec5(1.0);
  EXPECT_THROW(run_trajectory(DynamicsKind::frozen, p, IntegratorConfig{}, RunExtras{}), std::invalid_argument);
  ModelParams::Spec spec;
  spec.gamma = 1.0;
  spec.k_matrix = Matrix::Identity(1, 1);
  EXPECT_NO_THROW(run_trajectory(DynamicsKind::frozen, ModelParams(spec), IntegratorConfig{}, RunExtras{}));
}

TEST(RunTrajectory, PrintedRecursionGuards) {
  const ModelParams p = ModelParams::sec5(1.0);
  IntegratorConfig cfg{0.5, 10, 1, 2, 1};
  RunExtras ex;
  ex.k = 1.0;
  EXPECT_THROW(run_trajectory(DynamicsKind::exactlinear, p, cfg, ex), std::invalid_argument);
  ex.linear_noise = LinearNoise::exact_covariance;
  EXPECT_NO_THROW(run_trajectory(DynamicsKind::exactlinear, p, cfg, ex));
}

TEST(RunTrajectory, PrintedRecursionUsesOneNormalPerStep) {
  const ModelParams p = ModelParams::sec5(1.0);
  IntegratorConfig cfg{1.0, 3, 11, 2, 1};
  RunExtras ex;
  ex.k = 1.0;
  ex.initial = PhaseState(vec({0.5}), vec({0.2}));
  const RunResult r = run_trajectory(DynamicsKind::exactlinear, p, cfg, ex);
  double z = 0.5, w = 0.2, sum = 0.5;
  for (int j = 0; j < 3; ++j) {
    DrawStream s(11, 0, static_cast<std::uint64_t>(j));
    std::tie(z, w) = exact_linear_step(1.0, z, w, sum / (j + 1), s.normal());
    sum += z;
  }
  EXPECT_DOUBLE_EQ(r.trajectory.positions()(0, 3), z);
  EXPECT_DOUBLE_EQ(r.trajectory.velocities()(0, 3), w);
}

// Euler-Maruyama with a small step against the exact Gaussian law at t = 1.
TEST(RunTrajectory, EulerMaruyamaMatchesExactLaw) {
  const ModelParams p = ModelParams::sec5(0.0);
  const ExactLinearMap exact = ExactLinearMap::sec5(0.0);
  const Eigen::Vector2d mean = exact.transition() * Eigen::Vector2d(1.0, 0.0);
  const Eigen::Matrix2d cov = exact.noise_covariance();
  const int paths = 4000;
  IntegratorConfig cfg{0.002, 500, 5, 2, 1};
  RunExtras ex;
  ex.initial = PhaseState(vec({1}), vec({0}));
  ex.mu_x = EmpiricalMeasure(Matrix::Zero(1, 1));
  ex.storage_stride = 500;
  Eigen::Matrix2Xd end(2, paths);
  for (int i = 0; i < paths; ++i) {
    ex.stream = static_cast<std::uint32_t>(i);
    const RunResult r = run_trajectory(DynamicsKind::frozen, p, cfg, ex);
    end(0, i) = r.trajectory.positions()(0, 1);
    end(1, i) = r.trajectory.velocities()(0, 1);
  }
  const Eigen::Vector2d m = end.rowwise().mean();
  const Eigen::Matrix2Xd c = end.colwise() - m;
  const Eigen::Matrix2d s = c * c.transpose() / (paths - 1);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(m[i], mean[i], 4.0 * std::sqrt(cov(i, i) / paths) + 0.01) << i;
    EXPECT_NEAR(s(i, i), cov(i, i), 0.1 * cov(i, i)) << i;
  }
  EXPECT_NEAR(s(0, 1), cov(0, 1), 0.03);
}
