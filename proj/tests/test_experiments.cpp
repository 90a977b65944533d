#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "homoglab/experiments.hpp"
#include "homoglab/norms.hpp"
#include "oracles.hpp"

using namespace homoglab;

namespace {

ExperimentConfig small_config(int d, int n) {
  ExperimentConfig c;
  c.d = d;
  c.n = n;
  c.ells = {1.0 / 8.0};
  c.seeds = 2;
  return c;
}

ExperimentConfig identity_config() {
  ExperimentConfig c = small_config(3, 32);
  DeterministicSpec s;
  c.deterministic = s;
  return c;
}

std::vector<double> cells(const ScalarField& u) { return {u.values().begin(), u.values().end()}; }

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

}  // namespace

TEST(Config, EllRangeIsClosed) {
  ExperimentConfig c = small_config(3, 32);
  const double h = 1.0 / 32.0;
  c.ells = {4.0 * h, 1.0 / 8.0};
  EXPECT_NO_THROW(c.validate());
  c.ells = {3.9 * h};
  EXPECT_THROW(c.validate(), Error);
  c.ells = {0.13};
  EXPECT_THROW(c.validate(), Error);
  c.ells = {};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, ScaleGuardAndSeeds) {
  ExperimentConfig c = small_config(3, 64);
  c.ells = {5.0 / 64.0};
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(c.validate_scaling(), Error);
  c.scale_guard = 5.0;
  EXPECT_NO_THROW(c.validate_scaling());
  c.seeds = 1;
  EXPECT_THROW(c.validate_scaling(), Error);
}

TEST(Realization, IdentityEnsembleHasNoError) {
  const ExperimentConfig c = identity_config();
  const RealizationRow r = run_realization(c, c.ells.front(), 0);
  ASSERT_FALSE(r.failed) << r.message;
  const double tol = 10.0 * c.solver.rel_tol;
  EXPECT_LE(r.errors.err_L2_ball, tol);
  EXPECT_LE(r.errors.err_Hm1_ball, tol);
  EXPECT_LE(r.errors.err_H1_twoscale2, tol);
  EXPECT_LE(r.errors.err_L2_exp1, tol);
  for (std::size_t s = 0; s < r.a1.stored_count(); ++s) EXPECT_EQ(r.a1.stored(s), 0.0);
  EXPECT_LE(r.a_hom.max_abs_diff(SmallMatrix::identity(3)), 1e-12);
}

TEST(Realization, RepeatIsIdentical) {
  const ExperimentConfig c = small_config(2, 64);
  SweepResult a, b;
  a.config = b.config = c;
  a.rows = {run_realization(c, c.ells.front(), 3)};
  b.rows = {run_realization(c, c.ells.front(), 3)};
  ASSERT_FALSE(a.rows[0].failed) << a.rows[0].message;
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
}

TEST(Realization, FailureIsFlaggedNotThrown) {
  ExperimentConfig c = small_config(3, 32);
  c.solver.rel_tol = 1e-13;
  c.solver.max_iter = 1;
  const RealizationRow r = run_realization(c, c.ells.front(), 0);
  EXPECT_TRUE(r.failed);
  EXPECT_NE(r.message.find("NoConvergence"), std::string::npos) << r.message;
  SweepResult s;
  s.config = c;
  s.rows = {r};
  EXPECT_THROW(summarize(s), Error);
  EXPECT_NE(sweep_csv(s).find(",1\n"), std::string::npos);
}

TEST(Realization, OneDimensionalPipelineMatchesQuadrature) {
  ExperimentConfig c = small_config(1, 256);
  c.ells = {1.0 / 16.0};
  c.solver.rel_tol = 1e-11;
  const RealizationPipeline p = run_pipeline(c, c.ells.front(), 4);
  const TorusGrid g = c.grid();
  const std::size_t n = g.size();
  const double tol = std::max(10.0 * c.solver.rel_tol, 50.0 / (256.0 * 256.0));

  std::vector<double> inva(n);
  for (std::size_t i = 0; i < n; ++i) inva[i] = 1.0 / p.a.a(0, 0)[i];
  const double ahom = 1.0 / oracle::periodic_mean(inva);
  EXPECT_LE(rel(p.foc.a_hom(0, 0), ahom), tol);

  std::vector<double> dphi(n);
  for (std::size_t i = 0; i < n; ++i) dphi[i] = ahom * inva[i] - 1.0;
  const std::vector<double> phi = oracle::periodic_antiderivative(dphi, 1.0);
  const double cpsi = oracle::periodic_mean(phi) / oracle::periodic_mean(inva);
  std::vector<double> dpsi(n);
  for (std::size_t i = 0; i < n; ++i) dpsi[i] = cpsi * inva[i] - phi[i];
  const std::vector<double> psi = oracle::periodic_antiderivative(dpsi, 1.0);

  // -(a u')' = f and -a_hom u_hom'' = f by repeated quadrature
  const std::vector<double> f = cells(p.macro.f);
  const std::vector<double> F = oracle::periodic_antiderivative(f, 1.0);
  std::vector<double> Fa(n), du(n), duh(n);
  for (std::size_t i = 0; i < n; ++i) Fa[i] = F[i] * inva[i];
  const double C = oracle::periodic_mean(Fa) / oracle::periodic_mean(inva);
  for (std::size_t i = 0; i < n; ++i) {
    du[i] = (C - F[i]) * inva[i];
    duh[i] = -F[i] / ahom;
  }
  const std::vector<double> u = oracle::periodic_antiderivative(du, 1.0);
  const std::vector<double> uh = oracle::periodic_antiderivative(duh, 1.0);

  double phi_err = 0.0, phi_scale = 0.0, psi_err = 0.0, psi_scale = 0.0, uh_err = 0.0, uh_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    phi_err = std::max(phi_err, std::fabs(p.foc.phi[0][i] - phi[i]));
    phi_scale = std::max(phi_scale, std::fabs(phi[i]));
    psi_err = std::max(psi_err, std::fabs(p.soc.psi_at(0, 0)[i] - psi[i]));
    psi_scale = std::max(psi_scale, std::fabs(psi[i]));
    uh_err = std::max(uh_err, std::fabs(p.macro.u_hom[i] - uh[i]));
    uh_scale = std::max(uh_scale, std::fabs(uh[i]));
  }
  EXPECT_LE(phi_err, tol * phi_scale);
  EXPECT_LE(psi_err, tol * psi_scale);
  EXPECT_LE(uh_err, tol * uh_scale);

  ScalarField e0(g), e1(g);
  for (std::size_t i = 0; i < n; ++i) {
    e0[i] = u[i] - uh[i];
    e1[i] = u[i] - (uh[i] + phi[i] * duh[i]);
  }
  const BallMask ball = ball_mask(g, c.macro.centre(g), c.macro.ball(g));
  EXPECT_LE(rel(p.errors.err_L2_ball, l2_ball(e0, ball)), tol);
  EXPECT_LE(rel(p.errors.err_Hm1_ball, hminus1_ball(e0, ball)), tol);
  EXPECT_LE(rel(p.errors.err_L2_exp1, l2_ball(e1, ball)), tol);
}

TEST(Fit, ExactPowerLaw) {
  std::vector<FitPoint> pts;
  for (double x : {0.125, 1.0 / 12.0, 0.0625, 1.0 / 24.0}) pts.push_back({x, 3.0 * std::pow(x, 1.5), 0.1});
  const FitResult f = fit_exponent(pts);
  EXPECT_NEAR(f.slope, 1.5, 1e-13);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_LE(f.stderr_slope, 1e-12);
}

TEST(Fit, OnePercentPerturbation) {
  std::vector<FitPoint> pts;
  for (double x : {0.125, 1.0 / 12.0, 0.0625, 1.0 / 24.0}) pts.push_back({x, x * x, 0.05 * x * x});
  pts[2].e *= 1.01;
  const FitResult f = fit_exponent(pts);
  EXPECT_GE(f.slope, 1.9);
  EXPECT_LE(f.slope, 2.1);
  EXPECT_GT(f.stderr_slope, 0.0);
}

TEST(Fit, ScaleInvariantSlope) {
  std::vector<FitPoint> pts;
  double v = 0.3;
  for (double x : {0.125, 0.1, 0.0625, 0.05, 1.0 / 24.0}) {
    v = 0.7 * v + 0.05 * x;
    pts.push_back({x, v * std::sqrt(x), 0.1 * v});
  }
  const FitResult base = fit_exponent(pts);
  for (double c : {2.0, 0.25, 1024.0, 3.0, 1e-7}) {
    std::vector<FitPoint> scaled = pts;
    for (auto& p : scaled) p.e *= c, p.s *= c;
    const FitResult f = fit_exponent(scaled);
    if (std::ilogb(c) == std::log2(c)) {
      EXPECT_EQ(f.slope, base.slope) << c;
    } else {
      EXPECT_NEAR(f.slope, base.slope, 1e-13) << c;
    }
    EXPECT_NEAR(f.intercept, base.intercept + std::log(c), 1e-12);
  }
}

TEST(Fit, DegenerateInputs) {
  EXPECT_THROW(fit_exponent({{0.1, 1.0, 0.1}, {0.2, 2.0, 0.1}}), Error);
  EXPECT_THROW(fit_exponent({{0.1, 1.0, 0.1}, {0.1, 2.0, 0.1}, {0.1, 3.0, 0.1}}), Error);
  EXPECT_THROW(fit_exponent({{0.1, 1.0, 0.1}, {0.2, 0.0, 0.1}, {0.3, 3.0, 0.1}}), Error);
  try {
    fit_exponent({{0.1, 1.0, 0.1}, {0.1, 2.0, 0.1}, {0.1, 3.0, 0.1}});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateFit);
  }
}

TEST(Sweep, SyntheticSlopeAndSummary) {
  ExperimentConfig c = small_config(3, 128);
  c.ells = {1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0};
  const SweepResult r = synthetic_sweep(c, 1.5);
  ASSERT_TRUE(r.fit_Hm1.has_value());
  EXPECT_NEAR(r.fit_Hm1->slope, 1.5, 1e-12);
  const auto j = nlohmann::json::parse(summary_json(r));
  EXPECT_EQ(j["fits"]["err_Hm1_ball"]["target"].get<double>(), 1.5);
  EXPECT_EQ(j["excluded"].get<int>(), 0);
  EXPECT_EQ(j["label"].get<std::string>(), "");
  const std::string csv = sweep_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "d,n,L,ell,seed,ahom_00,ahom_01,ahom_02,ahom_10,ahom_11,ahom_12,ahom_20,ahom_21,ahom_22,"
            "a1_000,a1_001,a1_002,a1_011,a1_012,a1_022,a1_111,a1_112,a1_122,a1_222,"
            "rstar,err_L2_ball,err_Hm1_ball,err_H1_twoscale2,err_L2_exp1,fail_flag");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 2);
}

TEST(Sweep, TwoDimensionalRunsAreLabelled) {
  ExperimentConfig c = small_config(2, 64);
  c.ells = {1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0};
  const SweepResult r = synthetic_sweep(c, 1.0);
  EXPECT_NE(r.label.find("outside theorem hypotheses"), std::string::npos);
  EXPECT_TRUE(std::isnan(theorem_target(2)));
}

TEST(Sweep, ThreadCountDoesNotChangeOutput) {
  ExperimentConfig c = small_config(2, 64);
  c.ells = {1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0};
  c.seeds = 2;
  const SweepResult one = sweep(c, 1);
  const SweepResult three = sweep(c, 3);
  EXPECT_EQ(sweep_csv(one), sweep_csv(three));
  EXPECT_EQ(summary_json(one), summary_json(three));
  EXPECT_EQ(one.excluded, 0);
}

TEST(Sweep, FailedSeedsAreExcludedAndCounted) {
  ExperimentConfig c = small_config(2, 64);
  c.ells = {1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0};
  SweepResult r = synthetic_sweep(c, 1.5);
  r.rows[1].failed = true;
  r.rows[1].errors.err_Hm1_ball = 1e6;
  summarize(r);
  EXPECT_EQ(r.excluded, 1);
  EXPECT_EQ(r.points[0].count, 1);
  EXPECT_NEAR(r.fit_Hm1->slope, 1.5, 1e-12);
}

TEST(Studies, IdentityEnsembleIsTrivial) {
  ExperimentConfig c = identity_config();
  c.seeds = 64;
  const A1Study a1 = symmetric_a1_study(c);
  EXPECT_EQ(a1.max_abs_z, 0.0);
  EXPECT_EQ(a1.mean_norm, 0.0);
  for (double s : a1.stderr_) EXPECT_EQ(s, 0.0);
  EXPECT_TRUE(a1.pass);

  const GrowthStudyResult gr = corrector_growth_study(c, 2);
  ASSERT_EQ(gr.radii.size(), 3u);
  for (std::size_t r = 0; r < gr.radii.size(); ++r) {
    EXPECT_EQ(gr.psi_osc[r], 0.0);
    EXPECT_EQ(gr.Psi_osc[r], 0.0);
    EXPECT_EQ(gr.phi_hm1[r], 0.0);
  }

  const RStarTail tail = rstar_tail_study(c);
  for (double r : tail.rstar) EXPECT_EQ(r, c.grid().spacing());
  EXPECT_TRUE(tail.nonincreasing);
  EXPECT_EQ(tail.tail_mass, 0.0);
}

TEST(Studies, A1StudyRejectsNonsymmetricEnsemble) {
  ExperimentConfig c = small_config(3, 32);
  c.map.symmetric = false;
  c.map.skew_amplitude = 0.3;
  EXPECT_THROW(symmetric_a1_study(c), Error);
}

TEST(Studies, StudiesEnforceSeedCounts) {
  ExperimentConfig c = identity_config();
  c.seeds = 15;
  EXPECT_THROW(symmetric_a1_study(c), Error);
  c.seeds = 63;
  EXPECT_THROW(rstar_tail_study(c), Error);
}

TEST(Studies, RStarSurvivalIsNonincreasing) {
  ExperimentConfig c = small_config(3, 32);
  c.seeds = 256;
  const RStarTail tail = rstar_tail_study(c);
  EXPECT_TRUE(tail.nonincreasing);
  EXPECT_EQ(tail.survival.size(), tail.radii.size());
  for (double s : tail.survival) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Studies, RStarTailMassFixture) {
  // Calibration fixture at lambda = 0.2, ell = L/16.
  ExperimentConfig c = small_config(3, 64);
  c.ells = {1.0 / 16.0};
  c.seeds = 64;
  ASSERT_EQ(c.map.lambda, 0.2);
  const RStarTail tail = rstar_tail_study(c);
  EXPECT_TRUE(tail.nonincreasing);
  EXPECT_LE(tail.tail_mass, 0.1);
}
