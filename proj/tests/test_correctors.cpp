#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "homoglab/correctors.hpp"
#include "homoglab/ensemble.hpp"
#include "homoglab/hgf1.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/spectral.hpp"
#include "oracles.hpp"

using namespace homoglab;
constexpr double kPi = std::numbers::pi;

namespace {

CoefficientField random_field(const TorusGrid& g, bool symmetric, std::uint64_t seed, double ell) {
  const CovarianceSpec c{CovarianceKind::GaussianBump, ell, 1.0};
  LipschitzMapSpec map;
  map.symmetric = symmetric;
  map.skew_amplitude = symmetric ? 0.0 : 0.4;
  return sample_coefficient_field(g, c, map, 29, seed);
}

double max_abs(const ScalarField& u) {
  double m = 0.0;
  for (double x : u.values()) m = std::max(m, std::fabs(x));
  return m;
}

/// a1 of the 2D field a = alpha(x1) I + beta(x1) (e1 x e2 - e2 x e1) by 1D quadrature of
/// the closed corrector formulas (all correctors depend on x1 only).
SymTensor3 skew_profile_a1_oracle(const DeterministicSpec& s) {
  const int m = 8192;
  std::vector<double> al(m), be(m), inva(m);
  for (int i = 0; i < m; ++i) {
    const double t = 2.0 * kPi * (i + 0.5) / m;
    al[i] = s.alpha_mean + s.alpha_amp * std::cos(t);
    be[i] = s.beta_mean + s.beta_amp * std::cos(t + 1.0);
    inva[i] = 1.0 / al[i];
  }
  const auto mean_over = [&](auto f) {
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) v[i] = f(i);
    return oracle::periodic_mean(v);
  };
  const double mi = oracle::periodic_mean(inva);
  // a_{k1} and a_{kj} entries
  const auto a = [&](int k, int j, int i) {
    if (k == j) return al[i];
    return k == 0 ? be[i] : -be[i];
  };
  std::vector<std::vector<double>> dphi(2, std::vector<double>(m)), phi(2);
  for (int j = 0; j < 2; ++j) {
    // alpha phi_j' + a_{1j} = const
    const double c = mean_over([&](int i) { return a(0, j, i) * inva[i]; }) / mi;
    for (int i = 0; i < m; ++i) dphi[j][i] = (c - a(0, j, i)) * inva[i];
    phi[j] = oracle::periodic_antiderivative(dphi[j], 1.0);
  }
  // sigma_i12 = -antiderivative of q_i2, with q_i2 = a_{2i} + a_{21} phi_i'
  std::vector<std::vector<double>> sig(2);
  for (int i0 = 0; i0 < 2; ++i0) {
    std::vector<double> q2(m);
    for (int i = 0; i < m; ++i) q2[i] = a(1, i0, i) + a(1, 0, i) * dphi[i0][i];
    sig[i0] = oracle::periodic_antiderivative(q2, 1.0);
    for (double& v : sig[i0]) v = -v;
  }
  const auto sigma = [&](int i0, int k, int j, int i) {
    if (k == j) return 0.0;
    return k < j ? sig[i0][i] : -sig[i0][i];
  };
  std::vector<double> full(8, 0.0);
  for (int i0 = 0; i0 < 2; ++i0)
    for (int j = 0; j < 2; ++j) {
      std::vector<double> g1(m);
      for (int i = 0; i < m; ++i) g1[i] = phi[i0][i] * a(0, j, i) - sigma(i0, 0, j, i);
      const double c = mean_over([&](int i) { return g1[i] * inva[i]; }) / mi;
      std::vector<double> dpsi(m);
      for (int i = 0; i < m; ++i) dpsi[i] = (c - g1[i]) * inva[i];
      for (int k = 0; k < 2; ++k)
        full[(i0 * 2 + j) * 2 + k] = mean_over([&](int i) {
          return a(k, 0, i) * dpsi[i] + phi[i0][i] * a(k, j, i) - sigma(i0, k, j, i);
        });
    }
  SymTensor3 out(2);
  for (std::size_t st = 0; st < out.stored_count(); ++st) {
    auto t = out.triple(st);
    double acc = 0.0;
    int cnt = 0;
    do {
      acc += full[(t[0] * 2 + t[1]) * 2 + t[2]];
      ++cnt;
    } while (std::next_permutation(t.begin(), t.end()));
    out.stored(st) = acc / cnt;  // eps = period = 1
  }
  return out;
}

}  // namespace

TEST(FirstOrder, IdentityHasZeroCorrectors) {
  const TorusGrid g(3, 16, 1.0);
  const CoefficientField a = deterministic_field(g, {});
  const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
  for (int i = 0; i < 3; ++i) EXPECT_LE(max_abs(foc.phi[i]), 1e-12);
  for (const auto& s : foc.sigma.components()) EXPECT_LE(max_abs(s), 1e-12);
  EXPECT_LE(foc.a_hom.max_abs_diff(SmallMatrix::identity(3)), 1e-12);
  const SecondOrderCorrectors soc = solve_second_order(a, foc, SolveSpec{}, PsiMode::Full);
  for (const auto& p : soc.psi) EXPECT_LE(max_abs(p), 1e-12);
  for (std::size_t s = 0; s < soc.a1.stored_count(); ++s) EXPECT_EQ(soc.a1.stored(s), 0.0);
  for (const auto& p : soc.Psi->components()) EXPECT_LE(max_abs(p), 1e-12);
  EXPECT_EQ(estimate_rstar(foc).r_star, g.spacing());
}

TEST(FirstOrder, LaminateMatchesQuadratureOracle) {
  const double tol = SolveSpec{}.rel_tol;
  double prev_phi = 0.0, prev_psi = 0.0;
  for (int n : {16, 32}) {
    const TorusGrid g(3, n, 1.0);
    DeterministicSpec s;
    s.kind = DeterministicKind::Laminate;
    const CoefficientField a = deterministic_field(g, s);
    const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
    SmallMatrix expect = SmallMatrix::identity(3);
    expect(0, 0) = 2.0 / 3.0;
    EXPECT_LE(foc.a_hom.max_abs_diff(expect), 10.0 * tol);
    const SecondOrderCorrectors soc = solve_second_order(a, foc, SolveSpec{}, PsiMode::Full, false);
    const oracle::LaminateOracle o = oracle::laminate_oracle(n);
    const auto sp = Spectral::of(g);
    const ScalarField dphi = sp->diff(foc.phi[0], 0);
    double e_phi = 0.0, e_psi = 0.0, e_slope = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) {
      const int i = g.cell_of(c)[0];
      const double x = (i + 0.5) / n;
      const double dist = std::min({x, std::fabs(x - 0.5), 1.0 - x});
      if (dist >= 0.125) {
        e_phi = std::max(e_phi, std::fabs(foc.phi[0][c] - o.phi[i]));
        e_slope = std::max(e_slope, std::fabs(dphi[c] - (x < 0.5 ? -1.0 / 3.0 : 1.0 / 3.0)));
      }
      e_psi = std::max(e_psi, std::fabs(soc.psi_at(0, 0)[c] - o.psi[i]));
    }
    EXPECT_LE(e_phi, 0.3 / (n * n));
    EXPECT_LE(e_psi, 0.02 / (n * n));
    EXPECT_LE(e_slope, 0.2);
    if (prev_phi > 0.0) {
      EXPECT_GE(prev_phi / e_phi, 3.0);
      EXPECT_GE(prev_psi / e_psi, 3.0);
    }
    prev_phi = e_phi;
    prev_psi = e_psi;
    // laminates carry no skew flux and no third-order coefficient
    for (std::size_t st = 0; st < soc.a1.stored_count(); ++st) EXPECT_LE(std::fabs(soc.a1.stored(st)), 1e-12);
  }
}

TEST(FirstOrder, CheckerboardDualityValue) {
  // Two-phase checkerboard in 2D: a_hom = sqrt(1 * 4) I.
  const TorusGrid g(2, 256, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::Checkerboard;
  s.value1 = 1.0;
  s.value2 = 4.0;
  const CoefficientField a = deterministic_field(g, s);
  const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
  EXPECT_NEAR(foc.a_hom(0, 0), 2.0, 0.04);
  EXPECT_NEAR(foc.a_hom(1, 1), 2.0, 0.04);
  EXPECT_NEAR(foc.a_hom(0, 1), 0.0, 1e-8);
}

TEST(FirstOrder, InvariantsOnRandomField) {
  const TorusGrid g(3, 16, 1.0);
  for (bool sym : {true, false}) {
    const CoefficientField a = random_field(g, sym, 1, 0.15);
    SolveSpec spec;
    const FirstOrderCorrectors foc = solve_first_order(a, spec);
    for (int i = 0; i < 3; ++i) {
      EXPECT_LE(std::fabs(mean(foc.phi[i])), 1e-12 * (1.0 + l2_norm(foc.phi[i])));
      for (int j = 0; j < 3; ++j) EXPECT_EQ(foc.a_hom(j, i), mean(foc.q[i][j]));
    }
    for (const auto& s : foc.sigma.components()) EXPECT_LE(std::fabs(mean(s)), 1e-14);
    for (std::size_t c = 0; c < g.size(); c += 97)
      EXPECT_EQ(foc.sigma.at(0, 1, 2, c), -foc.sigma.at(0, 2, 1, c));
    // ellipticity and boundedness inherited by a_hom
    EXPECT_GE(min_symmetric_eigenvalue(foc.a_hom), a.lambda - 1e-12);
    EXPECT_LE(operator_norm(foc.a_hom), 3.0 * a.upper);
    EXPECT_LE(check_sigma_divergence(a, foc).max_relative(), 1e-7);
  }
}

TEST(FirstOrder, SigmaResidualTracksTolerance) {
  const TorusGrid g(3, 16, 1.0);
  const CoefficientField a = random_field(g, true, 2, 0.15);
  SolveSpec loose, tight;
  loose.rel_tol = 1e-6;
  tight.rel_tol = 1e-10;
  const double rl = check_sigma_divergence(a, solve_first_order(a, loose)).max_relative();
  const double rt = check_sigma_divergence(a, solve_first_order(a, tight)).max_relative();
  EXPECT_LE(rl, 10.0 * loose.rel_tol);
  EXPECT_LE(rt, 10.0 * tight.rel_tol);
  EXPECT_LT(rt, rl);
  // halving the tolerance halves the residual, within a factor 4
  SolveSpec half = loose;
  half.rel_tol = 0.5 * loose.rel_tol;
  const double rh = check_sigma_divergence(a, solve_first_order(a, half)).max_relative();
  EXPECT_GE(rl / rh, 2.0 / 4.0);
  EXPECT_LE(rl / rh, 2.0 * 4.0);
}

TEST(FirstOrder, TransposeDuality) {
  const TorusGrid g(2, 32, 1.0);
  const CoefficientField a = random_field(g, false, 3, 0.1);
  SolveSpec spec;
  const FirstOrderCorrectors f = solve_first_order(a, spec);
  const FirstOrderCorrectors ft = solve_first_order(a.transpose(), spec);
  EXPECT_LE(ft.a_hom.max_abs_diff(f.a_hom.transpose()), 10.0 * spec.rel_tol * operator_norm(f.a_hom));
  EXPECT_GT(std::fabs(f.a_hom(0, 1) - f.a_hom(1, 0)), 1e-3);
}

TEST(SecondOrder, SkewProfileA1MatchesOracle) {
  const TorusGrid g(2, 64, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::SkewProfile;
  const CoefficientField a = deterministic_field(g, s);
  const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
  const SecondOrderCorrectors soc = solve_second_order(a, foc, SolveSpec{}, PsiMode::Full, false);
  const SymTensor3 ref = skew_profile_a1_oracle(s);
  double scale = 0.0;
  for (std::size_t st = 0; st < ref.stored_count(); ++st) scale = std::max(scale, std::fabs(ref.stored(st)));
  ASSERT_GT(scale, 1e-3);
  for (std::size_t st = 0; st < ref.stored_count(); ++st)
    EXPECT_NEAR(soc.a1.stored(st), ref.stored(st), 1e-7 * scale) << "slot " << st;
  // the symmetrized solves give the same a1
  const SecondOrderCorrectors sym = solve_second_order(a, foc, SolveSpec{}, PsiMode::Symmetrized, false);
  for (std::size_t st = 0; st < ref.stored_count(); ++st) EXPECT_NEAR(sym.a1.stored(st), soc.a1.stored(st), 1e-9 * scale);
}

TEST(SecondOrder, InvariantsOnNonsymmetricField) {
  const TorusGrid g(3, 16, 1.0);
  const CoefficientField a = random_field(g, false, 4, 0.15);
  SolveSpec spec;
  const FirstOrderCorrectors foc = solve_first_order(a, spec);
  const SecondOrderCorrectors soc = solve_second_order(a, foc, spec, PsiMode::Full);
  double psi_scale = 0.0;
  for (const auto& p : soc.psi) {
    EXPECT_LE(std::fabs(mean(p)), 1e-12 * (1.0 + l2_norm(p)));
    psi_scale = std::max(psi_scale, l2_norm(p));
  }
  // psi is not symmetric in (i, j) for nonsymmetric coefficients
  EXPECT_GT(l2_norm(soc.psi_at(0, 1) - soc.psi_at(1, 0)), 10.0 * spec.rel_tol * psi_scale);
  for (double r : psi_residual_functional(a, foc, soc.psi, 10, 5)) EXPECT_LE(r, spec.rel_tol);
  for (const auto& q : soc.q1.components()) EXPECT_LE(std::fabs(mean(q)), 1e-15);
  // permutations of a1 agree bitwise and symmetrization is idempotent
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(soc.a1(i, j, k), soc.a1(j, k, i));
        EXPECT_EQ(soc.a1(i, j, k), soc.a1(k, j, i));
      }
  const SymTensor3 again = symmetrize(expand(soc.a1), 3);
  for (std::size_t st = 0; st < again.stored_count(); ++st) EXPECT_EQ(again.stored(st), soc.a1.stored(st));
  // Psi: structural skew, gauge equation exact up to FFT roundoff
  for (std::size_t c = 0; c < g.size(); c += 101)
    EXPECT_EQ(soc.Psi->at(0, 1, 0, 2, c), -soc.Psi->at(0, 1, 2, 0, c));
  for (const auto& p : soc.Psi->components()) EXPECT_LE(std::fabs(mean(p)), 1e-15);
  const PsiDiagnostics pd = check_Psi(soc.q1, *soc.Psi);
  EXPECT_LE(pd.gauge_residual, 1e-10);
}

TEST(SecondOrder, SymmetrizedModeMatchesFull) {
  const TorusGrid g(3, 16, 1.0);
  const CoefficientField a = random_field(g, false, 6, 0.15);
  SolveSpec spec;
  spec.rel_tol = 1e-11;
  const FirstOrderCorrectors foc = solve_first_order(a, spec);
  const SecondOrderCorrectors full = solve_second_order(a, foc, spec, PsiMode::Full, false);
  const SecondOrderCorrectors sym = solve_second_order(a, foc, spec, PsiMode::Symmetrized, false);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const ScalarField avg = 0.5 * (full.psi_at(i, j) + full.psi_at(j, i));
      EXPECT_LE(l2_norm(sym.psi_at(i, j) - avg), 1e-8 * (1.0 + l2_norm(avg)));
    }
  EXPECT_EQ(sym.stats.size(), 6u);
  EXPECT_EQ(full.stats.size(), 9u);
}

TEST(SecondOrder, ZeroQ1GivesZeroPsi) {
  const TorusGrid g(3, 8, 1.0);
  const SymField3 q1(g);
  const SkewField4 Psi = solve_Psi(q1);
  for (const auto& p : Psi.components()) EXPECT_EQ(max_abs(p), 0.0);
}

TEST(SecondOrder, Q1EpsScaleRejected) {
  const TorusGrid g(2, 8, 1.0);
  const CoefficientField a = deterministic_field(g, {});
  const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
  EXPECT_THROW(compute_q1_a1(a, foc, std::vector<ScalarField>(4, ScalarField(g)), 0.0), Error);
}

TEST(RStar, MonotoneInDeltaAndDyadic) {
  const TorusGrid g(3, 32, 1.0);
  const CoefficientField a = random_field(g, true, 7, 0.1);
  const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
  double prev = 0.0;
  for (double delta : {1.0, 0.1, 1e-2, 1e-3, 1e-4, 1e-6}) {
    const RStarDiagnostic r = estimate_rstar(foc, delta);
    EXPECT_GE(r.r_star, prev);
    prev = r.r_star;
    const double lg = std::log2(r.r_star / g.spacing());
    EXPECT_TRUE(r.capped ? r.r_star == 0.5 : std::fabs(lg - std::round(lg)) < 1e-12);
    EXPECT_GE(r.radii.size(), 3u);
  }
  EXPECT_THROW(estimate_rstar(foc, 0.0), Error);
}

TEST(Bundle, ManifestRoundTrip) {
  const TorusGrid g(2, 16, 1.0);
  const CoefficientField a = random_field(g, false, 8, 0.15);
  const FirstOrderCorrectors foc = solve_first_order(a, SolveSpec{});
  const SecondOrderCorrectors soc = solve_second_order(a, foc, SolveSpec{}, PsiMode::Full);
  const auto dir = std::filesystem::temp_directory_path() / "homoglab_bundle_test";
  std::filesystem::remove_all(dir);
  write_corrector_bundle(dir.string(), a, foc, &soc, R"({"r_star": 0.25})");
  std::ifstream is(dir / "manifest.json");
  const nlohmann::json m = nlohmann::json::parse(is);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_EQ(m["a_hom"][i][j].get<double>(), foc.a_hom(i, j));
  EXPECT_EQ(m["a1"][0][1][1].get<double>(), soc.a1(0, 1, 1));
  EXPECT_EQ(m["r_star"].get<double>(), 0.25);
  const HgfFile phi = read_hgf1((dir / "phi.hgf").string());
  ASSERT_EQ(phi.components.size(), 2u);
  for (std::size_t c = 0; c < g.size(); ++c) ASSERT_EQ(phi.components[1][c], foc.phi[1][c]);
  const HgfFile psi4 = read_hgf1((dir / "Psi.hgf").string());
  EXPECT_EQ(psi4.components.size(), 16u);
  std::filesystem::remove_all(dir);
}
