#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homoglab/ensemble.hpp"
#include "homoglab/linalg.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/reduce.hpp"
#include "oracles.hpp"

using namespace homoglab;

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= (n - 1.0);
  return {m, std::sqrt(v / n)};
}

/// Spatial average of g(x) g(x + shift e0).
double lagged_product(const ScalarField& g, int shift) {
  const TorusGrid& grid = g.grid();
  CompensatedSum acc;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    auto cell = grid.cell_of(c);
    cell[0] = (cell[0] + shift) % grid.cells();
    acc.add(g[c] * g[grid.index_of(cell)]);
  }
  return acc.value() / static_cast<double>(grid.size());
}

SmallMatrix dense_min_check(const SmallMatrix& m, double& min_eig, double& norm) {
  const int d = m.d;
  oracle::Dense s(d, std::vector<double>(d)), mtm(d, std::vector<double>(d, 0.0)), vec;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      s[i][j] = 0.5 * (m(i, j) + m(j, i));
      for (int k = 0; k < d; ++k) mtm[i][j] += m(k, i) * m(k, j);
    }
  min_eig = oracle::jacobi_eigen(s, vec).front();
  norm = std::sqrt(oracle::jacobi_eigen(mtm, vec).back());
  return m;
}

}  // namespace

TEST(Covariance, ValidateRange) {
  const TorusGrid g(2, 32, 1.0);
  CovarianceSpec c;
  c.ell = 2.0 * g.spacing();
  EXPECT_THROW(c.validate(g), Error);
  c.ell = 0.25;
  EXPECT_THROW(c.validate(g), Error);
  c.ell = 0.1;
  EXPECT_NO_THROW(c.validate(g));
  c.variance = 0.0;
  EXPECT_THROW(c.validate(g), Error);
}

TEST(Covariance, DensityIntegratesToVariance) {
  // int S(xi) dxi / (2 pi)^d = C(0), by a radial quadrature independent of the torus.
  for (auto kind : {CovarianceKind::GaussianBump, CovarianceKind::Exponential})
    for (int d = 1; d <= 3; ++d) {
      CovarianceSpec c{kind, 0.3, 1.7};
      const double area = d == 1 ? 2.0 : (d == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi);
      // Substitution r = tan(t) handles the algebraic tail of the exponential density.
      const int steps = 200000;
      double acc = 0.0;
      for (int s = 0; s < steps; ++s) {
        const double t = (s + 0.5) * (0.5 * std::numbers::pi) / steps;
        const double r = std::tan(t) / c.ell;
        const double jac = 1.0 / (std::cos(t) * std::cos(t)) / c.ell;
        acc += c.density(r * r, d) * std::pow(r, d - 1) * jac;
      }
      acc *= (0.5 * std::numbers::pi) / steps * area / std::pow(2.0 * std::numbers::pi, d);
      EXPECT_NEAR(acc, c.variance, 1e-4 * c.variance) << to_string(kind) << " d=" << d;
    }
}

TEST(GaussianField, DeterministicPerKey) {
  const TorusGrid g(2, 32, 1.0);
  const CovarianceSpec c{CovarianceKind::GaussianBump, 0.1, 1.0};
  const ScalarField a = sample_gaussian_field(g, c, {7, 3, 0});
  const ScalarField b = sample_gaussian_field(g, c, {7, 3, 0});
  for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(a[i], b[i]);
  const ScalarField other = sample_gaussian_field(g, c, {7, 3, 1});
  const ScalarField other_seed = sample_gaussian_field(g, c, {8, 3, 0});
  EXPECT_GT(l2_norm(a - other), 0.1 * l2_norm(a));
  EXPECT_GT(l2_norm(a - other_seed), 0.1 * l2_norm(a));
}

TEST(GaussianField, VarianceAndCovarianceMatchKernel) {
  // Pointwise variance and lag covariance against the whole-space kernel, over 32 seeds, within 4 SE.
  const TorusGrid g(2, 64, 1.0);
  for (auto kind : {CovarianceKind::GaussianBump, CovarianceKind::Exponential}) {
    const CovarianceSpec c{kind, 0.0625, 1.0};
    for (int lag : {0, 2, 4, 8}) {
      std::vector<double> per_seed;
      for (std::uint64_t s = 0; s < 32; ++s) per_seed.push_back(lagged_product(sample_gaussian_field(g, c, {11, s, 0}), lag));
      const MeanSe ms = mean_se(per_seed);
      const double target = c.kernel(lag * g.spacing());
      // The exponential kernel loses its cusp above Nyquist; allow that truncation on top of the SE.
      const double trunc = kind == CovarianceKind::Exponential ? 0.05 : 0.0;
      EXPECT_LE(std::fabs(ms.mean - target), 4.0 * ms.se + trunc) << to_string(kind) << " lag " << lag;
    }
  }
}

TEST(GaussianField, SeedSplittingUncorrelated) {
  const TorusGrid g(2, 64, 1.0);
  const CovarianceSpec c{CovarianceKind::GaussianBump, 0.0625, 1.0};
  std::vector<double> corr;
  for (std::uint64_t s = 0; s < 32; ++s) {
    const auto f = sample_gaussian_fields(g, c, 5, s, 2);
    corr.push_back(l2_inner(f[0], f[1]) / g.volume());
  }
  const MeanSe ms = mean_se(corr);
  EXPECT_LE(std::fabs(ms.mean), 4.0 * ms.se);
}

TEST(GaussianField, StationaryAcrossSubBoxes) {
  const TorusGrid g(2, 64, 1.0);
  const CovarianceSpec c{CovarianceKind::GaussianBump, 0.0625, 1.0};
  const LipschitzMapSpec map{};
  std::vector<double> mean_diff, var_diff;
  for (std::uint64_t s = 0; s < 32; ++s) {
    const CoefficientField a = sample_coefficient_field(g, c, map, 21, s);
    double m[2] = {0, 0}, q[2] = {0, 0};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t cell = 0; cell < g.size(); ++cell) {
      const auto idx = g.cell_of(cell);
      if (idx[1] >= 16) continue;
      const int box = idx[0] < 32 ? 0 : 1;
      const double v = a.a(0, 0)[cell];
      m[box] += v;
      q[box] += v * v;
      ++cnt[box];
    }
    for (int b = 0; b < 2; ++b) {
      m[b] /= cnt[b];
      q[b] = q[b] / cnt[b] - m[b] * m[b];
    }
    mean_diff.push_back(m[0] - m[1]);
    var_diff.push_back(q[0] - q[1]);
  }
  const MeanSe dm = mean_se(mean_diff), dv = mean_se(var_diff);
  EXPECT_LE(std::fabs(dm.mean), 4.0 * dm.se);
  EXPECT_LE(std::fabs(dv.mean), 4.0 * dv.se);
}

TEST(LipschitzMap, MidpointAtZeroInput) {
  const TorusGrid g(3, 8, 1.0);
  LipschitzMapSpec map;
  map.lambda = 0.2;
  const CoefficientField a = build_coefficient_field({ScalarField(g)}, map);
  for (std::size_t c = 0; c < g.size(); ++c) ASSERT_EQ(a.at(c), SmallMatrix::diagonal(3, map.lambda + (1.0 - map.lambda) / 2.0));
}

TEST(LipschitzMap, BoundsHoldOnMillionInputs) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (bool sym : {true, false}) {
    LipschitzMapSpec map;
    map.lambda = 0.2;
    map.symmetric = sym;
    map.skew_amplitude = sym ? 0.0 : 0.4;
    double worst_eig = INFINITY, worst_norm = 0.0;
    for (int t = 0; t < 1000000; ++t) {
      double e = 0, nrm = 0;
      dense_min_check(map.apply(3, normal(rng), normal(rng)), e, nrm);
      worst_eig = std::min(worst_eig, e);
      worst_norm = std::max(worst_norm, nrm);
    }
    EXPECT_GE(worst_eig, map.lambda - 1e-12);
    EXPECT_LE(worst_norm, 1.0 + 1e-12);
  }
}

TEST(LipschitzMap, NonsymmetricSampleHasSkewAndNoRescale) {
  const TorusGrid g(3, 32, 1.0);
  const CovarianceSpec c{CovarianceKind::GaussianBump, 0.125, 1.0};
  LipschitzMapSpec map;
  map.symmetric = false;
  map.skew_amplitude = 0.4;
  const CoefficientField a = sample_coefficient_field(g, c, map, 1, 0);
  EXPECT_FALSE(a.symmetric);
  EXPECT_EQ(a.rescale_events, 0);
  const EllipticityReport r = validate_ellipticity(a);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_GT(r.max_asymmetry, 0.1);
}

TEST(LipschitzMap, RejectsBadSpecs) {
  LipschitzMapSpec map;
  map.lambda = 0.0;
  EXPECT_THROW(map.validate(), Error);
  map.lambda = 0.2;
  map.symmetric = false;
  map.skew_amplitude = 0.5;
  EXPECT_THROW(map.validate(), Error);
}

TEST(LipschitzMap, SymmetricSamplesNeverViolate) {
  const TorusGrid g(3, 32, 1.0);
  const CovarianceSpec c{CovarianceKind::GaussianBump, 0.125, 1.0};
  const LipschitzMapSpec map{};
  for (std::uint64_t s = 0; s < 32; ++s) {
    const CoefficientField a = sample_coefficient_field(g, c, map, 3, s);
    const EllipticityReport r = validate_ellipticity(a);
    ASSERT_EQ(r.violations, 0u) << s;
    ASSERT_EQ(a.rescale_events, 0);
    ASSERT_GE(r.min_eigenvalue, 0.2);
  }
}

TEST(CorrelatedSkewInput, ShiftAndMix) {
  const TorusGrid g(2, 16, 1.0);
  ScalarField g1(g), g2(g, 1.0);
  for (std::size_t c = 0; c < g.size(); ++c) g1[c] = static_cast<double>(c);
  const ScalarField s = correlated_skew_input(g1, g2, 1.0, 3);
  for (std::size_t c = 0; c < g.size(); ++c) {
    auto cell = g.cell_of(c);
    cell[0] = (cell[0] + 13) % 16;
    ASSERT_EQ(s[c], g1[g.index_of(cell)]);
  }
  const ScalarField u = correlated_skew_input(g1, g2, 0.0, 3);
  for (std::size_t c = 0; c < g.size(); ++c) ASSERT_EQ(u[c], 1.0);
}

TEST(Deterministic, ConstantIdentity) {
  const TorusGrid g(3, 8, 1.0);
  const CoefficientField a = deterministic_field(g, {});
  for (std::size_t c = 0; c < g.size(); ++c) ASSERT_EQ(a.at(c), SmallMatrix::identity(3));
  const EllipticityReport r = validate_ellipticity(a);
  EXPECT_EQ(r.min_eigenvalue, 1.0);
  EXPECT_EQ(r.max_norm, 1.0);
  EXPECT_EQ(r.violations, 0u);
}

TEST(Deterministic, DiagonalLambda) {
  const TorusGrid g(3, 8, 1.0);
  DeterministicSpec s;
  s.matrix = SmallMatrix::identity(3);
  s.matrix(0, 0) = 0.2;
  const CoefficientField a = deterministic_field(g, s);
  EXPECT_NEAR(validate_ellipticity(a).min_eigenvalue, 0.2, 1e-15);
  EXPECT_NEAR(a.lambda, 0.2, 1e-15);
}

TEST(Deterministic, LaminateTwoValuesHalfCells) {
  const TorusGrid g(3, 16, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::Laminate;
  const CoefficientField a = deterministic_field(g, s);
  std::size_t ones = 0, halves = 0;
  for (std::size_t c = 0; c < g.size(); ++c) {
    const double v = a.a(0, 0)[c];
    if (v == 1.0) ++ones;
    else if (v == 0.5) ++halves;
    ASSERT_EQ(a.a(1, 1)[c], 1.0);
  }
  EXPECT_EQ(ones, g.size() / 2);
  EXPECT_EQ(halves, g.size() / 2);
  EXPECT_EQ(a.eps_scale, 1.0);
}

TEST(Deterministic, CheckerboardEqualArea) {
  const TorusGrid g(2, 64, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::Checkerboard;
  s.value1 = 1.0;
  s.value2 = 4.0;
  s.period = 0.125;
  const CoefficientField a = deterministic_field(g, s);
  std::size_t ones = 0;
  for (std::size_t c = 0; c < g.size(); ++c) ones += a.a(0, 0)[c] == 1.0;
  EXPECT_EQ(ones, g.size() / 2);
  EXPECT_EQ(a.upper, 4.0);
  EXPECT_EQ(validate_ellipticity(a).violations, 0u);
}

TEST(Deterministic, BadPeriodRejected) {
  const TorusGrid g(2, 16, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::Laminate;
  s.period = 0.3;
  try {
    deterministic_field(g, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadPeriod);
  }
  s.period = 1.0 / 16.0;  // half period below one cell
  EXPECT_THROW(deterministic_field(g, s), Error);
}

TEST(Deterministic, SkewProfileIsNonsymmetric) {
  const TorusGrid g(2, 16, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::SkewProfile;
  const CoefficientField a = deterministic_field(g, s);
  EXPECT_FALSE(a.symmetric);
  EXPECT_EQ(validate_ellipticity(a).violations, 0u);
  EXPECT_GT(validate_ellipticity(a).max_asymmetry, 0.0);
}

TEST(Mollify, PreservesBoundsAndMean) {
  const TorusGrid g(2, 32, 1.0);
  DeterministicSpec s;
  s.kind = DeterministicKind::Checkerboard;
  s.value2 = 4.0;
  s.period = 0.25;
  const CoefficientField a = deterministic_field(g, s);
  const CoefficientField m = mollify(a, 2.0 * g.spacing());
  EXPECT_TRUE(m.filtered);
  EXPECT_EQ(validate_ellipticity(m).violations, 0u);
  EXPECT_NEAR(mean(m.a(0, 0)), mean(a.a(0, 0)), 1e-12);
  EXPECT_LT(l2_norm(m.a(0, 0) - a.a(0, 0)), l2_norm(a.a(0, 0)));
}
