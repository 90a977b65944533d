#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homoglab/coefficient.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/linalg.hpp"

namespace homoglab {

enum class CovarianceKind { GaussianBump, Exponential };

struct CovarianceSpec {
  CovarianceKind kind = CovarianceKind::GaussianBump;
  /// Correlation length ell (plays the role of eps).
  double ell = 0.1;
  /// C(0).
  double variance = 1.0;

  /// Requires 2h < ell < L/4 and variance > 0.
  void validate(const TorusGrid& grid) const;
  /// Whole-space kernel C(r).
  double kernel(double r) const;
  /// Whole-space spectral density S(|xi|^2) = int C(x) exp(-i xi.x) dx in dimension d.
  double density(double xi_sq, int d) const;
};

/// Stream key for the counter-based generator.
struct SeedKey {
  std::uint64_t master = 0;
  std::uint64_t realization = 0;
  std::uint64_t field = 0;
};

/// One stationary centered Gaussian field with covariance cov (lattice-sampled
/// density): real white noise from the keyed stream, filtered in Fourier space.
ScalarField sample_gaussian_field(const TorusGrid& grid, const CovarianceSpec& cov, const SeedKey& key);
/// m independent fields with field indices 0..m-1.
std::vector<ScalarField> sample_gaussian_fields(const TorusGrid& grid, const CovarianceSpec& cov,
                                                std::uint64_t master, std::uint64_t realization, int m);

struct LipschitzMapSpec {
  double lambda = 0.2;
  bool symmetric = true;
  /// Amplitude kappa of the skew part, in [0, (1 - lambda)/2].
  double skew_amplitude = 0.0;
  /// Correlation rho in [0, 1] between g2 and the shifted g1.
  double skew_correlation = 1.0;
  /// Shift of g1 along e1 used to build g2, in units of ell; rounded to whole cells.
  double skew_shift = 1.0;

  int arity() const { return symmetric ? 1 : 2; }
  void validate() const;
  /// s(t) = (1 + tanh t) / 2
  static double squash(double t);
  /// Matrix value of the map at the Gaussian inputs (g1, g2).
  SmallMatrix apply(int d, double g1, double g2) const;
};

/// Symmetric: a = [lambda + (1 - lambda) s(g1)] I.
/// Nonsymmetric: a = [lambda + (1 - lambda - kappa) s(g1)] I + kappa s(g2) S with
/// S = e1 (x) e2 - e2 (x) e1, which keeps |a| <= 1 exactly.  A final rescale
/// restores the bounds in any cell where roundoff breaks them.
CoefficientField build_coefficient_field(const std::vector<ScalarField>& gfields, const LipschitzMapSpec& map);

/// Nonsymmetric second input: g2 = rho T g1 + sqrt(1 - rho^2) G2 with T a shift by whole cells along e1.
ScalarField correlated_skew_input(const ScalarField& g1, const ScalarField& g2, double rho, int shift_cells);

/// Full pipeline: sample, combine, map.  eps_scale is set to ell.
CoefficientField sample_coefficient_field(const TorusGrid& grid, const CovarianceSpec& cov,
                                          const LipschitzMapSpec& map, std::uint64_t master,
                                          std::uint64_t realization);

enum class DeterministicKind { Constant, Laminate, Checkerboard, SkewProfile, TrigPolynomial };

struct DeterministicSpec {
  DeterministicKind kind = DeterministicKind::Constant;
  /// Constant value.
  SmallMatrix matrix = SmallMatrix::identity(3);
  /// Laminate normal axis.
  int axis = 0;
  /// Phase values: laminate alpha1 on the first half period and alpha2 on the second;
  /// checkerboard a1 on even and a2 on odd blocks.
  double value1 = 1.0;
  double value2 = 0.5;
  /// Period; 0 means L.
  double period = 0.0;
  /// SkewProfile: alpha(x1) = alpha_mean + alpha_amp cos(2 pi x1/p),
  /// beta(x1) = beta_mean + beta_amp cos(2 pi x1/p + 1).
  double alpha_mean = 0.6;
  double alpha_amp = 0.2;
  double beta_mean = 0.1;
  double beta_amp = 0.1;
};

/// Exact piecewise or smooth field sampled at cell centers; eps_scale = period.
CoefficientField deterministic_field(const TorusGrid& grid, const DeterministicSpec& spec);

struct EllipticityReport {
  double min_eigenvalue = 0.0;
  double max_norm = 0.0;
  std::size_t violations = 0;
  double max_asymmetry = 0.0;
};

/// Per-cell closed-form check of sym(a) >= lambda - 1e-10 and |a| <= upper + 1e-10.
EllipticityReport validate_ellipticity(const CoefficientField& a);

/// One separable Gaussian smoothing pass of width `width`; the result stays a convex
/// combination of cell values, so both ellipticity bounds are preserved.
CoefficientField mollify(const CoefficientField& a, double width);

std::string to_string(CovarianceKind kind);
std::string to_string(DeterministicKind kind);

}  // namespace homoglab
