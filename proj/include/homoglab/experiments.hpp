#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "homoglab/cellsolve.hpp"
#include "homoglab/correctors.hpp"
#include "homoglab/ensemble.hpp"
#include "homoglab/twoscale.hpp"

namespace homoglab {

struct ExperimentConfig {
  int d = 3;
  int n = 64;
  double L = 1.0;
  CovarianceKind covariance = CovarianceKind::GaussianBump;
  double variance = 1.0;
  LipschitzMapSpec map;
  /// When set, every realization uses this field instead of sampling (seeds are then labels only).
  std::optional<DeterministicSpec> deterministic;
  /// Correlation lengths, absolute units.
  std::vector<double> ells;
  int seeds = 8;
  std::uint64_t first_seed = 0;
  std::uint64_t master_seed = 1;
  MacroSpec macro;
  SolveSpec solver;
  PsiMode psi_mode = PsiMode::Symmetrized;
  /// Scaling studies reject ell < scale_guard * h.
  double scale_guard = 6.0;
  double rstar_delta = 1.0 / 16.0;

  TorusGrid grid() const { return TorusGrid(d, n, L); }
  /// Grid, macro geometry, solver and, for sampled fields, every ell in [4h, L/8].
  void validate() const;
  /// validate() plus ell >= scale_guard * h and at least two seeds.
  void validate_scaling() const;
  CovarianceSpec covariance_for(double ell) const { return CovarianceSpec{covariance, ell, variance}; }
  /// Coefficient field of realization `seed` at correlation length ell.
  CoefficientField field(double ell, std::uint64_t seed) const;
};

struct RealizationRow {
  int d = 0;
  int n = 0;
  double L = 0.0;
  double ell = 0.0;
  std::uint64_t seed = 0;
  SmallMatrix a_hom;
  SymTensor3 a1;
  double rstar = 0.0;
  ErrorReport errors;
  bool failed = false;
  std::string message;
  SolveStats corrector_stats;
  double seconds = 0.0;
};

/// Everything a realization computes, for inspection.
struct RealizationPipeline {
  CoefficientField a;
  FirstOrderCorrectors foc;
  SecondOrderCorrectors soc;
  MacroscopicSolution macro;
  ErrorReport errors;
  RStarDiagnostic rstar;
};

/// sample -> correctors -> macro -> micro -> errors; throws on any stage error.
RealizationPipeline run_pipeline(const ExperimentConfig& cfg, double ell, std::uint64_t seed);
/// Same pipeline; stage errors are caught and flagged in the row.
RealizationRow run_realization(const ExperimentConfig& cfg, double ell, std::uint64_t seed);

struct FitPoint {
  double x = 0.0;
  double e = 0.0;
  double s = 0.0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  int points = 0;
};

/// Weighted least squares of log e on log x, weights (e/s)^2 (unit weights if any s is zero).
/// Exponent and mantissa of each value are split before taking logs, so scaling all e by a
/// power of two leaves the slope bit-identical.  Throws DegenerateFit on fewer than 3 points,
/// nonpositive data, or all x equal.
FitResult fit_exponent(const std::vector<FitPoint>& points);

struct PointStats {
  double ell = 0.0;
  int count = 0;
  double mean_Hm1 = 0.0, se_Hm1 = 0.0;
  double mean_H1 = 0.0, se_H1 = 0.0;
  double mean_L2exp1 = 0.0, se_L2exp1 = 0.0;
  double mean_L2 = 0.0, se_L2 = 0.0;
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<RealizationRow> rows;
  std::vector<PointStats> points;
  int excluded = 0;
  std::optional<FitResult> fit_Hm1, fit_H1, fit_L2exp1;
  /// Empty for d >= 3; otherwise a note that the run lies outside the theorem hypotheses.
  std::string label;
};

/// Deterministic queue over (ell, seed); each realization is independent.
SweepResult sweep(const ExperimentConfig& cfg, int threads = 1);
/// Rows with injected errors c * (ell/L)^exponent and no solves (plumbing check).
SweepResult synthetic_sweep(const ExperimentConfig& cfg, double exponent, double c = 1.0);
/// Per-ell statistics and fits in eps = ell/L; flagged rows excluded.
void summarize(SweepResult& result);

/// Target H^-1 exponent d/2 for d = 3, 2 for d >= 4 (log factor ignored); NaN outside the theorem.
double theorem_target(int d);

std::string sweep_csv(const SweepResult& result);
std::string summary_json(const SweepResult& result);
void write_sweep(const std::string& dir, const SweepResult& result);

struct A1Study {
  int seeds = 0;
  std::vector<double> mean, stderr_, z;
  double max_abs_z = 0.0;
  /// |mean| over all components (l2).
  double mean_norm = 0.0;
  bool pass = false;
};

/// a1 over cfg.seeds >= 16 realizations at ell = cfg.ells.front(); needs a symmetric ensemble.
A1Study symmetric_a1_study(const ExperimentConfig& cfg, int threads = 1);

struct GrowthStudyResult {
  std::vector<double> radii;
  /// Seed means of the normalized ball oscillations, per radius.
  std::vector<double> psi_osc, Psi_osc, phi_hm1;
  std::vector<double> psi_se, Psi_se, phi_se;
  /// (psi, Psi) jointly: square root of the summed squared oscillations.
  std::vector<double> combined_osc, combined_se;
  FitResult psi_fit, Psi_fit, combined_fit, phi_fit;
  int seeds = 0;
};

/// Dyadic radii L/4 * 2^(m - octaves), m = 0..octaves, balls at the torus centre:
/// (mean_{B_r} |psi - avg_{B_r} psi|^2)^{1/2}, same for Psi, and r^{-d/2} ||phi||_{H^-1(B_r)}.
GrowthStudyResult corrector_growth_study(const ExperimentConfig& cfg, int octaves = 3, int threads = 1);

struct RStarTail {
  std::vector<double> rstar;
  std::vector<double> radii;
  /// Empirical P(r* > r), and its log (NaN where zero).
  std::vector<double> survival, log_survival;
  bool nonincreasing = false;
  bool concave = false;
  /// P(r* > L/4).
  double tail_mass = 0.0;
};

/// Needs at least 64 seeds.
RStarTail rstar_tail_study(const ExperimentConfig& cfg, int threads = 1);

}  // namespace homoglab
