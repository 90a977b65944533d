#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "homoglab/cellsolve.hpp"
#include "homoglab/coefficient.hpp"
#include "homoglab/grid.hpp"

namespace homoglab {

struct FirstOrderCorrectors {
  /// phi[i], mean zero.
  std::vector<ScalarField> phi;
  /// q[i] = a (e_i + grad phi_i).
  std::vector<VectorField> q;
  /// a_hom(j, i) = average of q[i][j].
  SmallMatrix a_hom;
  /// sigma_ijk, skew in (j, k).
  SkewField3 sigma;
  std::vector<SolveStats> stats;
  double rel_tol = 0.0;

  explicit FirstOrderCorrectors(const TorusGrid& grid) : sigma(grid) {}
  int dim() const noexcept { return sigma.dim(); }
};

/// d Krylov solves for phi, exact averaging for a_hom, FFT Poisson solves for sigma:
/// -Lap sigma_ijk = d_j q_ik - d_k q_ij.
FirstOrderCorrectors solve_first_order(const CoefficientField& a, const SolveSpec& spec, int threads = 1);

/// sigma_ijk from the fluxes in the Poisson gauge.
SkewField3 sigma_from_flux(const std::vector<VectorField>& q);

struct SigmaResidual {
  /// L2 norm of div sigma_ij - (q_ij - a_hom e_i . e_j) over the resolved modes, index i*d + j.
  std::vector<double> residual;
  /// L2 norm of the Nyquist-corner content of q_ij, which no spectral divergence can produce.
  std::vector<double> unresolved;
  /// ||q_i||_L2 per i, the natural scale.
  std::vector<double> flux_norm;
  double max_relative() const;
};

SigmaResidual check_sigma_divergence(const CoefficientField& a, const FirstOrderCorrectors& foc);

enum class PsiMode {
  /// All d^2 solves.
  Full,
  /// Only (psi_ij + psi_ji)/2, d(d+1)/2 solves; the only part that enters a1, q1 and the expansion.
  Symmetrized,
};

struct SecondOrderCorrectors {
  /// psi[i*d + j], mean zero.
  std::vector<ScalarField> psi;
  PsiMode mode = PsiMode::Full;
  SymField3 q1;
  SymTensor3 a1;
  /// Psi_ijkl, skew in (k, l); absent in streaming mode.
  std::optional<SkewField4> Psi;
  double eps_scale = 0.0;
  std::vector<SolveStats> stats;

  explicit SecondOrderCorrectors(const TorusGrid& grid) : q1(grid), a1(grid.dim()) {}
  const ScalarField& psi_at(int i, int j) const { return psi[static_cast<std::size_t>(i * q1.dim() + j)]; }
};

/// Vector field (phi_i a - sigma_i) e_j: component k is phi_i a_kj - sigma_ikj.
VectorField psi_source(const CoefficientField& a, const FirstOrderCorrectors& foc, int i, int j);

/// -div(a grad psi_ij) = div((phi_i a - sigma_i) e_j).
std::vector<ScalarField> solve_psi(const CoefficientField& a, const FirstOrderCorrectors& foc, const SolveSpec& spec,
                                   PsiMode mode, std::vector<SolveStats>* stats = nullptr, int threads = 1);

struct Q1A1 {
  SymField3 q1;
  SymTensor3 a1;
};

/// T_ijk = (a grad psi_ij)_k + phi_i a_kj - sigma_ikj;
/// a1 = (1/eps) sym avg T, q1 = sym T - eps a1.
Q1A1 compute_q1_a1(const CoefficientField& a, const FirstOrderCorrectors& foc, const std::vector<ScalarField>& psi,
                   double eps_scale);

/// sym_ijk of a full d^3 tensor (index (i*d + j)*d + k).  A multiset whose orderings
/// already agree bitwise keeps that value, so the projection is exactly idempotent.
SymTensor3 symmetrize(const std::vector<double>& full, int d);
/// Expanded d^3 layout of a symmetric tensor.
std::vector<double> expand(const SymTensor3& t);

/// Psi_ijkl with -Lap Psi_ijkl = d_k q1_ijl - d_l q1_ijk.
SkewField4 solve_Psi(const SymField3& q1);
/// Stored components (i, j, k<l) for one pair (i, j) only.
std::vector<ScalarField> solve_Psi_pair(const SymField3& q1, int i, int j);

/// Runs solve_psi, compute_q1_a1 and (unless streaming) solve_Psi.
SecondOrderCorrectors solve_second_order(const CoefficientField& a, const FirstOrderCorrectors& foc,
                                         const SolveSpec& spec, PsiMode mode, bool materialize_Psi = true,
                                         int threads = 1);

struct PsiDiagnostics {
  /// max over (i,j,k,l) of ||-Lap Psi_ijkl - (d_k q1_ijl - d_l q1_ijk)|| / ||q1||.
  double gauge_residual = 0.0;
  /// ||sum_l d_l Psi_ijkl - q1_ijk|| / ||q1||, maximized over (i,j,k): the pointwise
  /// divergence defect of the gauged potential.
  double divergence_defect = 0.0;
  /// ||div_k q1_ij|| in H^{-1} relative to ||q1||, the source of the defect.
  double q1_divergence = 0.0;
  double q1_norm = 0.0;
};

PsiDiagnostics check_Psi(const SymField3& q1, const SkewField4& Psi);

/// Weak residual of the psi equation, |int (a grad psi_ij + G_ij).grad t| divided by
/// ||a grad psi_ij + G_ij|| ||grad t||, maximized over `tests` random smooth t; index i*d + j.
std::vector<double> psi_residual_functional(const CoefficientField& a, const FirstOrderCorrectors& foc,
                                            const std::vector<ScalarField>& psi, int tests, std::uint64_t seed);

struct RStarDiagnostic {
  double delta = 0.0;
  double r_star = 0.0;
  bool capped = false;
  std::vector<double> radii;
  std::vector<double> oscillation;
};

/// Smallest dyadic radius h 2^m such that (1/R^2) mean_{B_R} |(phi, sigma) - avg|^2 <= delta
/// for all dyadic R >= r up to L/4, balls centered at the torus center; L/2 if none.
RStarDiagnostic estimate_rstar(const FirstOrderCorrectors& foc, double delta = 1.0 / 16.0);

/// HGF1 files plus manifest.json describing the bundle.
void write_corrector_bundle(const std::string& dir, const CoefficientField& a, const FirstOrderCorrectors& foc,
                            const SecondOrderCorrectors* soc, const std::string& extra_manifest_json = "{}");

}  // namespace homoglab
