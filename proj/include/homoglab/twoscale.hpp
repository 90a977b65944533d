#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "homoglab/cellsolve.hpp"
#include "homoglab/coefficient.hpp"
#include "homoglab/correctors.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/linalg.hpp"
#include "homoglab/norms.hpp"

namespace homoglab {

/// Geometry of the macroscopic problem; zero radii select the defaults L/8 and L/4.
struct MacroSpec {
  double f_radius = 0.0;
  double ball_radius = 0.0;
  /// Centre of both the source and the ball; defaults to the torus centre.
  std::optional<std::array<double, 3>> center;

  double source_radius(const TorusGrid& grid) const { return f_radius > 0.0 ? f_radius : grid.length() / 8.0; }
  double ball(const TorusGrid& grid) const { return ball_radius > 0.0 ? ball_radius : grid.length() / 4.0; }
  std::array<double, 3> centre(const TorusGrid& grid) const { return center ? *center : torus_center(grid); }
  void validate(const TorusGrid& grid) const;
};

/// Smooth compactly supported bump exp(1 - 1/(1 - r^2/R^2)), projected off the null modes
/// so the torus problem is solvable.  `removed` receives the L2 norm of the removed part.
ScalarField bump_source(const TorusGrid& grid, const std::array<double, 3>& center, double radius,
                        double* removed = nullptr);

/// -div(a_hom grad u_hom) = f by exact mode division.
ScalarField solve_uhom(const SmallMatrix& a_hom, const ScalarField& f);
/// -div(a_hom grad u1) = sum_ijk a1_ijk d_i d_j d_k u_hom.
ScalarField solve_u1hom(const SmallMatrix& a_hom, const SymTensor3& a1, const ScalarField& u_hom);

struct MacroscopicSolution {
  SmallMatrix a_hom;
  SymTensor3 a1;
  double eps = 0.0;
  ScalarField f;
  double f_removed = 0.0;
  ScalarField u_hom, u1_hom;
  VectorField grad, grad_u1;
  /// Second derivatives, full d x d layout (i*d + j).
  std::vector<ScalarField> hess, hess_u1;
  /// Third derivatives d_i d_j d_k u_hom, symmetric storage.
  SymField3 third;
  /// Relative spectral residuals of the two constant-coefficient equations.
  double residual_uhom = 0.0;
  double residual_u1 = 0.0;

  explicit MacroscopicSolution(const TorusGrid& grid)
      : f(grid), u_hom(grid), u1_hom(grid), grad(grid), grad_u1(grid), third(grid) {}
  const ScalarField& d2(int i, int j) const { return hess[static_cast<std::size_t>(i * a_hom.d + j)]; }
  const ScalarField& d2_u1(int i, int j) const { return hess_u1[static_cast<std::size_t>(i * a_hom.d + j)]; }
};

/// Solves both macroscopic equations and caches all derivatives.  f must already be projected
/// off the null modes (as produced by bump_source).
MacroscopicSolution make_macroscopic(const SmallMatrix& a_hom, const SymTensor3& a1, double eps, ScalarField f,
                                     double f_removed = 0.0);

struct ExpansionBundle {
  int order = 0;
  ScalarField u;
  VectorField grad;
  explicit ExpansionBundle(const TorusGrid& grid) : u(grid), grad(grid) {}
};

/// order 0: u_hom; order 1: u_hom + sum phi_i d_i u_hom;
/// order 2: v + sum phi_i d_i v + sum psi_ij d_ij u_hom with v = u_hom + eps u1_hom when with_u1.
ExpansionBundle assemble_expansion(int order, const MacroscopicSolution& macro, const FirstOrderCorrectors& foc,
                                   const SecondOrderCorrectors* soc, bool with_u1);

/// Residuals of the two-scale identities, each ||lhs - rhs||_{H^-1 torus} / ||f||_{H^-1 torus}.
struct IdentityResiduals {
  /// -div(a grad w1) = f - div(sum (phi_i a - sigma_i) grad d_i u_hom).
  double first = 0.0;
  /// The second-order expansion before the Psi rewrite (expanded derivative form).
  double second_expanded = 0.0;
  /// -div(a grad w2) = f - div(sum (psi_ij a - Psi_ij) grad d_ij u_hom), symmetric form.
  double second = 0.0;
  /// Same right-hand side with the Psi term dropped.
  double second_without_Psi = 0.0;
  /// Diagnostic: the symmetric form with Psi built from the unsymmetrized T_ij. - avg, which is
  /// divergence-free in its last index, in place of the gauged potential of q1.
  double second_divfree = 0.0;
  /// Nonsymmetric form: w2 with eps u1_hom, extra eps (a phi_i - sigma_i) grad d_i u1_hom term.
  double nonsymmetric = 0.0;
  /// Magnitude of eps a1 : D^3 u_hom relative to ||f||, the term separating the two forms.
  double a1_term = 0.0;
  double f_norm = 0.0;
};

IdentityResiduals residual_identity_check(const CoefficientField& a, const MacroscopicSolution& macro,
                                          const FirstOrderCorrectors& foc, const SecondOrderCorrectors& soc);

struct RefinementStudy {
  std::vector<int> cells;
  std::vector<IdentityResiduals> rows;
  /// Least-squares slopes of -log2(residual) against log2(n).
  double slope_first = 0.0;
  double slope_second_expanded = 0.0;
  double slope_second = 0.0;
  double slope_nonsymmetric = 0.0;
  double slope_second_divfree = 0.0;
  /// second_without_Psi / second at the finest grid.
  double Psi_ablation_ratio = 0.0;
  /// second_without_Psi / second_divfree at the finest grid.
  double divfree_ablation_ratio = 0.0;
};

/// Runs the full corrector pipeline and residual_identity_check on each grid.
RefinementStudy identity_refinement(const std::function<CoefficientField(const TorusGrid&)>& make_field, int d,
                                    double length, const std::vector<int>& cells, const SolveSpec& spec,
                                    const MacroSpec& macro_spec = {});

struct IbpResult {
  /// max_ijk |avg(a grad psi_ij . e_k) + avg(a grad psi_ij . grad phi~_k)|, phi~ the corrector used.
  double max_gap = 0.0;
  /// max_gap divided by the RMS of a grad psi.
  double relative = 0.0;
  /// True when phi~ is the adjoint corrector (nonsymmetric a).
  bool adjoint = false;
  /// The same expression with the primal corrector phi, for nonsymmetric fields a diagnostic only.
  double primal_relative = 0.0;
};

/// Torus integration by parts in expectation.  For nonsymmetric a the identity holds with the
/// corrector of a^T, which must then be supplied.
IbpResult ibp_expectation_check(const CoefficientField& a, const FirstOrderCorrectors& foc,
                                const SecondOrderCorrectors& soc, const FirstOrderCorrectors* adjoint = nullptr);

struct ErrorReport {
  /// ||u - u_hom||_{L2(B)}
  double err_L2_ball = 0.0;
  /// Theorem measure: ||u - u_hom||_{H^-1(B)} (symmetric) or ||u - u_hom - eps u1||_{H^-1(B)}.
  double err_Hm1_ball = 0.0;
  /// Both H^-1(B) errors regardless of symmetry.
  double err_Hm1_ball_first = 0.0;
  double err_Hm1_ball_u1 = 0.0;
  /// ||grad(u - expansion_2)||_{L2(torus)}
  double err_H1_twoscale2 = 0.0;
  /// ||u - expansion_1||_{L2(B)}
  double err_L2_exp1 = 0.0;
  /// ||u||_{L2(B)}, the natural scale.
  double u_L2_ball = 0.0;
  /// L2 norm of the flux fields on the right of the second-order identity, and 1/lambda times it.
  double energy_rhs = 0.0;
  double energy_bound = 0.0;
  double f_removed = 0.0;
  SolveStats stats;

  bool finite() const;
};

/// Solves -div(a grad u) = f and measures all errors on the ball of the macro spec.
ErrorReport error_report(const CoefficientField& a, const MacroscopicSolution& macro, const FirstOrderCorrectors& foc,
                         const SecondOrderCorrectors& soc, const SolveSpec& spec, const MacroSpec& macro_spec = {});

}  // namespace homoglab
