#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "homoglab/coefficient.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/linalg.hpp"

namespace homoglab {

enum class KrylovMethod { Auto, Cg, BiCgStab };

struct SolveSpec {
  double rel_tol = 1e-9;
  int max_iter = 2000;
  /// Reference medium A0; defaults to the torus average of sym(a).
  std::optional<SmallMatrix> preconditioner;
  /// Auto picks CG for symmetric and BiCGStab for nonsymmetric coefficients.
  KrylovMethod method = KrylovMethod::Auto;

  void validate() const;
};

struct SolveStats {
  int iterations = 0;
  /// Relative residual in the A0^{-1} (H^{-1}-type) norm, recomputed from the final iterate.
  double rel_residual = 0.0;
  /// Relative residual in L2, recomputed from the final iterate.
  double rel_residual_l2 = 0.0;
  double seconds = 0.0;
  int restarts = 0;
};

/// NoConvergence carrying the stats of the failed attempt.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, const SolveStats& stats)
      : Error(Errc::NoConvergence, what), stats_(stats) {}
  const SolveStats& stats() const noexcept { return stats_; }

 private:
  SolveStats stats_;
};

/// Spectrum of the functional div g.
Spectrum divergence_rhs(const VectorField& g);
/// Spectrum of a scalar right-hand side with its null-mode content removed.
/// `removed` receives the L2 norm of the removed part (mean and Nyquist corners).
Spectrum scalar_rhs(const ScalarField& f, double* removed = nullptr);

/// Solves -div(A grad u) = rhs mode by mode; u vanishes on the null modes.
Spectrum fft_const_solve(const SmallMatrix& A, const Spectrum& rhs);
ScalarField fft_const_solve(const SmallMatrix& A, const ScalarField& rhs, double* removed = nullptr);

struct KrylovResult {
  ScalarField u;
  Spectrum u_hat;
  SolveStats stats;
};

/// Applies -div(a grad u) in Fourier space.
Spectrum apply_operator(const CoefficientField& a, const Spectrum& u_hat);

/// Solves -div(a grad u) = rhs with FFT-preconditioned CG or BiCGStab.  Both the
/// L2 and the A0^{-1} relative residuals reach spec.rel_tol on success.
KrylovResult krylov_solve_divform(const CoefficientField& a, const Spectrum& rhs, const SolveSpec& spec);

/// Solves the (2d+1)-point Dirichlet Laplacian on the masked cells, zero outside, by CG.
ScalarField dirichlet_mask_cg(const std::vector<std::uint8_t>& mask, const ScalarField& rhs,
                              const SolveSpec& spec, SolveStats* stats = nullptr);

}  // namespace homoglab
