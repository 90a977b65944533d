#include "homoglab/twoscale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "homoglab/error.hpp"
#include "homoglab/reduce.hpp"
#include "homoglab/spectral.hpp"

namespace homoglab {
namespace {

// ||s||_{H^-1 torus} with the true symbol |2 pi k / L|^2.
double hminus1_norm(const Spectral& sp, const Spectrum& s) {
  const auto ksq = sp.k_sq();
  const auto w = sp.weight();
  CompensatedSum acc;
  for (std::size_t m = 0; m < s.size(); ++m)
    if (ksq[m] > 0.0) acc.add(w[m] * std::norm(s[m]) / ksq[m]);
  return std::sqrt(acc.value() * sp.grid().volume());
}

double spectral_l2(const Spectral& sp, const Spectrum& s) { return std::sqrt(std::max(0.0, sp.norm_sq(s))); }

// Symbol sum_ij A_ij xi_i xi_j per mode.
std::vector<double> operator_symbol(const Spectral& sp, const SmallMatrix& A) {
  const int d = sp.grid().dim();
  std::vector<double> out(sp.grid().spectral_size(), 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const auto xi = sp.xi(i);
      const auto xj = sp.xi(j);
      for (std::size_t m = 0; m < out.size(); ++m) out[m] += A(i, j) * xi[m] * xj[m];
    }
  return out;
}

// Relative residual of -div(A grad u) = rhs, evaluated spectrally.
double const_residual(const Spectral& sp, const SmallMatrix& A, const Spectrum& u, const Spectrum& rhs) {
  const std::vector<double> sym = operator_symbol(sp, A);
  Spectrum r(sp.grid());
  for (std::size_t m = 0; m < r.size(); ++m) r[m] = sym[m] * u[m] - rhs[m];
  const double scale = spectral_l2(sp, rhs);
  return scale > 0.0 ? spectral_l2(sp, r) / scale : spectral_l2(sp, r);
}

// sum_ijk a1_ijk d_i d_j d_k u, from the spectrum of u.
Spectrum a1_contraction(const Spectral& sp, const SymTensor3& a1, const Spectrum& u) {
  Spectrum out(sp.grid());
  for (std::size_t s = 0; s < a1.stored_count(); ++s) {
    const double c = a1.stored(s) * a1.multiplicity(s);
    if (c == 0.0) continue;
    const std::array<int, 3> t = a1.triple(s);
    out.add_scaled(c, sp.derivative(u, std::span<const int>(t.data(), 3)));
  }
  return out;
}

// (a v)_k for a vector of pointwise factors v.
void add_matvec(VectorField& out, const CoefficientField& a, const std::vector<const ScalarField*>& v, double factor,
                const ScalarField* weight = nullptr) {
  const int d = a.dim();
  const std::size_t n = a.grid().size();
  for (int k = 0; k < d; ++k) {
    double* o = out[k].data();
    for (int m = 0; m < d; ++m) {
      const double* akm = a.a(k, m).data();
      const double* vm = v[static_cast<std::size_t>(m)]->data();
      if (weight) {
        const double* w = weight->data();
        for (std::size_t c = 0; c < n; ++c) o[c] += factor * w[c] * akm[c] * vm[c];
      } else {
        for (std::size_t c = 0; c < n; ++c) o[c] += factor * akm[c] * vm[c];
      }
    }
  }
}

// Columns of the third-derivative cache as pointers: third(i, j, .).
std::vector<const ScalarField*> third_column(const MacroscopicSolution& macro, int i, int j) {
  std::vector<const ScalarField*> col;
  for (int m = 0; m < macro.a_hom.d; ++m) col.push_back(&macro.third(i, j, m));
  return col;
}

// Stored Psi components of pair (i, j), materialized or streamed.
std::vector<ScalarField> Psi_pair(const SecondOrderCorrectors& soc, int i, int j) {
  if (!soc.Psi) return solve_Psi_pair(soc.q1, i, j);
  const int d = soc.q1.dim();
  std::vector<ScalarField> out;
  for (int k = 0; k < d; ++k)
    for (int l = k + 1; l < d; ++l) out.push_back(soc.Psi->stored(i, j, k, l));
  return out;
}

// sum_ij Psi_ij grad d_ij u, component k = sum_ijl Psi_ijkl d_l d_i d_j u.
VectorField Psi_flux(const MacroscopicSolution& macro, const SecondOrderCorrectors& soc) {
  const TorusGrid& grid = macro.u_hom.grid();
  const int d = grid.dim();
  VectorField out(grid);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      // Psi_ij = Psi_ji and d_ij u is symmetric.
      const double w = i == j ? 1.0 : 2.0;
      const std::vector<ScalarField> pair = Psi_pair(soc, i, j);
      std::size_t p = 0;
      for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l, ++p) {
          out[k].add_product(w, pair[p], macro.third(i, j, l));
          out[l].add_product(-w, pair[p], macro.third(i, j, k));
        }
    }
  return out;
}

// sum_ij psi_ij a grad d_ij u.
VectorField psi_flux(const CoefficientField& a, const MacroscopicSolution& macro, const SecondOrderCorrectors& soc) {
  const int d = a.dim();
  VectorField out(a.grid());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) add_matvec(out, a, third_column(macro, i, j), 1.0, &soc.psi_at(i, j));
  return out;
}

// sum_ij (phi_i a - sigma_i) e_j times g_ij, the corrector flux of the first-order identity.
VectorField corrector_flux(const CoefficientField& a, const FirstOrderCorrectors& foc,
                           const std::vector<ScalarField>& g) {
  const int d = a.dim();
  VectorField out(a.grid());
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const VectorField src = psi_source(a, foc, i, j);
      for (int k = 0; k < d; ++k) out[k].add_product(1.0, src[k], g[static_cast<std::size_t>(i * d + j)]);
    }
  return out;
}

// sum_ijk T_ijk d_ijk u with T_ijk = (a grad psi_ij)_k + (phi_i a - sigma_i)_kj.
ScalarField T_contraction(const CoefficientField& a, const FirstOrderCorrectors& foc, const SecondOrderCorrectors& soc,
                          const MacroscopicSolution& macro) {
  const TorusGrid& grid = a.grid();
  const int d = a.dim();
  const auto sp = Spectral::of(grid);
  ScalarField out(grid);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const VectorField g = sp->gradient(soc.psi_at(i, j));
      VectorField t = psi_source(a, foc, i, j);
      std::vector<const ScalarField*> gp;
      for (int m = 0; m < d; ++m) gp.push_back(&g[m]);
      add_matvec(t, a, gp, 1.0);
      for (int k = 0; k < d; ++k) out.add_product(1.0, t[k], macro.third(i, j, k));
    }
  return out;
}

// sum_ij Psi~_ij grad d_ij u with -Lap Psi~_ijkl = d_k t_ijl - d_l t_ijk, t_ij = T_ij - avg T_ij.
VectorField divfree_Psi_flux(const CoefficientField& a, const FirstOrderCorrectors& foc,
                             const SecondOrderCorrectors& soc, const MacroscopicSolution& macro) {
  const TorusGrid& grid = a.grid();
  const int d = a.dim();
  const auto sp = Spectral::of(grid);
  const auto xsq = sp->xi_sq();
  VectorField out(grid);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const VectorField g = sp->gradient(soc.psi_at(i, j));
      VectorField t = psi_source(a, foc, i, j);
      std::vector<const ScalarField*> gp;
      for (int m = 0; m < d; ++m) gp.push_back(&g[m]);
      add_matvec(t, a, gp, 1.0);
      std::vector<Spectrum> th;
      for (int m = 0; m < d; ++m) th.push_back(sp->forward(t[m]));
      for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l) {
          Spectrum s = sp->derivative(th[static_cast<std::size_t>(l)], k);
          s -= sp->derivative(th[static_cast<std::size_t>(k)], l);
          for (std::size_t m = 0; m < s.size(); ++m) s[m] = xsq[m] > 0.0 ? s[m] / xsq[m] : Complex(0.0);
          const ScalarField P = sp->inverse(s);
          out[k].add_product(1.0, P, macro.third(i, j, l));
          out[l].add_product(-1.0, P, macro.third(i, j, k));
        }
    }
  return out;
}

ScalarField weighted_sum(const ScalarField& base, const std::vector<ScalarField>& phi, const VectorField& grad) {
  ScalarField out = base;
  for (std::size_t i = 0; i < phi.size(); ++i) out.add_product(1.0, phi[i], grad[static_cast<int>(i)]);
  return out;
}

}  // namespace

void MacroSpec::validate(const TorusGrid& grid) const {
  const double R = source_radius(grid);
  const double B = ball(grid);
  if (!(R > 0.0) || !(B > 0.0) || !std::isfinite(R) || !std::isfinite(B))
    throw Error(Errc::InvalidArgument, "macro radii must be positive");
  const std::array<double, 3> c = centre(grid);
  for (int a = 0; a < grid.dim(); ++a) {
    if (c[a] - R < 0.0 || c[a] + R > grid.length())
      throw Error(Errc::InvalidArgument, "source support must fit inside the torus");
  }
}

ScalarField bump_source(const TorusGrid& grid, const std::array<double, 3>& center, double radius, double* removed) {
  if (!(radius > 0.0)) throw Error(Errc::InvalidArgument, "bump radius must be positive");
  ScalarField f(grid);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const std::array<double, 3> x = grid.center_of(c);
    double r2 = 0.0;
    for (int a = 0; a < grid.dim(); ++a) r2 += (x[a] - center[a]) * (x[a] - center[a]);
    const double s = r2 / (radius * radius);
    f[c] = s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
  }
  const Spectrum fh = scalar_rhs(f, removed);
  return Spectral::of(grid)->inverse(fh);
}

ScalarField solve_uhom(const SmallMatrix& a_hom, const ScalarField& f) { return fft_const_solve(a_hom, f); }

ScalarField solve_u1hom(const SmallMatrix& a_hom, const SymTensor3& a1, const ScalarField& u_hom) {
  const auto sp = Spectral::of(u_hom.grid());
  const Spectrum rhs = a1_contraction(*sp, a1, sp->forward(u_hom));
  return sp->inverse(fft_const_solve(a_hom, rhs));
}

MacroscopicSolution make_macroscopic(const SmallMatrix& a_hom, const SymTensor3& a1, double eps, ScalarField f,
                                     double f_removed) {
  const TorusGrid grid = f.grid();
  const int d = grid.dim();
  if (a_hom.d != d || a1.dim() != d) throw Error(Errc::InvalidArgument, "macro tensors do not match the grid");
  if (!(min_symmetric_eigenvalue(a_hom) > 0.0)) throw Error(Errc::InvalidArgument, "a_hom must be elliptic");
  const auto sp = Spectral::of(grid);
  MacroscopicSolution m(grid);
  m.a_hom = a_hom;
  m.a1 = a1;
  m.eps = eps;
  m.f_removed = f_removed;
  const Spectrum fh = scalar_rhs(f);
  m.f = sp->inverse(fh);

  const Spectrum uh = fft_const_solve(a_hom, fh);
  m.u_hom = sp->inverse(uh);
  m.residual_uhom = const_residual(*sp, a_hom, uh, fh);
  const Spectrum g = a1_contraction(*sp, a1, uh);
  const Spectrum u1h = fft_const_solve(a_hom, g);
  m.u1_hom = sp->inverse(u1h);
  m.residual_u1 = spectral_l2(*sp, g) > 0.0 ? const_residual(*sp, a_hom, u1h, g) : 0.0;

  m.grad = sp->gradient(uh);
  m.grad_u1 = sp->gradient(u1h);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const int ax[2] = {i, j};
      m.hess.push_back(sp->inverse(sp->derivative(uh, ax)));
      m.hess_u1.push_back(sp->inverse(sp->derivative(u1h, ax)));
    }
  for (std::size_t s = 0; s < m.third.stored_count(); ++s) {
    const std::array<int, 3> t = m.third.triple(s);
    m.third.components()[s] = sp->inverse(sp->derivative(uh, std::span<const int>(t.data(), 3)));
  }
  return m;
}

ExpansionBundle assemble_expansion(int order, const MacroscopicSolution& macro, const FirstOrderCorrectors& foc,
                                   const SecondOrderCorrectors* soc, bool with_u1) {
  const TorusGrid& grid = macro.u_hom.grid();
  if (order < 0 || order > 2) throw Error(Errc::InvalidArgument, "expansion order must be 0, 1 or 2");
  if (order == 2 && !soc) throw Error(Errc::InvalidArgument, "order 2 needs second-order correctors");
  require_same_grid(grid, foc.phi.front().grid(), "assemble_expansion");
  ExpansionBundle out(grid);
  out.order = order;
  if (order == 0) {
    out.u = macro.u_hom;
    out.grad = macro.grad;
    return out;
  }
  const int d = grid.dim();
  const auto sp = Spectral::of(grid);
  if (order == 1) {
    out.u = weighted_sum(macro.u_hom, foc.phi, macro.grad);
    out.grad = sp->gradient(out.u);
    return out;
  }
  ScalarField v = macro.u_hom;
  VectorField gv = macro.grad;
  if (with_u1) {
    v.add_scaled(macro.eps, macro.u1_hom);
    for (int i = 0; i < d; ++i) gv[i].add_scaled(macro.eps, macro.grad_u1[i]);
  }
  out.u = weighted_sum(v, foc.phi, gv);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out.u.add_product(1.0, soc->psi_at(i, j), macro.d2(i, j));
  out.grad = sp->gradient(out.u);
  return out;
}

IdentityResiduals residual_identity_check(const CoefficientField& a, const MacroscopicSolution& macro,
                                          const FirstOrderCorrectors& foc, const SecondOrderCorrectors& soc) {
  const TorusGrid& grid = a.grid();
  require_same_grid(grid, macro.u_hom.grid(), "residual_identity_check");
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  IdentityResiduals r;
  const Spectrum fh = sp->forward(macro.f);
  r.f_norm = hminus1_norm(*sp, fh);
  const double scale = r.f_norm > 0.0 ? r.f_norm : 1.0;
  auto defect = [&](const ScalarField& w) {
    Spectrum s = apply_operator(a, sp->forward(w));
    s -= fh;
    return s;
  };
  auto measure = [&](const Spectrum& s) { return hminus1_norm(*sp, s) / scale; };

  // First order.
  const ExpansionBundle w1 = assemble_expansion(1, macro, foc, nullptr, false);
  Spectrum r1 = defect(w1.u);
  r1 += sp->divergence_spectrum(corrector_flux(a, foc, macro.hess));
  r.first = measure(r1);

  // Second order, common part: A w2 - f + div(sum psi a grad d_ij u).
  const ExpansionBundle w2 = assemble_expansion(2, macro, foc, &soc, false);
  Spectrum base = defect(w2.u);
  base += sp->divergence_spectrum(psi_flux(a, macro, soc));
  r.second_without_Psi = measure(base);

  Spectrum expanded = base;
  expanded += sp->forward(T_contraction(a, foc, soc, macro));
  r.second_expanded = measure(expanded);

  const Spectrum Psi_div = sp->divergence_spectrum(Psi_flux(macro, soc));
  Spectrum second = base;
  second -= Psi_div;
  r.second = measure(second);

  Spectrum divfree = base;
  divfree -= sp->divergence_spectrum(divfree_Psi_flux(a, foc, soc, macro));
  r.second_divfree = measure(divfree);

  const Spectrum a1_term = a1_contraction(*sp, macro.a1, sp->forward(macro.u_hom));
  r.a1_term = macro.eps * measure(a1_term);

  // Nonsymmetric: add eps (u1 + sum phi_i d_i u1) and its corrector flux.
  ScalarField extra = weighted_sum(macro.u1_hom, foc.phi, macro.grad_u1);
  Spectrum ns = base;
  ns -= Psi_div;
  ns.add_scaled(macro.eps, apply_operator(a, sp->forward(extra)));
  ns.add_scaled(macro.eps, sp->divergence_spectrum(corrector_flux(a, foc, macro.hess_u1)));
  r.nonsymmetric = measure(ns);
  (void)d;
  return r;
}

namespace {

double log2_slope(const std::vector<int>& cells, const std::vector<double>& values) {
  // least squares of -log2(value) on log2(n)
  const std::size_t m = cells.size();
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sx += std::log2(static_cast<double>(cells[i]));
    sy += -std::log2(values[i]);
  }
  sx /= static_cast<double>(m);
  sy /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = std::log2(static_cast<double>(cells[i])) - sx;
    sxx += dx * dx;
    sxy += dx * (-std::log2(values[i]) - sy);
  }
  return sxy / sxx;
}

}  // namespace

RefinementStudy identity_refinement(const std::function<CoefficientField(const TorusGrid&)>& make_field, int d,
                                    double length, const std::vector<int>& cells, const SolveSpec& spec,
                                    const MacroSpec& macro_spec) {
  RefinementStudy study;
  study.cells = cells;
  for (int n : cells) {
    const TorusGrid grid(d, n, length);
    macro_spec.validate(grid);
    const CoefficientField a = make_field(grid);
    const FirstOrderCorrectors foc = solve_first_order(a, spec);
    const SecondOrderCorrectors soc = solve_second_order(a, foc, spec, PsiMode::Full, true);
    double removed = 0.0;
    ScalarField f = bump_source(grid, macro_spec.centre(grid), macro_spec.source_radius(grid), &removed);
    const MacroscopicSolution macro = make_macroscopic(foc.a_hom, soc.a1, soc.eps_scale, std::move(f), removed);
    study.rows.push_back(residual_identity_check(a, macro, foc, soc));
  }
  auto column = [&](double IdentityResiduals::*member) {
    std::vector<double> v;
    for (const auto& row : study.rows) v.push_back(row.*member);
    return log2_slope(cells, v);
  };
  study.slope_first = column(&IdentityResiduals::first);
  study.slope_second_expanded = column(&IdentityResiduals::second_expanded);
  study.slope_second = column(&IdentityResiduals::second);
  study.slope_nonsymmetric = column(&IdentityResiduals::nonsymmetric);
  study.slope_second_divfree = column(&IdentityResiduals::second_divfree);
  if (!study.rows.empty()) {
    const IdentityResiduals& last = study.rows.back();
    study.Psi_ablation_ratio = last.second > 0.0 ? last.second_without_Psi / last.second
                                                 : std::numeric_limits<double>::infinity();
    study.divfree_ablation_ratio = last.second_divfree > 0.0 ? last.second_without_Psi / last.second_divfree
                                                             : std::numeric_limits<double>::infinity();
  }
  return study;
}

IbpResult ibp_expectation_check(const CoefficientField& a, const FirstOrderCorrectors& foc,
                                const SecondOrderCorrectors& soc, const FirstOrderCorrectors* adjoint) {
  const TorusGrid& grid = a.grid();
  const int d = a.dim();
  const auto sp = Spectral::of(grid);
  if (!a.symmetric && !adjoint)
    throw Error(Errc::InvalidArgument, "nonsymmetric coefficients need the adjoint corrector");
  const FirstOrderCorrectors& partner = a.symmetric ? foc : *adjoint;
  std::vector<VectorField> gphi, gphi_primal;
  for (int k = 0; k < d; ++k) {
    gphi.push_back(sp->gradient(partner.phi[static_cast<std::size_t>(k)]));
    gphi_primal.push_back(sp->gradient(foc.phi[static_cast<std::size_t>(k)]));
  }
  IbpResult out;
  out.adjoint = !a.symmetric;
  double max_rel = 0.0, max_rel_primal = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const VectorField g = sp->gradient(soc.psi_at(i, j));
      std::vector<const ScalarField*> gp;
      for (int m = 0; m < d; ++m) gp.push_back(&g[m]);
      VectorField flux(grid);
      add_matvec(flux, a, gp, 1.0);
      CompensatedSum energy;
      for (int m = 0; m < d; ++m)
        for (double v : flux[m].values()) energy.add(v * v);
      const double rms = std::sqrt(energy.value() / static_cast<double>(grid.size()));
      for (int k = 0; k < d; ++k) {
        auto gap_with = [&](const VectorField& gradphi) {
          CompensatedSum acc;
          for (std::size_t c = 0; c < grid.size(); ++c) {
            double v = flux[k][c];
            for (int m = 0; m < d; ++m) v += flux[m][c] * gradphi[m][c];
            acc.add(v);
          }
          return std::fabs(acc.value() / static_cast<double>(grid.size()));
        };
        const double gap = gap_with(gphi[static_cast<std::size_t>(k)]);
        const double gap_primal = gap_with(gphi_primal[static_cast<std::size_t>(k)]);
        out.max_gap = std::max(out.max_gap, gap);
        if (rms > 0.0) {
          max_rel = std::max(max_rel, gap / rms);
          max_rel_primal = std::max(max_rel_primal, gap_primal / rms);
        }
      }
    }
  out.relative = max_rel;
  out.primal_relative = max_rel_primal;
  return out;
}

bool ErrorReport::finite() const {
  const double v[] = {err_L2_ball, err_Hm1_ball, err_Hm1_ball_first, err_Hm1_ball_u1, err_H1_twoscale2,
                      err_L2_exp1, u_L2_ball, energy_rhs, energy_bound};
  for (double x : v)
    if (!std::isfinite(x) || x < 0.0) return false;
  return true;
}

ErrorReport error_report(const CoefficientField& a, const MacroscopicSolution& macro, const FirstOrderCorrectors& foc,
                         const SecondOrderCorrectors& soc, const SolveSpec& spec, const MacroSpec& macro_spec) {
  const TorusGrid& grid = a.grid();
  require_same_grid(grid, macro.u_hom.grid(), "error_report");
  macro_spec.validate(grid);
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  ErrorReport rep;
  rep.f_removed = macro.f_removed;

  const KrylovResult micro = krylov_solve_divform(a, scalar_rhs(macro.f), spec);
  rep.stats = micro.stats;
  const BallMask ball = ball_mask(grid, macro_spec.centre(grid), macro_spec.ball(grid));

  const ScalarField e0 = micro.u - macro.u_hom;
  ScalarField e0u1 = e0;
  e0u1.add_scaled(-macro.eps, macro.u1_hom);
  rep.err_L2_ball = l2_ball(e0, ball);
  rep.u_L2_ball = l2_ball(micro.u, ball);
  const double tol = std::min(1e-10, spec.rel_tol);
  rep.err_Hm1_ball_first = hminus1_ball(e0, ball, tol);
  rep.err_Hm1_ball_u1 = hminus1_ball(e0u1, ball, tol);
  rep.err_Hm1_ball = a.symmetric ? rep.err_Hm1_ball_first : rep.err_Hm1_ball_u1;

  const ExpansionBundle w1 = assemble_expansion(1, macro, foc, nullptr, false);
  rep.err_L2_exp1 = l2_ball(micro.u - w1.u, ball);

  const bool with_u1 = !a.symmetric;
  const ExpansionBundle w2 = assemble_expansion(2, macro, foc, &soc, with_u1);
  const VectorField gu = sp->gradient(micro.u_hat);
  CompensatedSum h1;
  for (int k = 0; k < d; ++k)
    for (std::size_t c = 0; c < grid.size(); ++c) {
      const double v = gu[k][c] - w2.grad[k][c];
      h1.add(v * v);
    }
  rep.err_H1_twoscale2 = std::sqrt(h1.value() * grid.cell_volume());

  // Flux fields of the second-order identity.
  VectorField F = psi_flux(a, macro, soc);
  const VectorField P = Psi_flux(macro, soc);
  for (int k = 0; k < d; ++k) F[k] -= P[k];
  if (with_u1) {
    const VectorField G = corrector_flux(a, foc, macro.hess_u1);
    for (int k = 0; k < d; ++k) F[k].add_scaled(macro.eps, G[k]);
  }
  CompensatedSum fe;
  for (int k = 0; k < d; ++k)
    for (double v : F[k].values()) fe.add(v * v);
  rep.energy_rhs = std::sqrt(fe.value() * grid.cell_volume());
  rep.energy_bound = rep.energy_rhs / a.lambda;
  return rep;
}

}  // namespace homoglab
