#include "homoglab/cellsolve.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "homoglab/reduce.hpp"
#include "homoglab/spectral.hpp"

namespace homoglab {

void SolveSpec::validate() const {
  if (!(rel_tol > 0.0 && rel_tol <= 1e-3))
    throw Error(Errc::Validation, "rel_tol must lie in (0, 1e-3], got " + std::to_string(rel_tol));
  if (max_iter < 1) throw Error(Errc::Validation, "max_iter must be positive");
  if (preconditioner && min_symmetric_eigenvalue(*preconditioner) <= 0.0)
    throw Error(Errc::Validation, "preconditioner is not elliptic");
}

Spectrum divergence_rhs(const VectorField& g) {
  return Spectral::of(g[0].grid())->divergence_spectrum(g);
}

namespace {

bool is_null_mode(const Spectral& sp, std::size_t mode) { return sp.xi_sq()[mode] == 0.0; }

double null_content_l2(const Spectral& sp, const Spectrum& s) {
  CompensatedSum acc;
  const auto w = sp.weight();
  for (std::size_t m = 0; m < s.size(); ++m)
    if (is_null_mode(sp, m)) acc.add(w[m] * std::norm(s[m]));
  return std::sqrt(sp.grid().volume() * acc.value());
}

}  // namespace

Spectrum scalar_rhs(const ScalarField& f, double* removed) {
  const auto sp = Spectral::of(f.grid());
  Spectrum s = sp->forward(f);
  if (removed) *removed = null_content_l2(*sp, s);
  for (std::size_t m = 0; m < s.size(); ++m)
    if (is_null_mode(*sp, m)) s[m] = 0.0;
  return s;
}

Spectrum fft_const_solve(const SmallMatrix& A, const Spectrum& rhs) {
  const auto sp = Spectral::of(rhs.grid());
  const int d = rhs.grid().dim();
  Spectrum u(rhs.grid());
  double xi[3] = {0.0, 0.0, 0.0};
  for (std::size_t m = 0; m < rhs.size(); ++m) {
    for (int a = 0; a < d; ++a) xi[a] = sp->xi(a)[m];
    const double symbol = A.quadratic(xi);
    u[m] = symbol > 0.0 ? rhs[m] / symbol : Complex(0.0);
  }
  return u;
}

ScalarField fft_const_solve(const SmallMatrix& A, const ScalarField& rhs, double* removed) {
  const auto sp = Spectral::of(rhs.grid());
  return sp->inverse(fft_const_solve(A, scalar_rhs(rhs, removed)));
}

namespace {

class Operator {
 public:
  explicit Operator(const CoefficientField& a)
      : a_(a), sp_(Spectral::of(a.grid())), isotropic_(a.is_isotropic()) {}

  void apply(const Spectrum& u, Spectrum& out) const {
    const TorusGrid& grid = a_.grid();
    const int d = grid.dim();
    std::vector<ScalarField> g(d, ScalarField(grid));
    Spectrum tmp(grid);
    for (int j = 0; j < d; ++j) {
      tmp = u;
      sp_->differentiate(tmp, j);
      sp_->inverse(tmp, g[j]);
    }
    out.fill(0.0);
    ScalarField flux(grid);
    const std::size_t n = grid.size();
    for (int i = 0; i < d; ++i) {
      if (isotropic_) {
        const double* alpha = a_.a(0, 0).data();
        const double* gi = g[i].data();
        double* f = flux.data();
        for (std::size_t x = 0; x < n; ++x) f[x] = alpha[x] * gi[x];
      } else {
        flux.fill(0.0);
        for (int j = 0; j < d; ++j) flux.add_product(1.0, a_.a(i, j), g[j]);
      }
      sp_->forward(flux, tmp);
      sp_->differentiate(tmp, i);
      out -= tmp;
    }
  }

 private:
  const CoefficientField& a_;
  std::shared_ptr<const Spectral> sp_;
  bool isotropic_;
};

/// Symmetrically preconditioned system S A S y = S b with S = (A0 xi.xi)^{-1/2}.
class PreconditionedSystem {
 public:
  PreconditionedSystem(const CoefficientField& a, const SmallMatrix& a0)
      : op_(a), sp_(Spectral::of(a.grid())), scale_(a.grid().spectral_size()), inv_scale_(scale_.size()) {
    const int d = a.grid().dim();
    double xi[3] = {0.0, 0.0, 0.0};
    for (std::size_t m = 0; m < scale_.size(); ++m) {
      for (int k = 0; k < d; ++k) xi[k] = sp_->xi(k)[m];
      const double symbol = a0.quadratic(xi);
      scale_[m] = symbol > 0.0 ? 1.0 / std::sqrt(symbol) : 0.0;
      inv_scale_[m] = symbol > 0.0 ? std::sqrt(symbol) : 0.0;
    }
  }

  void scale(Spectrum& s) const {
    for (std::size_t m = 0; m < s.size(); ++m) s[m] *= scale_[m];
  }
  void unscale(Spectrum& s) const {
    for (std::size_t m = 0; m < s.size(); ++m) s[m] *= inv_scale_[m];
  }
  void apply(const Spectrum& y, Spectrum& out) const {
    Spectrum t = y;
    scale(t);
    op_.apply(t, out);
    scale(out);
  }
  double inner(const Spectrum& u, const Spectrum& v) const { return sp_->inner(u, v); }
  double norm(const Spectrum& u) const { return std::sqrt(std::max(0.0, sp_->norm_sq(u))); }
  /// L2 norm of the unpreconditioned residual S^{-1} r.
  double unscaled_norm(const Spectrum& r) const {
    CompensatedSum acc;
    const auto w = sp_->weight();
    for (std::size_t m = 0; m < r.size(); ++m) acc.add(w[m] * inv_scale_[m] * inv_scale_[m] * std::norm(r[m]));
    return std::sqrt(sp_->grid().volume() * acc.value());
  }

 private:
  Operator op_;
  std::shared_ptr<const Spectral> sp_;
  std::vector<double> scale_;
  std::vector<double> inv_scale_;
};

struct Norms {
  double b_h = 0.0;
  double b_l2 = 0.0;
};

struct Progress {
  double rel_h = 0.0;
  double rel_l2 = 0.0;
  bool converged(double tol) const { return rel_h <= tol && rel_l2 <= tol; }
};

Progress measure(const PreconditionedSystem& sys, const Spectrum& r, const Norms& nb) {
  return {sys.norm(r) / nb.b_h, sys.unscaled_norm(r) / nb.b_l2};
}

void true_residual(const PreconditionedSystem& sys, const Spectrum& sb, const Spectrum& y, Spectrum& r) {
  sys.apply(y, r);
  r *= -1.0;
  r += sb;
}

constexpr int kMaxRestarts = 4;

void run_cg(const PreconditionedSystem& sys, const Spectrum& sb, Spectrum& y, const Norms& nb,
            const SolveSpec& spec, SolveStats& stats) {
  const TorusGrid& grid = sb.grid();
  Spectrum r = sb;
  Spectrum p = r;
  Spectrum q(grid);
  double rr = sys.inner(r, r);
  Progress pr = measure(sys, r, nb);
  while (true) {
    if (pr.converged(spec.rel_tol)) {
      true_residual(sys, sb, y, r);
      pr = measure(sys, r, nb);
      if (pr.converged(spec.rel_tol) || stats.restarts >= kMaxRestarts) break;
      ++stats.restarts;
      p = r;
      rr = sys.inner(r, r);
      continue;
    }
    if (stats.iterations >= spec.max_iter) break;
    sys.apply(p, q);
    const double pq = sys.inner(p, q);
    if (!(pq > 0.0)) break;
    const double alpha = rr / pq;
    y.add_scaled(alpha, p);
    r.add_scaled(-alpha, q);
    const double rr_new = sys.inner(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    p *= beta;
    p += r;
    ++stats.iterations;
    pr = measure(sys, r, nb);
  }
  stats.rel_residual = pr.rel_h;
  stats.rel_residual_l2 = pr.rel_l2;
}

void run_bicgstab(const PreconditionedSystem& sys, const Spectrum& sb, Spectrum& y, const Norms& nb,
                  const SolveSpec& spec, SolveStats& stats) {
  const TorusGrid& grid = sb.grid();
  Spectrum r = sb;
  Spectrum shadow = r;
  Spectrum p(grid), v(grid), s(grid), t(grid);
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  Progress pr = measure(sys, r, nb);
  auto restart = [&]() {
    true_residual(sys, sb, y, r);
    shadow = r;
    p.fill(0.0);
    v.fill(0.0);
    rho = alpha = omega = 1.0;
    pr = measure(sys, r, nb);
  };
  while (true) {
    if (pr.converged(spec.rel_tol)) {
      restart();
      if (pr.converged(spec.rel_tol) || stats.restarts >= kMaxRestarts) break;
      ++stats.restarts;
      continue;
    }
    if (stats.iterations >= spec.max_iter) break;
    const double rho_new = sys.inner(shadow, r);
    if (rho_new == 0.0 || omega == 0.0) {
      if (stats.restarts >= kMaxRestarts) break;
      ++stats.restarts;
      restart();
      continue;
    }
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    p.add_scaled(-omega, v);
    p *= beta;
    p += r;
    sys.apply(p, v);
    alpha = rho / sys.inner(shadow, v);
    s = r;
    s.add_scaled(-alpha, v);
    ++stats.iterations;
    if (measure(sys, s, nb).converged(spec.rel_tol)) {
      y.add_scaled(alpha, p);
      r = s;
      pr = measure(sys, r, nb);
      continue;
    }
    sys.apply(s, t);
    const double tt = sys.inner(t, t);
    omega = tt > 0.0 ? sys.inner(t, s) / tt : 0.0;
    y.add_scaled(alpha, p);
    y.add_scaled(omega, s);
    r = s;
    r.add_scaled(-omega, t);
    pr = measure(sys, r, nb);
  }
  stats.rel_residual = pr.rel_h;
  stats.rel_residual_l2 = pr.rel_l2;
}

}  // namespace

Spectrum apply_operator(const CoefficientField& a, const Spectrum& u_hat) {
  Spectrum out(a.grid());
  Operator(a).apply(u_hat, out);
  return out;
}

KrylovResult krylov_solve_divform(const CoefficientField& a, const Spectrum& rhs, const SolveSpec& spec) {
  spec.validate();
  require_same_grid(a.grid(), rhs.grid(), "krylov_solve_divform");
  const auto start = std::chrono::steady_clock::now();
  KrylovMethod method = spec.method;
  if (method == KrylovMethod::Auto) method = a.symmetric ? KrylovMethod::Cg : KrylovMethod::BiCgStab;
  if (method == KrylovMethod::Cg && !a.symmetric)
    throw Error(Errc::InvalidArgument, "CG requires a symmetric coefficient field; use bicgstab");
  const SmallMatrix a0 = spec.preconditioner ? *spec.preconditioner : a.average().symmetric_part();
  const auto sp = Spectral::of(a.grid());
  PreconditionedSystem sys(a, a0);

  Spectrum b = rhs;
  for (std::size_t m = 0; m < b.size(); ++m)
    if (is_null_mode(*sp, m)) b[m] = 0.0;
  Spectrum sb = b;
  sys.scale(sb);
  Norms nb{sys.norm(sb), sp->norm_sq(b) > 0.0 ? std::sqrt(sp->norm_sq(b)) : 0.0};

  KrylovResult res{ScalarField(a.grid()), Spectrum(a.grid()), SolveStats{}};
  if (nb.b_h == 0.0 || nb.b_l2 == 0.0) {
    res.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
  }
  Spectrum y(a.grid());
  if (method == KrylovMethod::Cg)
    run_cg(sys, sb, y, nb, spec, res.stats);
  else
    run_bicgstab(sys, sb, y, nb, spec, res.stats);
  res.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!(res.stats.rel_residual <= spec.rel_tol && res.stats.rel_residual_l2 <= spec.rel_tol))
    throw SolverError("Krylov solve stalled at relative residual " + std::to_string(res.stats.rel_residual) +
                          " (L2 " + std::to_string(res.stats.rel_residual_l2) + ") after " +
                          std::to_string(res.stats.iterations) + " iterations",
                      res.stats);
  sys.scale(y);
  res.u_hat = std::move(y);
  sp->inverse(res.u_hat, res.u);
  return res;
}

ScalarField dirichlet_mask_cg(const std::vector<std::uint8_t>& mask, const ScalarField& rhs,
                              const SolveSpec& spec, SolveStats* stats_out) {
  const TorusGrid& grid = rhs.grid();
  if (mask.size() != grid.size()) throw Error(Errc::InvalidArgument, "mask size does not match the grid");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> cells;
  std::vector<std::ptrdiff_t> local(grid.size(), -1);
  for (std::size_t c = 0; c < grid.size(); ++c)
    if (mask[c]) {
      local[c] = static_cast<std::ptrdiff_t>(cells.size());
      cells.push_back(c);
    }
  if (cells.empty()) throw Error(Errc::MaskEmpty, "Dirichlet mask has no cells");

  const int d = grid.dim();
  const int n = grid.cells();
  const std::size_t m = cells.size();
  const int nb = 2 * d;
  std::vector<std::ptrdiff_t> neighbors(m * nb, -1);
  for (std::size_t u = 0; u < m; ++u) {
    const auto cell = grid.cell_of(cells[u]);
    for (int a = 0; a < d; ++a)
      for (int s = 0; s < 2; ++s) {
        auto nbr = cell;
        nbr[a] = (cell[a] + (s ? 1 : n - 1)) % n;
        neighbors[u * nb + 2 * a + s] = local[grid.index_of(nbr)];
      }
  }
  const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
  auto apply = [&](const std::vector<double>& w, std::vector<double>& out) {
    for (std::size_t u = 0; u < m; ++u) {
      double acc = 2.0 * d * w[u];
      for (int k = 0; k < nb; ++k) {
        const auto v = neighbors[u * nb + k];
        if (v >= 0) acc -= w[static_cast<std::size_t>(v)];
      }
      out[u] = acc * inv_h2;
    }
  };
  auto dot = [](const std::vector<double>& x, const std::vector<double>& y) { return compensated_dot(x, y); };

  std::vector<double> b(m), w(m, 0.0), r(m), p(m), q(m);
  for (std::size_t u = 0; u < m; ++u) b[u] = rhs[cells[u]];
  const double bnorm = std::sqrt(dot(b, b));
  SolveStats stats;
  ScalarField out(grid);
  if (bnorm == 0.0) {
    if (stats_out) *stats_out = stats;
    return out;
  }
  r = b;
  p = r;
  double rr = dot(r, r);
  double rel = 1.0;
  while (true) {
    rel = std::sqrt(rr) / bnorm;
    if (rel <= spec.rel_tol) {
      apply(w, q);
      for (std::size_t u = 0; u < m; ++u) r[u] = b[u] - q[u];
      rr = dot(r, r);
      rel = std::sqrt(rr) / bnorm;
      if (rel <= spec.rel_tol || stats.restarts >= kMaxRestarts) break;
      ++stats.restarts;
      p = r;
    }
    if (stats.iterations >= spec.max_iter) break;
    apply(p, q);
    const double alpha = rr / dot(p, q);
    for (std::size_t u = 0; u < m; ++u) {
      w[u] += alpha * p[u];
      r[u] -= alpha * q[u];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t u = 0; u < m; ++u) p[u] = r[u] + beta * p[u];
    ++stats.iterations;
  }
  stats.rel_residual = rel;
  stats.rel_residual_l2 = rel;
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (stats_out) *stats_out = stats;
  if (!(rel <= spec.rel_tol))
    throw SolverError("masked Dirichlet CG did not reach rel_tol after " + std::to_string(stats.iterations) +
                          " iterations",
                      stats);
  for (std::size_t u = 0; u < m; ++u) out[cells[u]] = w[u];
  return out;
}

}  // namespace homoglab
