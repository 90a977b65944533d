#include "homoglab/correctors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "homoglab/hgf1.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/parallel.hpp"
#include "homoglab/reduce.hpp"
#include "homoglab/spectral.hpp"

namespace homoglab {

namespace {

/// sigma_ikj with the skew sign applied.
const ScalarField* sigma_entry(const SkewField3& s, int i, int k, int j, double& sign) {
  if (k == j) {
    sign = 0.0;
    return nullptr;
  }
  sign = k < j ? 1.0 : -1.0;
  return k < j ? &s.stored(i, k, j) : &s.stored(i, j, k);
}

/// u_hat / |xi|^2 with the null modes zeroed.
void inverse_laplacian(const Spectral& sp, Spectrum& s) {
  const auto xs = sp.xi_sq();
  for (std::size_t m = 0; m < s.size(); ++m) s[m] = xs[m] > 0.0 ? s[m] / xs[m] : Complex(0.0);
}

int multiset_count(const std::array<int, 3>& t) {
  if (t[0] == t[1] && t[1] == t[2]) return 1;
  if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return 3;
  return 6;
}

KrylovResult labeled_solve(const CoefficientField& a, const Spectrum& rhs, const SolveSpec& spec,
                           const std::string& label) {
  try {
    return krylov_solve_divform(a, rhs, spec);
  } catch (const SolverError& e) {
    throw SolverError(label + ": " + e.what(), e.stats());
  }
}

double spectral_norm(const Spectral& sp, const Spectrum& s) { return std::sqrt(std::max(0.0, sp.norm_sq(s))); }

}  // namespace

SkewField3 sigma_from_flux(const std::vector<VectorField>& q) {
  const TorusGrid& grid = q.front()[0].grid();
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  SkewField3 sigma(grid);
  for (int i = 0; i < d; ++i) {
    std::vector<Spectrum> qh;
    for (int k = 0; k < d; ++k) qh.push_back(sp->forward(q[i][k]));
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) {
        Spectrum s = sp->derivative(qh[k], j);
        s -= sp->derivative(qh[j], k);
        inverse_laplacian(*sp, s);
        sp->inverse(s, sigma.stored(i, j, k));
      }
  }
  return sigma;
}

FirstOrderCorrectors solve_first_order(const CoefficientField& a, const SolveSpec& spec, int threads) {
  const TorusGrid& grid = a.grid();
  const int d = grid.dim();
  const auto sp = Spectral::of(grid);
  FirstOrderCorrectors foc(grid);
  foc.rel_tol = spec.rel_tol;
  foc.phi.assign(d, ScalarField(grid));
  foc.q.assign(d, VectorField(grid));
  foc.stats.assign(d, SolveStats{});
  parallel_for(static_cast<std::size_t>(d), threads, [&](std::size_t idx) {
    const int i = static_cast<int>(idx);
    VectorField column(grid);
    for (int k = 0; k < d; ++k) column[k] = a.a(k, i);
    KrylovResult res = labeled_solve(a, divergence_rhs(column), spec, "phi_" + std::to_string(i));
    foc.stats[i] = res.stats;
    VectorField grad = sp->gradient(res.u_hat);
    for (int k = 0; k < d; ++k) {
      ScalarField& qk = foc.q[i][k];
      qk = a.a(k, i);
      for (int l = 0; l < d; ++l) qk.add_product(1.0, a.a(k, l), grad[l]);
    }
    foc.phi[i] = std::move(res.u);
  });
  foc.a_hom = SmallMatrix(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) foc.a_hom(j, i) = mean(foc.q[i][j]);
  foc.sigma = sigma_from_flux(foc.q);
  return foc;
}

double SigmaResidual::max_relative() const {
  const int d = static_cast<int>(flux_norm.size());
  double m = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const double r = residual[static_cast<std::size_t>(i * d + j)];
      if (flux_norm[i] > 0.0) m = std::max(m, r / flux_norm[i]);
      else if (r > 0.0) m = INFINITY;
    }
  return m;
}

SigmaResidual check_sigma_divergence(const CoefficientField& a, const FirstOrderCorrectors& foc) {
  const TorusGrid& grid = a.grid();
  require_same_grid(grid, foc.phi.front().grid(), "check_sigma_divergence");
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  SigmaResidual out;
  out.residual.assign(static_cast<std::size_t>(d * d), 0.0);
  out.unresolved.assign(static_cast<std::size_t>(d * d), 0.0);
  const auto xs = sp->xi_sq();
  for (int i = 0; i < d; ++i) {
    CompensatedSum acc;
    for (int k = 0; k < d; ++k) acc.add(l2_inner(foc.q[i][k], foc.q[i][k]));
    out.flux_norm.push_back(std::sqrt(acc.value()));
    for (int j = 0; j < d; ++j) {
      // div sigma_ij = sum_k d_k sigma_ijk
      Spectrum div(grid);
      for (int k = 0; k < d; ++k) {
        if (k == j) continue;
        const double sign = j < k ? 1.0 : -1.0;
        const ScalarField& s = j < k ? foc.sigma.stored(i, j, k) : foc.sigma.stored(i, k, j);
        Spectrum t = sp->forward(s);
        sp->differentiate(t, k);
        div.add_scaled(sign, t);
      }
      // Compared on the resolved modes; the mean of q_ij is a_hom by definition, and the
      // Nyquist corners are invisible to every spectral derivative.
      Spectrum qh = sp->forward(foc.q[i][j]);
      Spectrum lost(grid);
      for (std::size_t m = 1; m < qh.size(); ++m)
        if (xs[m] == 0.0) lost[m] = qh[m];
      for (std::size_t m = 0; m < qh.size(); ++m)
        if (xs[m] == 0.0) qh[m] = 0.0;
      div -= qh;
      const std::size_t idx = static_cast<std::size_t>(i * d + j);
      out.residual[idx] = spectral_norm(*sp, div);
      out.unresolved[idx] = spectral_norm(*sp, lost);
    }
  }
  return out;
}

VectorField psi_source(const CoefficientField& a, const FirstOrderCorrectors& foc, int i, int j) {
  const TorusGrid& grid = a.grid();
  const int d = grid.dim();
  VectorField g(grid);
  for (int k = 0; k < d; ++k) {
    ScalarField& gk = g[k];
    gk.add_product(1.0, foc.phi[i], a.a(k, j));
    double sign = 0.0;
    if (const ScalarField* s = sigma_entry(foc.sigma, i, k, j, sign)) gk.add_scaled(-sign, *s);
  }
  return g;
}

std::vector<ScalarField> solve_psi(const CoefficientField& a, const FirstOrderCorrectors& foc, const SolveSpec& spec,
                                   PsiMode mode, std::vector<SolveStats>* stats, int threads) {
  const TorusGrid& grid = a.grid();
  const int d = grid.dim();
  std::vector<std::pair<int, int>> tasks;
  for (int i = 0; i < d; ++i)
    for (int j = (mode == PsiMode::Full ? 0 : i); j < d; ++j) tasks.emplace_back(i, j);
  std::vector<ScalarField> psi(static_cast<std::size_t>(d * d), ScalarField(grid));
  std::vector<SolveStats> st(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto [i, j] = tasks[t];
    VectorField g = psi_source(a, foc, i, j);
    if (mode == PsiMode::Symmetrized && i != j) {
      const VectorField h = psi_source(a, foc, j, i);
      for (int k = 0; k < d; ++k) {
        g[k] += h[k];
        g[k] *= 0.5;
      }
    }
    KrylovResult res =
        labeled_solve(a, divergence_rhs(g), spec, "psi_" + std::to_string(i) + std::to_string(j));
    st[t] = res.stats;
    psi[static_cast<std::size_t>(i * d + j)] = std::move(res.u);
  });
  if (mode == PsiMode::Symmetrized)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < i; ++j) psi[static_cast<std::size_t>(i * d + j)] = psi[static_cast<std::size_t>(j * d + i)];
  if (stats) *stats = std::move(st);
  return psi;
}

Q1A1 compute_q1_a1(const CoefficientField& a, const FirstOrderCorrectors& foc, const std::vector<ScalarField>& psi,
                   double eps_scale) {
  if (!(eps_scale > 0.0)) throw Error(Errc::InvalidArgument, "eps_scale must be positive");
  const TorusGrid& grid = a.grid();
  const int d = grid.dim();
  const auto sp = Spectral::of(grid);
  Q1A1 out{SymField3(grid), SymTensor3(d)};
  SymField3& symt = out.q1;
  ScalarField t(grid);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const VectorField grad = sp->gradient(psi[static_cast<std::size_t>(i * d + j)]);
      for (int k = 0; k < d; ++k) {
        t.fill(0.0);
        for (int l = 0; l < d; ++l) t.add_product(1.0, a.a(k, l), grad[l]);
        t.add_product(1.0, foc.phi[i], a.a(k, j));
        double sign = 0.0;
        if (const ScalarField* s = sigma_entry(foc.sigma, i, k, j, sign)) t.add_scaled(-sign, *s);
        std::array<int, 3> key{i, j, k};
        std::sort(key.begin(), key.end());
        symt(i, j, k).add_scaled(1.0 / multiset_count(key), t);
      }
    }
  for (std::size_t s = 0; s < symt.stored_count(); ++s) {
    const auto tr = symt.triple(s);
    ScalarField& comp = symt.components()[s];
    const double avg = mean(comp);
    out.a1(tr[0], tr[1], tr[2]) = avg / eps_scale;
    for (auto& x : comp.values()) x -= avg;
  }
  return out;
}

SymTensor3 symmetrize(const std::vector<double>& full, int d) {
  if (full.size() != static_cast<std::size_t>(d * d * d)) throw Error(Errc::InvalidArgument, "symmetrize needs d^3 entries");
  SymTensor3 out(d);
  for (std::size_t s = 0; s < out.stored_count(); ++s) {
    std::array<int, 3> t = out.triple(s);
    std::vector<double> vals;
    do {
      vals.push_back(full[static_cast<std::size_t>((t[0] * d + t[1]) * d + t[2])]);
    } while (std::next_permutation(t.begin(), t.end()));
    const bool agree = std::all_of(vals.begin(), vals.end(), [&](double v) { return v == vals.front(); });
    if (agree) {
      out.stored(s) = vals.front();
    } else {
      CompensatedSum acc;
      for (double v : vals) acc.add(v);
      out.stored(s) = acc.value() / static_cast<double>(vals.size());
    }
  }
  return out;
}

std::vector<double> expand(const SymTensor3& t) {
  const int d = t.dim();
  std::vector<double> full(static_cast<std::size_t>(d * d * d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) full[static_cast<std::size_t>((i * d + j) * d + k)] = t(i, j, k);
  return full;
}

std::vector<ScalarField> solve_Psi_pair(const SymField3& q1, int i, int j) {
  const TorusGrid& grid = q1.components().front().grid();
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  std::vector<Spectrum> qh;
  for (int m = 0; m < d; ++m) qh.push_back(sp->forward(q1(i, j, m)));
  std::vector<ScalarField> out;
  for (int k = 0; k < d; ++k)
    for (int l = k + 1; l < d; ++l) {
      Spectrum s = sp->derivative(qh[l], k);
      s -= sp->derivative(qh[k], l);
      inverse_laplacian(*sp, s);
      out.push_back(sp->inverse(s));
    }
  return out;
}

SkewField4 solve_Psi(const SymField3& q1) {
  const TorusGrid& grid = q1.components().front().grid();
  const int d = grid.dim();
  SkewField4 Psi(grid);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      std::vector<ScalarField> pair = solve_Psi_pair(q1, i, j);
      std::size_t p = 0;
      for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l, ++p) {
          Psi.stored(i, j, k, l) = pair[p];
          // q1 is totally symmetric, so Psi_ijkl = Psi_jikl.
          if (i != j) Psi.stored(j, i, k, l) = std::move(pair[p]);
        }
    }
  return Psi;
}

SecondOrderCorrectors solve_second_order(const CoefficientField& a, const FirstOrderCorrectors& foc,
                                         const SolveSpec& spec, PsiMode mode, bool materialize_Psi, int threads) {
  const TorusGrid& grid = a.grid();
  SecondOrderCorrectors soc(grid);
  soc.mode = mode;
  soc.eps_scale = a.eps_scale > 0.0 ? a.eps_scale : grid.length();
  soc.psi = solve_psi(a, foc, spec, mode, &soc.stats, threads);
  Q1A1 qa = compute_q1_a1(a, foc, soc.psi, soc.eps_scale);
  soc.q1 = std::move(qa.q1);
  soc.a1 = qa.a1;
  if (materialize_Psi) soc.Psi = solve_Psi(soc.q1);
  return soc;
}

PsiDiagnostics check_Psi(const SymField3& q1, const SkewField4& Psi) {
  const TorusGrid& grid = q1.components().front().grid();
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  PsiDiagnostics out;
  CompensatedSum qn;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) qn.add(l2_inner(q1(i, j, k), q1(i, j, k)));
  out.q1_norm = std::sqrt(qn.value());
  if (out.q1_norm == 0.0) return out;
  const auto xs = sp->xi_sq();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      std::vector<Spectrum> qh;
      for (int m = 0; m < d; ++m) qh.push_back(sp->forward(q1(i, j, m)));
      std::vector<std::vector<std::optional<Spectrum>>> ph(d, std::vector<std::optional<Spectrum>>(d));
      for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l) ph[k][l] = sp->forward(Psi.stored(i, j, k, l));
      for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l) {
          Spectrum r = *ph[k][l];
          for (std::size_t m = 0; m < r.size(); ++m) r[m] *= xs[m];
          r -= sp->derivative(qh[l], k);
          r += sp->derivative(qh[k], l);
          out.gauge_residual = std::max(out.gauge_residual, spectral_norm(*sp, r) / out.q1_norm);
        }
      Spectrum div(grid);
      for (int k = 0; k < d; ++k) {
        div += sp->derivative(qh[k], k);
        Spectrum defect(grid);
        for (int l = 0; l < d; ++l) {
          if (l == k) continue;
          const Spectrum& p = k < l ? *ph[k][l] : *ph[l][k];
          defect.add_scaled(k < l ? 1.0 : -1.0, sp->derivative(p, l));
        }
        Spectrum target = qh[k];
        for (std::size_t m = 0; m < target.size(); ++m)
          if (xs[m] == 0.0) target[m] = 0.0;
        defect -= target;
        out.divergence_defect = std::max(out.divergence_defect, spectral_norm(*sp, defect) / out.q1_norm);
      }
      for (std::size_t m = 0; m < div.size(); ++m) div[m] = xs[m] > 0.0 ? div[m] / std::sqrt(xs[m]) : Complex(0.0);
      out.q1_divergence = std::max(out.q1_divergence, spectral_norm(*sp, div) / out.q1_norm);
    }
  return out;
}

std::vector<double> psi_residual_functional(const CoefficientField& a, const FirstOrderCorrectors& foc,
                                            const std::vector<ScalarField>& psi, int tests, std::uint64_t seed) {
  const TorusGrid& grid = a.grid();
  const auto sp = Spectral::of(grid);
  const int d = grid.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<VectorField> grads;
  std::vector<double> grad_norms;
  for (int t = 0; t < tests; ++t) {
    Spectrum s(grid);
    for (std::size_t m = 1; m < s.size(); ++m) {
      bool low = true;
      for (int ax = 0; ax < d; ++ax) low = low && std::abs(sp->wavenumber(m, ax)) <= 4;
      if (low) s[m] = Complex(normal(rng), normal(rng));
    }
    grads.push_back(sp->gradient(s));
    CompensatedSum acc;
    for (int k = 0; k < d; ++k) acc.add(l2_inner(grads.back()[k], grads.back()[k]));
    grad_norms.push_back(std::sqrt(acc.value()));
  }
  std::vector<double> out(static_cast<std::size_t>(d * d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      VectorField f = psi_source(a, foc, i, j);
      const VectorField gp = sp->gradient(psi[static_cast<std::size_t>(i * d + j)]);
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) f[k].add_product(1.0, a.a(k, l), gp[l]);
      CompensatedSum fn;
      for (int k = 0; k < d; ++k) fn.add(l2_inner(f[k], f[k]));
      const double fnorm = std::sqrt(fn.value());
      double worst = 0.0;
      for (int t = 0; t < tests; ++t) {
        CompensatedSum r;
        for (int k = 0; k < d; ++k) r.add(l2_inner(f[k], grads[t][k]));
        const double scale = fnorm * grad_norms[t];
        if (scale > 0.0) worst = std::max(worst, std::fabs(r.value()) / scale);
      }
      out[static_cast<std::size_t>(i * d + j)] = worst;
    }
  return out;
}

RStarDiagnostic estimate_rstar(const FirstOrderCorrectors& foc, double delta) {
  if (!(delta > 0.0)) throw Error(Errc::InvalidArgument, "delta must be positive");
  const TorusGrid& grid = foc.phi.front().grid();
  const int d = grid.dim();
  RStarDiagnostic out;
  out.delta = delta;
  const double h = grid.spacing();
  const auto center = torus_center(grid);
  std::vector<const ScalarField*> fields;
  std::vector<double> weights;
  for (int i = 0; i < d; ++i) {
    fields.push_back(&foc.phi[i]);
    weights.push_back(1.0);
  }
  // Each stored sigma component stands for two entries of the full tensor.
  for (const auto& s : foc.sigma.components()) {
    fields.push_back(&s);
    weights.push_back(2.0);
  }
  for (double r = h; r <= 0.25 * grid.length() * (1 + 1e-12); r *= 2.0) {
    const BallMask ball = ball_mask(grid, center, r);
    CompensatedSum acc;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const double avg = mean_ball(*fields[f], ball);
      CompensatedSum dev;
      for (std::size_t c : ball.cells) {
        const double v = (*fields[f])[c] - avg;
        dev.add(v * v);
      }
      acc.add(weights[f] * dev.value());
    }
    out.radii.push_back(r);
    out.oscillation.push_back(acc.value() / static_cast<double>(ball.count()) / (r * r));
  }
  std::size_t first = out.radii.size();
  while (first > 0 && out.oscillation[first - 1] <= delta) --first;
  if (first == out.radii.size()) {
    out.capped = true;
    out.r_star = 0.5 * grid.length();
  } else {
    out.r_star = out.radii[first];
  }
  return out;
}

namespace {

nlohmann::json matrix_json(const SmallMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.d; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.d; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json stats_json(const std::vector<SolveStats>& st) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : st)
    arr.push_back({{"iterations", s.iterations},
                   {"rel_residual", s.rel_residual},
                   {"rel_residual_l2", s.rel_residual_l2},
                   {"restarts", s.restarts}});
  return arr;
}

}  // namespace

void write_corrector_bundle(const std::string& dir, const CoefficientField& a, const FirstOrderCorrectors& foc,
                            const SecondOrderCorrectors* soc, const std::string& extra_manifest_json) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const TorusGrid& grid = a.grid();
  const int d = grid.dim();
  const auto path = [&](const char* name) { return (fs::path(dir) / name).string(); };
  nlohmann::json files = nlohmann::json::object();
  write_hgf1(path("coefficient.hgf"), grid, 2, [&](std::size_t c) { return a.a.comp[c]; });
  files["coefficient"] = "coefficient.hgf";
  write_hgf1(path("phi.hgf"), 1, foc.phi);
  files["phi"] = "phi.hgf";
  write_hgf1(path("sigma.hgf"), grid, 3, [&](std::size_t c) { return expand_component(foc.sigma, c); });
  files["sigma"] = "sigma.hgf";
  const SigmaResidual sres = check_sigma_divergence(a, foc);
  nlohmann::json manifest = {
      {"grid", {{"d", d}, {"n", grid.cells()}, {"L", grid.length()}}},
      {"provenance", a.provenance},
      {"lambda", a.lambda},
      {"symmetric", a.symmetric},
      {"filtered", a.filtered},
      {"rel_tol", foc.rel_tol},
      {"a_hom", matrix_json(foc.a_hom)},
      {"phi_stats", stats_json(foc.stats)},
      {"sigma_divergence_max_relative", sres.max_relative()},
      {"phi_indices", "i"},
      {"sigma_indices", "(i*d + j)*d + k, skew in j,k"},
  };
  if (soc) {
    write_hgf1(path("psi.hgf"), 2, soc->psi);
    files["psi"] = "psi.hgf";
    write_hgf1(path("q1.hgf"), grid, 3, [&](std::size_t c) { return expand_component(soc->q1, c); });
    files["q1"] = "q1.hgf";
    if (soc->Psi) {
      write_hgf1(path("Psi.hgf"), grid, 4, [&](std::size_t c) { return expand_component(*soc->Psi, c); });
      files["Psi"] = "Psi.hgf";
      const PsiDiagnostics pd = check_Psi(soc->q1, *soc->Psi);
      manifest["Psi_gauge_residual"] = pd.gauge_residual;
      manifest["Psi_divergence_defect"] = pd.divergence_defect;
    }
    nlohmann::json a1 = nlohmann::json::array();
    for (int i = 0; i < d; ++i) {
      nlohmann::json m = nlohmann::json::array();
      for (int j = 0; j < d; ++j) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < d; ++k) row.push_back(soc->a1(i, j, k));
        m.push_back(row);
      }
      a1.push_back(m);
    }
    manifest["a1"] = a1;
    manifest["eps_scale"] = soc->eps_scale;
    manifest["psi_mode"] = soc->mode == PsiMode::Full ? "full" : "symmetrized";
    manifest["psi_stats"] = stats_json(soc->stats);
  }
  manifest["files"] = files;
  const nlohmann::json extra = nlohmann::json::parse(extra_manifest_json);
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  std::ofstream os(path("manifest.json"));
  os << manifest.dump(2) << '\n';
  if (!os) throw Error(Errc::Io, "cannot write manifest in " + dir);
}

}  // namespace homoglab
