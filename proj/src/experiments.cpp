#include "homoglab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "homoglab/error.hpp"
#include "homoglab/norms.hpp"
#include "homoglab/parallel.hpp"
#include "homoglab/reduce.hpp"

namespace homoglab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Closed-interval comparison that tolerates the rounding of L/8 style bounds.
bool at_least(double v, double bound) { return v >= bound * (1.0 - 1e-12); }
bool at_most(double v, double bound) { return v <= bound * (1.0 + 1e-12); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return {kNaN, kNaN};
  CompensatedSum s;
  for (double x : v) s.add(x);
  out.mean = s.value() / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  CompensatedSum q;
  for (double x : v) q.add((x - out.mean) * (x - out.mean));
  out.se = std::sqrt(q.value() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

nlohmann::json fit_json(const std::optional<FitResult>& f, double target) {
  nlohmann::json j;
  if (f) {
    j["slope"] = f->slope;
    j["stderr"] = f->stderr_slope;
    j["intercept"] = f->intercept;
    j["points"] = f->points;
  } else {
    j["slope"] = nullptr;
  }
  if (std::isfinite(target))
    j["target"] = target;
  else
    j["target"] = nullptr;
  return j;
}

MeanSe to_fit_stats(const std::vector<std::vector<double>>& per_seed, std::size_t r) {
  std::vector<double> v;
  for (const auto& s : per_seed) v.push_back(s[r]);
  return mean_se(v);
}

FitResult fit_rows(const std::vector<double>& radii, const std::vector<double>& m, const std::vector<double>& se) {
  std::vector<FitPoint> pts;
  for (std::size_t r = 0; r < radii.size(); ++r) pts.push_back({radii[r], m[r], se[r]});
  return fit_exponent(pts);
}

}  // namespace

void ExperimentConfig::validate() const {
  const TorusGrid g = grid();
  if (ells.empty()) throw Error(Errc::Validation, "at least one correlation length is required");
  if (seeds < 1) throw Error(Errc::Validation, "seeds must be positive");
  const double h = g.spacing();
  for (double ell : ells) {
    if (!std::isfinite(ell) || !(ell > 0.0)) throw Error(Errc::Validation, "correlation lengths must be positive");
    // Deterministic fields carry their own scale; ell is only a row label there.
    if (deterministic) continue;
    if (!at_least(ell, 4.0 * h) || !at_most(ell, L / 8.0))
      throw Error(Errc::Validation, fmt::format("correlation length {} outside [4h, L/8] = [{}, {}]", ell, 4.0 * h,
                                                L / 8.0));
  }
  if (!deterministic) {
    map.validate();
    for (double ell : ells) covariance_for(ell).validate(g);
  }
  if (!(rstar_delta > 0.0)) throw Error(Errc::Validation, "rstar_delta must be positive");
  macro.validate(g);
  ball_mask(g, macro.centre(g), macro.ball(g));
  solver.validate();
}

void ExperimentConfig::validate_scaling() const {
  validate();
  const double h = grid().spacing();
  for (double ell : ells)
    if (!at_least(ell, scale_guard * h))
      throw Error(Errc::Validation, fmt::format("correlation length {} below the scale-separation guard {} h", ell,
                                                scale_guard));
  if (seeds < 2) throw Error(Errc::Validation, "statistical studies need at least two seeds");
}

CoefficientField ExperimentConfig::field(double ell, std::uint64_t seed) const {
  const TorusGrid g = grid();
  if (deterministic) return deterministic_field(g, *deterministic);
  return sample_coefficient_field(g, covariance_for(ell), map, master_seed, seed);
}

RealizationPipeline run_pipeline(const ExperimentConfig& cfg, double ell, std::uint64_t seed) {
  const TorusGrid g = cfg.grid();
  CoefficientField a = cfg.field(ell, seed);
  FirstOrderCorrectors foc = solve_first_order(a, cfg.solver);
  SecondOrderCorrectors soc = solve_second_order(a, foc, cfg.solver, cfg.psi_mode, false);
  double removed = 0.0;
  ScalarField f = bump_source(g, cfg.macro.centre(g), cfg.macro.source_radius(g), &removed);
  MacroscopicSolution macro = make_macroscopic(foc.a_hom, soc.a1, soc.eps_scale, std::move(f), removed);
  ErrorReport errors = error_report(a, macro, foc, soc, cfg.solver, cfg.macro);
  RStarDiagnostic rstar = estimate_rstar(foc, cfg.rstar_delta);
  return {std::move(a), std::move(foc), std::move(soc), std::move(macro), errors, std::move(rstar)};
}

RealizationRow run_realization(const ExperimentConfig& cfg, double ell, std::uint64_t seed) {
  RealizationRow row;
  row.d = cfg.d;
  row.n = cfg.n;
  row.L = cfg.L;
  row.ell = ell;
  row.seed = seed;
  row.a_hom = SmallMatrix(cfg.d);
  row.a1 = SymTensor3(cfg.d);
  const auto start = std::chrono::steady_clock::now();
  try {
    const RealizationPipeline p = run_pipeline(cfg, ell, seed);
    row.a_hom = p.foc.a_hom;
    row.a1 = p.soc.a1;
    row.rstar = p.rstar.r_star;
    row.errors = p.errors;
    for (const auto& s : p.foc.stats) row.corrector_stats.iterations = std::max(row.corrector_stats.iterations, s.iterations);
    for (const auto& s : p.soc.stats) row.corrector_stats.iterations = std::max(row.corrector_stats.iterations, s.iterations);
    if (!row.errors.finite()) {
      row.failed = true;
      row.message = "non-finite error norm";
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.message = e.what();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

FitResult fit_exponent(const std::vector<FitPoint>& points) {
  const std::size_t m = points.size();
  if (m < 3) throw Error(Errc::DegenerateFit, "exponent fit needs at least 3 points");
  bool unit = false;
  for (const auto& p : points) {
    if (!(p.x > 0.0) || !(p.e > 0.0) || !std::isfinite(p.x) || !std::isfinite(p.e))
      throw Error(Errc::DegenerateFit, "exponent fit needs positive finite data");
    if (!(p.s > 0.0) || !std::isfinite(p.s)) unit = true;
  }
  // log v relative to the first point, with the binary exponent split off exactly.
  auto rel_log = [](double v, double ref) {
    int pv = 0, pr = 0;
    const double mv = std::frexp(v, &pv);
    const double mr = std::frexp(ref, &pr);
    return static_cast<double>(pv - pr) * std::numbers::ln2 + (std::log(mv) - std::log(mr));
  };
  std::vector<double> X(m), Y(m), W(m);
  for (std::size_t i = 0; i < m; ++i) {
    X[i] = rel_log(points[i].x, points[0].x);
    Y[i] = rel_log(points[i].e, points[0].e);
    W[i] = unit ? 1.0 : (points[i].e / points[i].s) * (points[i].e / points[i].s);
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sw += W[i];
    sx += W[i] * X[i];
    sy += W[i] * Y[i];
  }
  const double xb = sx / sw, yb = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += W[i] * (X[i] - xb) * (X[i] - xb);
    sxy += W[i] * (X[i] - xb) * (Y[i] - yb);
  }
  if (!(sxx > 0.0)) throw Error(Errc::DegenerateFit, "all abscissae are equal");
  FitResult out;
  out.points = static_cast<int>(m);
  out.slope = sxy / sxx;
  const double b = yb - out.slope * xb;
  out.intercept = b + std::log(points[0].e) - out.slope * std::log(points[0].x);
  double rss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = Y[i] - (b + out.slope * X[i]);
    rss += W[i] * r * r;
  }
  out.stderr_slope = m > 2 ? std::sqrt(rss / static_cast<double>(m - 2) / sxx) : 0.0;
  return out;
}

double theorem_target(int d) {
  if (d == 3) return 1.5;
  if (d >= 4) return 2.0;
  return kNaN;
}

void summarize(SweepResult& result) {
  const ExperimentConfig& cfg = result.config;
  result.points.clear();
  result.excluded = 0;
  for (const auto& r : result.rows)
    if (r.failed) ++result.excluded;
  int ok = 0;
  for (double ell : cfg.ells) {
    std::vector<double> hm1, h1, l2e, l2;
    for (const auto& r : result.rows) {
      if (r.failed || r.ell != ell) continue;
      hm1.push_back(r.errors.err_Hm1_ball);
      h1.push_back(r.errors.err_H1_twoscale2);
      l2e.push_back(r.errors.err_L2_exp1);
      l2.push_back(r.errors.err_L2_ball);
    }
    PointStats p;
    p.ell = ell;
    p.count = static_cast<int>(hm1.size());
    ok += p.count;
    if (p.count > 0) {
      const MeanSe a = mean_se(hm1), b = mean_se(h1), c = mean_se(l2e), e = mean_se(l2);
      p.mean_Hm1 = a.mean, p.se_Hm1 = a.se;
      p.mean_H1 = b.mean, p.se_H1 = b.se;
      p.mean_L2exp1 = c.mean, p.se_L2exp1 = c.se;
      p.mean_L2 = e.mean, p.se_L2 = e.se;
    }
    result.points.push_back(p);
  }
  if (ok == 0) throw Error(Errc::Validation, "no successful realizations");
  auto fit = [&](double PointStats::*mean, double PointStats::*se) -> std::optional<FitResult> {
    std::vector<FitPoint> pts;
    for (const auto& p : result.points)
      if (p.count > 0) pts.push_back({p.ell / cfg.L, p.*mean, p.*se});
    try {
      return fit_exponent(pts);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  result.fit_Hm1 = fit(&PointStats::mean_Hm1, &PointStats::se_Hm1);
  result.fit_H1 = fit(&PointStats::mean_H1, &PointStats::se_H1);
  result.fit_L2exp1 = fit(&PointStats::mean_L2exp1, &PointStats::se_L2exp1);
  result.label = cfg.d >= 3 ? "" : "outside theorem hypotheses (d < 3)";
}

SweepResult sweep(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  SweepResult result;
  result.config = cfg;
  const std::size_t per = static_cast<std::size_t>(cfg.seeds);
  result.rows.resize(cfg.ells.size() * per);
  parallel_for(result.rows.size(), threads, [&](std::size_t t) {
    const double ell = cfg.ells[t / per];
    result.rows[t] = run_realization(cfg, ell, cfg.first_seed + t % per);
  });
  summarize(result);
  return result;
}

SweepResult synthetic_sweep(const ExperimentConfig& cfg, double exponent, double c) {
  SweepResult result;
  result.config = cfg;
  for (double ell : cfg.ells)
    for (int s = 0; s < cfg.seeds; ++s) {
      RealizationRow row;
      row.d = cfg.d;
      row.n = cfg.n;
      row.L = cfg.L;
      row.ell = ell;
      row.seed = cfg.first_seed + static_cast<std::uint64_t>(s);
      row.a_hom = SmallMatrix::identity(cfg.d);
      row.a1 = SymTensor3(cfg.d);
      const double e = c * std::pow(ell / cfg.L, exponent);
      row.errors.err_L2_ball = e;
      row.errors.err_Hm1_ball = e;
      row.errors.err_H1_twoscale2 = e;
      row.errors.err_L2_exp1 = e;
      result.rows.push_back(row);
    }
  summarize(result);
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  const int d = result.config.d;
  std::string out = "d,n,L,ell,seed";
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out += fmt::format(",ahom_{}{}", i, j);
  for (const auto& t : sorted_triples(d)) out += fmt::format(",a1_{}{}{}", t[0], t[1], t[2]);
  out += ",rstar,err_L2_ball,err_Hm1_ball,err_H1_twoscale2,err_L2_exp1,fail_flag\n";
  for (const auto& r : result.rows) {
    out += fmt::format("{},{},{},{},{}", r.d, r.n, num(r.L), num(r.ell), r.seed);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out += "," + num(r.failed ? kNaN : r.a_hom(i, j));
    for (std::size_t s = 0; s < r.a1.stored_count(); ++s) out += "," + num(r.failed ? kNaN : r.a1.stored(s));
    const ErrorReport& e = r.errors;
    for (double v : {r.rstar, e.err_L2_ball, e.err_Hm1_ball, e.err_H1_twoscale2, e.err_L2_exp1})
      out += "," + num(r.failed ? kNaN : v);
    out += r.failed ? ",1\n" : ",0\n";
  }
  return out;
}

std::string summary_json(const SweepResult& result) {
  const ExperimentConfig& cfg = result.config;
  nlohmann::json j;
  j["d"] = cfg.d;
  j["n"] = cfg.n;
  j["L"] = cfg.L;
  j["seeds"] = cfg.seeds;
  j["master_seed"] = cfg.master_seed;
  j["symmetric"] = cfg.deterministic ? true : cfg.map.symmetric;
  j["ells"] = cfg.ells;
  j["rows"] = result.rows.size();
  j["excluded"] = result.excluded;
  j["label"] = result.label;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : result.points)
    pts.push_back({{"ell", p.ell},
                   {"eps", p.ell / cfg.L},
                   {"count", p.count},
                   {"err_Hm1_ball", {p.mean_Hm1, p.se_Hm1}},
                   {"err_H1_twoscale2", {p.mean_H1, p.se_H1}},
                   {"err_L2_exp1", {p.mean_L2exp1, p.se_L2exp1}},
                   {"err_L2_ball", {p.mean_L2, p.se_L2}}});
  j["points"] = pts;
  const double target = theorem_target(cfg.d);
  j["fits"] = {{"err_Hm1_ball", fit_json(result.fit_Hm1, target)},
               {"err_H1_twoscale2", fit_json(result.fit_H1, target)},
               {"err_L2_exp1", fit_json(result.fit_L2exp1, cfg.d >= 3 ? 1.0 : kNaN)}};
  return j.dump(2) + "\n";
}

void write_sweep(const std::string& dir, const SweepResult& result) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream os(std::filesystem::path(dir) / name, std::ios::binary);
    if (!os) throw Error(Errc::Io, "cannot write " + name);
    os << text;
    if (!os) throw Error(Errc::Io, "write failed for " + name);
  };
  put("sweep.csv", sweep_csv(result));
  put("summary.json", summary_json(result));
}

A1Study symmetric_a1_study(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  if (!cfg.deterministic && !cfg.map.symmetric) throw Error(Errc::Validation, "a1 study needs a symmetric ensemble");
  if (cfg.seeds < 16) throw Error(Errc::Validation, "a1 study needs at least 16 seeds");
  const double ell = cfg.ells.front();
  std::vector<SymTensor3> a1(static_cast<std::size_t>(cfg.seeds), SymTensor3(cfg.d));
  parallel_for(a1.size(), threads, [&](std::size_t s) {
    const CoefficientField a = cfg.field(ell, cfg.first_seed + s);
    const FirstOrderCorrectors foc = solve_first_order(a, cfg.solver);
    a1[s] = solve_second_order(a, foc, cfg.solver, PsiMode::Symmetrized, false).a1;
  });
  A1Study out;
  out.seeds = cfg.seeds;
  double norm = 0.0;
  for (std::size_t c = 0; c < a1.front().stored_count(); ++c) {
    std::vector<double> v;
    for (const auto& t : a1) v.push_back(t.stored(c));
    const MeanSe m = mean_se(v);
    const double z = m.se > 0.0 ? m.mean / m.se : (m.mean == 0.0 ? 0.0 : std::copysign(INFINITY, m.mean));
    out.mean.push_back(m.mean);
    out.stderr_.push_back(m.se);
    out.z.push_back(z);
    out.max_abs_z = std::max(out.max_abs_z, std::fabs(z));
    norm += m.mean * m.mean;
  }
  out.mean_norm = std::sqrt(norm);
  out.pass = out.max_abs_z <= 3.0;
  return out;
}

GrowthStudyResult corrector_growth_study(const ExperimentConfig& cfg, int octaves, int threads) {
  cfg.validate();
  if (octaves < 2) throw Error(Errc::Validation, "growth study needs at least 3 radii");
  const TorusGrid g = cfg.grid();
  const int d = cfg.d;
  GrowthStudyResult out;
  for (int m = 0; m <= octaves; ++m) out.radii.push_back(cfg.L / 4.0 * std::ldexp(1.0, m - octaves));
  std::vector<BallMask> balls;
  for (double r : out.radii) balls.push_back(ball_mask(g, torus_center(g), r));
  const std::size_t R = out.radii.size();
  const std::size_t S = static_cast<std::size_t>(cfg.seeds);
  std::vector<std::vector<double>> psi_s(S, std::vector<double>(R)), Psi_s(S, std::vector<double>(R)),
      phi_s(S, std::vector<double>(R)), both_s(S, std::vector<double>(R));

  // Mean-square deviation of one field from its ball average.
  auto spread = [](const ScalarField& u, const BallMask& b) {
    const double avg = mean_ball(u, b);
    CompensatedSum acc;
    for (std::size_t c : b.cells) acc.add((u[c] - avg) * (u[c] - avg));
    return acc.value() / static_cast<double>(b.count());
  };

  parallel_for(S, threads, [&](std::size_t s) {
    const CoefficientField a = cfg.field(cfg.ells.front(), cfg.first_seed + s);
    const FirstOrderCorrectors foc = solve_first_order(a, cfg.solver);
    const SecondOrderCorrectors soc = solve_second_order(a, foc, cfg.solver, PsiMode::Full, false);
    std::vector<double> psi2(R, 0.0), Psi2(R, 0.0), phi2(R, 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (std::size_t r = 0; r < R; ++r) psi2[r] += spread(soc.psi_at(i, j), balls[r]);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        // Psi_ij = Psi_ji, and each stored (k < l) slot also stands for (l, k).
        const double w = (i == j ? 1.0 : 2.0) * 2.0;
        for (const ScalarField& comp : solve_Psi_pair(soc.q1, i, j))
          for (std::size_t r = 0; r < R; ++r) Psi2[r] += w * spread(comp, balls[r]);
      }
    for (int i = 0; i < d; ++i)
      for (std::size_t r = 0; r < R; ++r) {
        const double h = hminus1_ball(foc.phi[static_cast<std::size_t>(i)], balls[r], 1e-9);
        phi2[r] += h * h;
      }
    for (std::size_t r = 0; r < R; ++r) {
      psi_s[s][r] = std::sqrt(psi2[r]);
      Psi_s[s][r] = std::sqrt(Psi2[r]);
      both_s[s][r] = std::sqrt(psi2[r] + Psi2[r]);
      phi_s[s][r] = std::pow(out.radii[r], -0.5 * d) * std::sqrt(phi2[r]);
    }
  });
  out.seeds = cfg.seeds;
  for (std::size_t r = 0; r < R; ++r) {
    MeanSe v = to_fit_stats(psi_s, r);
    out.psi_osc.push_back(v.mean), out.psi_se.push_back(v.se);
    v = to_fit_stats(Psi_s, r);
    out.Psi_osc.push_back(v.mean), out.Psi_se.push_back(v.se);
    v = to_fit_stats(both_s, r);
    out.combined_osc.push_back(v.mean), out.combined_se.push_back(v.se);
    v = to_fit_stats(phi_s, r);
    out.phi_hm1.push_back(v.mean), out.phi_se.push_back(v.se);
  }
  auto safe_fit = [&](const std::vector<double>& m, const std::vector<double>& se) {
    try {
      return fit_rows(out.radii, m, se);
    } catch (const Error&) {
      FitResult f;
      f.slope = kNaN;
      f.stderr_slope = kNaN;
      return f;
    }
  };
  out.psi_fit = safe_fit(out.psi_osc, out.psi_se);
  out.Psi_fit = safe_fit(out.Psi_osc, out.Psi_se);
  out.combined_fit = safe_fit(out.combined_osc, out.combined_se);
  out.phi_fit = safe_fit(out.phi_hm1, out.phi_se);
  return out;
}

RStarTail rstar_tail_study(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  if (cfg.seeds < 64) throw Error(Errc::Validation, "r* tail study needs at least 64 seeds");
  const TorusGrid g = cfg.grid();
  RStarTail out;
  out.rstar.resize(static_cast<std::size_t>(cfg.seeds));
  parallel_for(out.rstar.size(), threads, [&](std::size_t s) {
    const CoefficientField a = cfg.field(cfg.ells.front(), cfg.first_seed + s);
    out.rstar[s] = estimate_rstar(solve_first_order(a, cfg.solver), cfg.rstar_delta).r_star;
  });
  for (double r = g.spacing(); at_most(r, cfg.L / 2.0); r *= 2.0) out.radii.push_back(r);
  const double N = static_cast<double>(out.rstar.size());
  for (double r : out.radii) {
    const double count = static_cast<double>(std::count_if(out.rstar.begin(), out.rstar.end(),
                                                           [&](double v) { return v > r * (1.0 + 1e-12); }));
    out.survival.push_back(count / N);
    out.log_survival.push_back(count > 0.0 ? std::log(count / N) : kNaN);
  }
  out.nonincreasing = true;
  for (std::size_t i = 1; i < out.survival.size(); ++i)
    if (out.survival[i] > out.survival[i - 1]) out.nonincreasing = false;
  // concavity of r -> log P(r* > r) where finite: chord slopes must not increase
  out.concave = true;
  for (std::size_t i = 2; i < out.log_survival.size(); ++i) {
    const double a = out.log_survival[i - 2], b = out.log_survival[i - 1], c = out.log_survival[i];
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) continue;
    const double left = (b - a) / (out.radii[i - 1] - out.radii[i - 2]);
    const double right = (c - b) / (out.radii[i] - out.radii[i - 1]);
    if (right > left + 1e-12 * std::fabs(left)) out.concave = false;
  }
  const double quarter = cfg.L / 4.0;
  out.tail_mass = static_cast<double>(std::count_if(out.rstar.begin(), out.rstar.end(),
                                                    [&](double v) { return v > quarter * (1.0 + 1e-12); })) /
                  N;
  return out;
}

}  // namespace homoglab
