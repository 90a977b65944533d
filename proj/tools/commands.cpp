#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "homoglab/cellsolve.hpp"
#include "homoglab/error.hpp"
#include "homoglab/hgf1.hpp"

namespace homoglab::cli {
namespace {

namespace fs = std::filesystem;

void put_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(Errc::Io, "write failed for " + path.string());
}

/// Output directory with the config archived next to the artifacts.
fs::path prepare_out(const Invocation& inv) {
  const fs::path dir(inv.run.out);
  fs::create_directories(dir);
  put_file(dir / "config.ini", inv.run.text);
  return dir;
}

double first_ell(const ExperimentConfig& cfg) { return cfg.ells.front(); }

nlohmann::json matrix_json(const SmallMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.d; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.d; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json a1_json(const SymTensor3& t) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t s = 0; s < t.stored_count(); ++s) {
    const auto ijk = t.triple(s);
    out[fmt::format("{}{}{}", ijk[0], ijk[1], ijk[2])] = t.stored(s);
  }
  return out;
}

double max_residual(const std::vector<SolveStats>& st) {
  double r = 0.0;
  for (const auto& s : st) r = std::max(r, s.rel_residual);
  return r;
}

nlohmann::json rstar_json(const RStarDiagnostic& r) {
  return {{"r_star", r.r_star}, {"capped", r.capped}, {"delta", r.delta}};
}

void require_elliptic(const CoefficientField& a, const EllipticityReport& rep) {
  if (rep.violations > 0)
    throw Error(Errc::Validation,
                fmt::format("ellipticity violated in {} cells (min eigenvalue {} < lambda {}, max norm {})",
                            rep.violations, rep.min_eigenvalue, a.lambda, rep.max_norm));
}

}  // namespace

Invocation make_invocation(RunConfig run, const Overrides& o) {
  Invocation inv;
  if (o.out) run.out = *o.out;
  if (o.seed) run.experiment.master_seed = *o.seed;
  if (o.dump_fields) run.dump_fields = true;
  inv.threads = resolve_threads(o.threads, run);
  inv.dry_run = o.dry_run;
  inv.run = std::move(run);
  return inv;
}

void cmd_field(const Invocation& inv, std::ostream& log) {
  const ExperimentConfig& cfg = inv.run.experiment;
  cfg.validate();
  const fs::path dir = prepare_out(inv);
  const CoefficientField a = cfg.field(first_ell(cfg), cfg.first_seed);
  const EllipticityReport rep = validate_ellipticity(a);
  require_elliptic(a, rep);
  write_hgf1((dir / "coefficient.hgf").string(), a.grid(), 2, [&](std::size_t c) { return a.a.comp[c]; });
  const nlohmann::json j = {
      {"provenance", a.provenance},   {"lambda", a.lambda},
      {"upper", a.upper},             {"symmetric", a.symmetric},
      {"min_eigenvalue", rep.min_eigenvalue}, {"max_norm", rep.max_norm},
      {"violations", rep.violations}, {"max_asymmetry", rep.max_asymmetry},
      {"rescale_events", a.rescale_events}, {"average", matrix_json(a.average())},
  };
  put_file(dir / "field.json", j.dump(2) + "\n");
  log << fmt::format("field {}: min eig {:.6g} (lambda {:.6g}), max |a| {:.6g}, asymmetry {:.3g}\n", a.provenance,
                     rep.min_eigenvalue, a.lambda, rep.max_norm, rep.max_asymmetry);
  log << fmt::format("wrote {}\n", (dir / "coefficient.hgf").string());
}

void cmd_correctors(const Invocation& inv, std::ostream& log) {
  const ExperimentConfig& cfg = inv.run.experiment;
  cfg.validate();
  const fs::path dir = prepare_out(inv);
  const CoefficientField a = cfg.field(first_ell(cfg), cfg.first_seed);
  require_elliptic(a, validate_ellipticity(a));
  const FirstOrderCorrectors foc = solve_first_order(a, cfg.solver, inv.threads);
  const SecondOrderCorrectors soc =
      solve_second_order(a, foc, cfg.solver, cfg.psi_mode, inv.run.dump_fields, inv.threads);
  const RStarDiagnostic rstar = estimate_rstar(foc, cfg.rstar_delta);
  const double sigma_res = check_sigma_divergence(a, foc).max_relative();
  const nlohmann::json extra = {
      {"residuals",
       {{"phi", max_residual(foc.stats)}, {"psi", max_residual(soc.stats)}, {"sigma_divergence", sigma_res}}},
      {"a1_stored", a1_json(soc.a1)},
      {"rstar", rstar_json(rstar)},
      {"master_seed", cfg.master_seed},
      {"seed", cfg.first_seed},
      {"ell", first_ell(cfg)},
  };
  write_corrector_bundle(dir.string(), a, foc, &soc, extra.dump());
  log << fmt::format("a_hom =\n{}\n", foc.a_hom.to_string());
  double a1max = 0.0;
  for (std::size_t s = 0; s < soc.a1.stored_count(); ++s) a1max = std::max(a1max, std::abs(soc.a1.stored(s)));
  log << fmt::format("max |a1| = {:.6g}, r* = {:.6g}, phi residual {:.3g}, psi residual {:.3g}\n", a1max,
                     rstar.r_star, max_residual(foc.stats), max_residual(soc.stats));
  log << fmt::format("wrote {}\n", (dir / "manifest.json").string());
}

void cmd_experiment(const Invocation& inv, std::ostream& log) {
  const ExperimentConfig& cfg = inv.run.experiment;
  cfg.validate();
  const fs::path dir = prepare_out(inv);
  const double ell = first_ell(cfg);
  const RealizationPipeline p = run_pipeline(cfg, ell, cfg.first_seed);
  if (!p.errors.finite()) throw SolverError("non-finite error norm", p.errors.stats);

  SweepResult one;
  one.config = cfg;
  RealizationRow row;
  row.d = cfg.d, row.n = cfg.n, row.L = cfg.L, row.ell = ell, row.seed = cfg.first_seed;
  row.a_hom = p.foc.a_hom;
  row.a1 = p.soc.a1;
  row.rstar = p.rstar.r_star;
  row.errors = p.errors;
  one.rows.push_back(row);
  put_file(dir / "realization.csv", sweep_csv(one));

  const ErrorReport& e = p.errors;
  const nlohmann::json j = {
      {"ell", ell},
      {"seed", cfg.first_seed},
      {"master_seed", cfg.master_seed},
      {"a_hom", matrix_json(p.foc.a_hom)},
      {"a1_stored", a1_json(p.soc.a1)},
      {"rstar", rstar_json(p.rstar)},
      {"err_L2_ball", e.err_L2_ball},
      {"err_Hm1_ball", e.err_Hm1_ball},
      {"err_Hm1_ball_first", e.err_Hm1_ball_first},
      {"err_Hm1_ball_u1", e.err_Hm1_ball_u1},
      {"err_H1_twoscale2", e.err_H1_twoscale2},
      {"err_L2_exp1", e.err_L2_exp1},
      {"u_L2_ball", e.u_L2_ball},
      {"energy_rhs", e.energy_rhs},
      {"energy_bound", e.energy_bound},
      {"f_removed", e.f_removed},
      {"micro_iterations", e.stats.iterations},
      {"micro_rel_residual", e.stats.rel_residual},
  };
  put_file(dir / "errors.json", j.dump(2) + "\n");
  if (inv.run.dump_fields) write_corrector_bundle((dir / "fields").string(), p.a, p.foc, &p.soc);
  log << fmt::format("ell {:.6g} seed {}: H-1(B) {:.6g}, H1 two-scale {:.6g}, L2 first-order {:.6g}, r* {:.6g}\n",
                     ell, cfg.first_seed, e.err_Hm1_ball, e.err_H1_twoscale2, e.err_L2_exp1, p.rstar.r_star);
}

void cmd_sweep(const Invocation& inv, std::ostream& log) {
  const ExperimentConfig& cfg = inv.run.experiment;
  cfg.validate_scaling();
  const fs::path dir = prepare_out(inv);
  const SweepResult result = inv.dry_run ? synthetic_sweep(cfg, 1.5) : sweep(cfg, inv.threads);
  write_sweep(dir.string(), result);
  for (const auto& r : result.rows)
    if (r.failed) log << fmt::format("excluded ell {:.6g} seed {}: {}\n", r.ell, r.seed, r.message);
  log << fmt::format("wrote {} and {}\n", (dir / "sweep.csv").string(), (dir / "summary.json").string());
  cmd_report((dir / "summary.json").string(), log);
}

void cmd_report(const std::string& summary_path, std::ostream& log) {
  std::ifstream is(summary_path, std::ios::binary);
  if (!is) throw Error(Errc::Validation, "cannot open summary " + summary_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Validation, std::string("malformed summary: ") + e.what());
  }
  int ok = 0;
  for (const auto& p : j.value("points", nlohmann::json::array())) ok += p.value("count", 0);
  if (ok == 0) throw Error(Errc::Validation, "no successful realizations");

  log << fmt::format("d = {}, n = {}, L = {}, {} rows, {} excluded\n", j.at("d").get<int>(), j.at("n").get<int>(),
                     j.at("L").get<double>(), j.at("rows").get<int>(), j.at("excluded").get<int>());
  const std::string label = j.value("label", "");
  if (!label.empty()) log << "note: " << label << "\n";
  log << fmt::format("{:<18} {:>10} {:>10} {:>8} {:>7}\n", "quantity", "slope", "stderr", "target", "points");
  for (const char* q : {"err_Hm1_ball", "err_H1_twoscale2", "err_L2_exp1"}) {
    const auto& f = j.at("fits").at(q);
    const auto num = [](const nlohmann::json& v, const char* spec) {
      return v.is_null() ? std::string("n/a") : fmt::format(fmt::runtime(spec), v.get<double>());
    };
    log << fmt::format("{:<18} {:>10} {:>10} {:>8} {:>7}\n", q, num(f.at("slope"), "{:.4f}"),
                       num(f.value("stderr", nlohmann::json()), "{:.4f}"), num(f.at("target"), "{:.2f}"),
                       f.value("points", 0));
  }
}

int exit_code(const std::exception_ptr& e, std::string* message) {
  try {
    std::rethrow_exception(e);
  } catch (const Error& err) {
    if (message) *message = err.what();
    return err.code() == Errc::NoConvergence ? 3 : 2;
  } catch (const nlohmann::json::exception& err) {
    if (message) *message = err.what();
    return 2;
  } catch (const std::exception& err) {
    if (message) *message = err.what();
    return 1;
  }
}

}  // namespace homoglab::cli
