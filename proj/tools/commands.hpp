#pragma once

#include <exception>
#include <iosfwd>
#include <optional>
#include <string>

#include "run_config.hpp"

namespace homoglab::cli {

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool dump_fields = false;
  bool dry_run = false;
};

/// Config with overrides applied; the thread count is resolved once here.
struct Invocation {
  RunConfig run;
  int threads = 1;
  bool dry_run = false;
};

Invocation make_invocation(RunConfig run, const Overrides& o);

/// coefficient.hgf + field.json (ellipticity report) for ell = ells[0], seed = first_seed.
void cmd_field(const Invocation& inv, std::ostream& log);
/// Corrector bundle and manifest.json (a_hom, a1, residuals, r_star).
void cmd_correctors(const Invocation& inv, std::ostream& log);
/// One full realization: realization.csv + errors.json.
void cmd_experiment(const Invocation& inv, std::ostream& log);
/// sweep.csv + summary.json; --dry-run injects e = (ell/L)^1.5 with no solves.
void cmd_sweep(const Invocation& inv, std::ostream& log);
/// Table of fitted exponents next to their targets.
void cmd_report(const std::string& summary_path, std::ostream& log);

/// 0 success, 2 validation error, 3 solver failure, 1 anything else.
int exit_code(const std::exception_ptr& e, std::string* message);

}  // namespace homoglab::cli
