#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "homoglab/experiments.hpp"

namespace homoglab::cli {

/// INI run configuration.  Sections and keys:
///   [grid]       d, n, L
///   [field]      kind = random | constant | laminate | checkerboard | skew_profile | trig_polynomial,
///                matrix (row-major, d*d numbers), axis, value1, value2, period,
///                alpha_mean, alpha_amp, beta_mean, beta_amp
///   [ensemble]   covariance = gaussian_bump | exponential, variance, lambda, symmetric,
///                skew_amplitude, skew_correlation, skew_shift
///   [experiment] ells (absolute) or ells_over_L, seeds, first_seed, master_seed,
///                psi_mode = symmetrized | full, scale_guard, rstar_delta
///   [macro]      f_radius, ball_radius, center (d numbers)
///   [solver]     rel_tol, max_iter, method = auto | cg | bicgstab
///   [run]        out, threads, dump_fields
/// Lists are separated by commas or whitespace.  Unknown sections or keys are rejected.
struct RunConfig {
  ExperimentConfig experiment;
  std::string out = "out";
  std::optional<int> threads;
  bool dump_fields = false;
  /// Verbatim config text, archived next to the outputs.
  std::string text;
};

/// Throws Error(Validation) naming the offending key.  Physical parameters are not
/// validated here; every command calls the experiment validators before solving.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// --threads flag, then [run] threads, then HOMOGLAB_THREADS, then 1.
int resolve_threads(std::optional<int> flag, const RunConfig& cfg);

}  // namespace homoglab::cli
