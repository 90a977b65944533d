// homoglab: batch front end for the corrector, two-scale and scaling pipelines.

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "homoglab/error.hpp"

using namespace homoglab::cli;

int main(int argc, char** argv) {
  CLI::App app{"Stochastic homogenization laboratory"};
  app.require_subcommand(1);

  std::string config;
  std::string summary;
  Overrides o;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config, "INI run configuration")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    sub->add_option("--out", out, "output directory (overrides [run] out)");
    sub->add_option("--seed", seed, "master seed (overrides [experiment] master_seed)");
    sub->add_option("--threads", threads, "worker threads (overrides [run] threads and HOMOGLAB_THREADS)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--dump-fields", o.dump_fields, "also write corrector fields as HGF1");
  };

  auto* field = app.add_subcommand("field", "sample a coefficient field and check ellipticity");
  auto* correctors = app.add_subcommand("correctors", "solve first- and second-order correctors");
  auto* experiment = app.add_subcommand("experiment", "one realization of the full error pipeline");
  auto* sweep = app.add_subcommand("sweep", "error-scaling sweep over correlation lengths and seeds");
  auto* report = app.add_subcommand("report", "fitted exponents from a summary.json");
  for (auto* s : {field, correctors, experiment, sweep}) add_common(s, true);
  sweep->add_flag("--dry-run", o.dry_run, "inject synthetic errors (ell/L)^1.5, no solves");
  report->add_option("summary", summary, "summary.json (default <out>/summary.json)");
  report->add_option("--out", out, "directory holding summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string message;
  try {
    if (report->parsed()) {
      if (summary.empty()) summary = (out.empty() ? std::string("out") : out) + "/summary.json";
      cmd_report(summary, std::cout);
      return 0;
    }
    for (auto* s : {field, correctors, experiment, sweep}) {
      if (!s->parsed()) continue;
      if (s->count("--out")) o.out = out;
      if (s->count("--seed")) o.seed = seed;
      if (s->count("--threads")) o.threads = threads;
    }
    const Invocation inv = make_invocation(load_run_config(config), o);
    if (field->parsed()) cmd_field(inv, std::cout);
    if (correctors->parsed()) cmd_correctors(inv, std::cout);
    if (experiment->parsed()) cmd_experiment(inv, std::cout);
    if (sweep->parsed()) cmd_sweep(inv, std::cout);
    return 0;
  } catch (...) {
    const int code = exit_code(std::current_exception(), &message);
    std::cerr << "error: " << message << "\n";
    return code;
  }
}
