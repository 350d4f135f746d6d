#include <iostream>

#include <CLI11.hpp>

#include "parobs/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Observability and control experiments for 1-D parabolic equations"};
  app.set_help_all_flag("--help-all");

  parobs::RunOptions options;
  std::string out;
  std::uint64_t seed = 0;
  int workers = 0;
  app.add_option("subcommand", options.subcommand, "One of: solve, adjoint, density-seq, constants, "
                                                   "check-lemmas, kappa, null-control, norm-optimal, "
                                                   "time-optimal, improve, sweep")
      ->required()
      ->check(CLI::IsMember(parobs::subcommands()));
  app.add_option("--config", options.config_path, "Experiment config (JSON)")->required();
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides run.output)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides run.seed)");
  auto* workers_opt =
      app.add_option("--workers", workers, "Concurrent sweep points (overrides run.workers)")
          ->check(CLI::PositiveNumber);
  app.add_flag("--force", options.force, "Allow writing into a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : parobs::kExitConfig;
  }
  if (*out_opt) options.out = out;
  if (*seed_opt) options.seed = seed;
  if (*workers_opt) options.workers = workers;

  const parobs::RunOutcome outcome = parobs::run(options);
  if (!outcome.message.empty()) std::cerr << "parobs: " << outcome.message << "\n";
  if (!outcome.report.is_null())
    std::cout << outcome.report.at("status").get<std::string>() << " " << (outcome.out_dir / "report.json").string()
              << "\n";
  return outcome.exit_code;
}
