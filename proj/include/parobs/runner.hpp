#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "parobs/config.hpp"

namespace parobs {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitInvariant = 4,
};

struct RunOptions {
  std::string subcommand;
  std::string config_path;
  std::optional<std::string> out;       // overrides run.output
  std::optional<std::uint64_t> seed;    // overrides run.seed
  std::optional<int> workers;           // overrides run.workers
  bool force = false;
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::string message;                  // diagnostics for stderr
  std::filesystem::path out_dir;
  Json report;                          // empty on config errors
};

/// Loads the config, runs one subcommand and writes report.json,
/// timings.json and the artifacts into the output directory.
///
/// report.json holds the config echo (with the effective seed), the
/// operation report, the invariant checks and the manifest of artifact files.
/// It depends only on (config, seed); wall-clock timings go to timings.json,
/// which is not listed in the manifest.
RunOutcome run(const RunOptions& options);

/// Same for an already parsed config.
RunOutcome run(ExperimentConfig config, const std::string& subcommand,
               const std::filesystem::path& out_dir, bool force);

/// Every manifest entry exists with its declared size.
bool manifest_consistent(const Json& report, const std::filesystem::path& out_dir);

}  // namespace parobs
