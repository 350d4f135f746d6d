#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parobs/constants.hpp"
#include "parobs/io.hpp"
#include "parobs/pde.hpp"
#include "parobs/timeset.hpp"

namespace parobs {

inline constexpr int kSchemaVersion = 1;

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Coefficient field a(x,t) or b(x,t).
///   zero
///   constant     value
///   gaussian     amplitude·exp(-(x-center)²/width²)
///   oscillating  amplitude·sin(mode·π·(x-lo)/|Ω|)·cos(frequency·t)
///   polynomial   Σ coefficients[i]·x^i
struct FieldSpec {
  std::string kind = "zero";
  double value = 0.0;
  double amplitude = 0.0, center = 0.5, width = 0.1;
  int mode = 1;
  double frequency = 0.0;
  std::vector<double> coefficients;
};

FieldSampler make_sampler(const FieldSpec& spec, const Domain& domain);

struct ProblemBlock {
  Domain domain;
  double horizon = 1.0;
  int nx = 128;
  int nt = 512;
  int q = 2;
  double theta = 0.5;
  FieldSpec potential, drift;
};

struct GeometryBlock {
  double omega_lo = 0.0, omega_hi = 0.0;
  double x0 = 0.0, r = 0.0;
};

/// interval (lo, hi) | union of intervals | fat_cantor of given depth, then
/// optionally shrunk by `fraction`.
struct TimeSetBlock {
  std::string kind = "interval";
  double lo = 0.0, hi = 0.0;
  std::vector<Interval> intervals;
  int depth = 1;
  double fraction = 1.0;
};

TimeSet build_timeset(const TimeSetBlock& block, double horizon);

/// Initial or terminal data: sine-mode coefficients on Ω, or `count` seeded
/// random modes with 1/j amplitudes.
struct DataSpec {
  std::string kind = "modes";
  std::vector<double> coefficients{1.0};
  int count = 5;
};

Vector build_data(const DataSpec& spec, const ProblemSetup& setup, std::uint64_t seed);

struct DensityParams {
  std::optional<double> base;
  double ratio = 1.1547005383792515;  // √(4/3)
  int count = 8;
};

struct ConstantsParams {
  std::optional<double> ell, ell1;
};

struct LemmaParams {
  std::vector<double> lambdas{0.01, 0.1, 1.0};
  double L = 0.0;              // 0 selects T
  int samples = 10;
  int modes = 5;
  std::vector<double> eps_grid{1e-3, 1e-2, 1e-1};
  double tolerance = 1e-8;     // monotonicity violation bound
};

struct KappaParams {
  int basis = 8;
  int starts = 4;
  int sweeps = 25;
  int samples = 33;
};

struct NullControlParams {
  double tol = 1e-3;
  int max_iter = 500;
};

struct NormOptimalParams {
  double tau = 0.0;
  double tol = 1e-3;
  double radius = 1e-2;
  double gradient_tol = 1e-6;
  int max_iter = 200;
  bool random_start = false;
};

struct TimeOptimalParams {
  std::optional<double> bound;   // M
  double bound_factor = 1.5;     // M = factor·N(0) when bound is absent
  double tol = 0.0;              // 0 selects T/nt
};

/// The control to improve is the norm-optimal control on ω×(0,T) scaled by
/// (1 - slack) on E.
struct ImproveParams {
  double slack = 0.2;                  // ε as a fraction of M̃
  std::optional<double> kappa;         // estimated when absent
  double tol = 1e-3;
  std::string correction = "norm_optimal";  // norm_optimal | hum
};

struct SweepParams {
  std::string subcommand = "kappa";    // kappa | null-control
  std::string axis = "fraction";       // fraction | depth
  std::vector<double> values;
  bool warm_start = true;
};

struct RunBlock {
  std::uint64_t seed = 0x5eed;
  std::optional<std::string> output;
  int workers = 1;
  DataSpec initial, terminal;
  DensityParams density;
  ConstantsParams constants;
  LemmaParams lemmas;
  KappaParams kappa;
  NullControlParams null_control;
  NormOptimalParams norm_optimal;
  TimeOptimalParams time_optimal;
  ImproveParams improve;
  SweepParams sweep;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  ProblemBlock problem;
  std::optional<GeometryBlock> geometry;
  std::optional<TimeSetBlock> timeset;
  std::optional<StructuralConstants> constants;
  RunBlock run;
  Json source;  // the parsed document, for the report echo
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{
      "solve",        "adjoint",      "density-seq", "constants", "check-lemmas", "kappa",
      "null-control", "norm-optimal", "time-optimal", "improve",  "sweep"};
  return names;
}

/// Parses and validates against the schema. Unknown keys, wrong types and
/// out-of-range values throw ConfigError with the field path.
ExperimentConfig parse_config(const Json& document);
ExperimentConfig load_config(const std::string& path);

/// Checks that the blocks the subcommand reads are present.
void require_blocks(const ExperimentConfig& config, const std::string& subcommand);

SetupPtr build_setup(const ProblemBlock& block);
ObservationGeometry build_geometry(const GeometryBlock& block, const Domain& domain);

}  // namespace parobs
