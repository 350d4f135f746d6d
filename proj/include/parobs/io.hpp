#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "parobs/constants.hpp"
#include "parobs/control_field.hpp"
#include "parobs/frequency.hpp"
#include "parobs/pde.hpp"
#include "parobs/timeset.hpp"

namespace parobs {

using Json = nlohmann::ordered_json;

/// {"horizon": T, "intervals": [[lo, hi], ...]}.
Json to_json(const TimeSet& set);
TimeSet timeset_from_json(const Json& j);

Json to_json(const ConstantChain& chain);
Json to_json(const ObservationGeometry& geometry);
Json to_json(const DensitySequence& seq);
Json to_json(const BangBangStats& stats);

/// Written file and its size, as listed in run manifests.
struct ArtifactEntry {
  std::string path;  // relative to the output directory
  std::uintmax_t bytes = 0;
};

Json to_json(const ArtifactEntry& entry);

/// Collects files written below one output directory.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ArtifactEntry>& entries() const { return entries_; }

  void text(const std::string& name, const std::string& content);
  void json(const std::string& name, const Json& content);
  /// Rows are time levels k = 0..nt with t in the first column, then one
  /// column per interior node.
  void csv(const std::string& name, const ProblemSetup& setup, const Matrix& columns);
  /// Little-endian dump: magic "PAROBS01", int64 nx, int64 nt, double T,
  /// double lo, double hi, then (nt+1)·nx doubles, one time level per row.
  void binary(const std::string& name, const ProblemSetup& setup, const Matrix& columns);
  void timeset_csv(const std::string& name, const TimeSet& set);

  /// Trajectory as <stem>.csv and <stem>.bin.
  void trajectory(const std::string& stem, const Trajectory& traj);
  /// Control values as <stem>.csv and <stem>.bin plus the <stem>.json
  /// sidecar with the support description.
  void control(const std::string& stem, const ControlField& field);

 private:
  void record(const std::string& name);

  std::filesystem::path root_;
  std::vector<ArtifactEntry> entries_;
};

Json control_sidecar(const ControlField& field);

struct BinaryDump {
  std::int64_t nx = 0, nt = 0;
  double horizon = 0.0, lo = 0.0, hi = 0.0;
  Matrix columns;  // nx × (nt+1)
};

BinaryDump read_binary(const std::filesystem::path& path);

}  // namespace parobs
