#include "parobs/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

namespace parobs {

namespace {

void append_number(std::string& out, double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), res.ptr);
}

template <typename T>
void put_le(std::ofstream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::ifstream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!is) throw InvalidArgument("binary dump truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

constexpr char kMagic[8] = {'P', 'A', 'R', 'O', 'B', 'S', '0', '1'};

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

}  // namespace

Json to_json(const TimeSet& set) {
  Json intervals = Json::array();
  for (const Interval& iv : set.intervals()) intervals.push_back({iv.lo, iv.hi});
  return {{"horizon", set.horizon()}, {"intervals", intervals}};
}

TimeSet timeset_from_json(const Json& j) {
  require(j.is_object() && j.contains("horizon") && j.contains("intervals"),
          "time set JSON needs horizon and intervals");
  std::vector<Interval> raw;
  for (const Json& pair : j.at("intervals")) {
    require(pair.is_array() && pair.size() == 2, "time set intervals are [lo, hi] pairs");
    raw.push_back({pair[0].get<double>(), pair[1].get<double>()});
  }
  return TimeSet::normalize(std::move(raw), j.at("horizon").get<double>()).set;
}

Json to_json(const ConstantChain& c) {
  Json j;
  j["p"] = c.p;
  j["A"] = c.A;
  j["K"] = c.K;
  j["beta"] = c.beta;
  j["beta_half"] = c.beta_half;
  j["log_beta"] = c.log_beta;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["z"] = c.z;
  j["z_minus_one"] = c.z_minus_one;
  j["eta"] = c.eta ? Json(*c.eta) : Json(nullptr);
  j["ell"] = c.ell ? Json(*c.ell) : Json(nullptr);
  j["ell1"] = c.ell1 ? Json(*c.ell1) : Json(nullptr);
  j["m0"] = c.m0;
  j["C"] = c.C;
  j["d"] = c.d;
  j["C0"] = c.C0;
  j["c"] = c.c;
  j["inputs"] = {{"T", c.inputs.horizon}, {"a_norm", c.inputs.a_norm}, {"b_norm", c.inputs.b_norm},
                 {"r", c.inputs.r},       {"n", c.inputs.n},           {"q", c.inputs.q}};
  return j;
}

Json to_json(const ObservationGeometry& g) {
  return {{"omega", {g.omega_lo, g.omega_hi}}, {"x0", g.x0}, {"r", g.r}, {"m0", g.m0}};
}

Json to_json(const DensitySequence& s) {
  Json verified = Json::array();
  for (bool v : s.verified) verified.push_back(v);
  return {{"base", s.base},
          {"first", s.first},
          {"ratio", s.ratio},
          {"points", s.points},
          {"gaps", s.gaps},
          {"gap_mass", s.gap_mass},
          {"verified", verified},
          {"epsilon", s.epsilon},
          {"theta_o", s.theta_o},
          {"first_within_theta_o", s.first_within_theta_o},
          {"scan_steps", s.scan_steps}};
}

Json to_json(const BangBangStats& s) {
  return {{"mean", s.mean}, {"min", s.min},   {"max", s.max},
          {"cv", s.cv},     {"deviation_measure", s.deviation_measure}, {"slices", s.slices}};
}

Json to_json(const ArtifactEntry& e) { return {{"path", e.path}, {"bytes", e.bytes}}; }

Json control_sidecar(const ControlField& f) {
  return {{"omega", {f.geometry.omega_lo, f.geometry.omega_hi}},
          {"omega_nodes", {f.omega.begin, f.omega.end}},
          {"tau", f.tau},
          {"support", to_json(f.support)},
          {"weights", std::vector<double>(f.weights.data(), f.weights.data() + f.weights.size())},
          {"layout", "values.col(k) is the control on (t_{k-1}, t_k); the solver source is weights[k]*values"}};
}

void ArtifactWriter::record(const std::string& name) {
  entries_.push_back({name, std::filesystem::file_size(root_ / name)});
}

void ArtifactWriter::text(const std::string& name, const std::string& content) {
  {
    std::ofstream os = open_out(root_ / name, true);
    os << content;
  }
  record(name);
}

void ArtifactWriter::json(const std::string& name, const Json& content) {
  text(name, content.dump(2) + "\n");
}

void ArtifactWriter::csv(const std::string& name, const ProblemSetup& setup, const Matrix& columns) {
  require(columns.rows() == setup.nx(), "CSV export expects one row per interior node");
  std::string out = "t";
  for (int i = 0; i < setup.nx(); ++i) {
    out += ',';
    append_number(out, setup.node(i));
  }
  out += '\n';
  for (Eigen::Index k = 0; k < columns.cols(); ++k) {
    append_number(out, setup.time(static_cast<int>(k)));
    for (Eigen::Index i = 0; i < columns.rows(); ++i) {
      out += ',';
      append_number(out, columns(i, k));
    }
    out += '\n';
  }
  text(name, out);
}

void ArtifactWriter::binary(const std::string& name, const ProblemSetup& setup, const Matrix& columns) {
  require(columns.rows() == setup.nx(), "binary export expects one row per interior node");
  {
    std::ofstream os = open_out(root_ / name, true);
    os.write(kMagic, sizeof(kMagic));
    put_le<std::int64_t>(os, setup.nx());
    put_le<std::int64_t>(os, columns.cols() - 1);
    put_le<double>(os, setup.horizon());
    put_le<double>(os, setup.domain().lo);
    put_le<double>(os, setup.domain().hi);
    for (Eigen::Index k = 0; k < columns.cols(); ++k)
      for (Eigen::Index i = 0; i < columns.rows(); ++i) put_le<double>(os, columns(i, k));
  }
  record(name);
}

void ArtifactWriter::timeset_csv(const std::string& name, const TimeSet& set) {
  std::string out = "lo,hi\n";
  for (const Interval& iv : set.intervals()) {
    append_number(out, iv.lo);
    out += ',';
    append_number(out, iv.hi);
    out += '\n';
  }
  text(name, out);
}

void ArtifactWriter::trajectory(const std::string& stem, const Trajectory& traj) {
  csv(stem + ".csv", *traj.setup, traj.states);
  binary(stem + ".bin", *traj.setup, traj.states);
}

void ArtifactWriter::control(const std::string& stem, const ControlField& field) {
  csv(stem + ".csv", *field.setup, field.values);
  binary(stem + ".bin", *field.setup, field.values);
  json(stem + ".json", control_sidecar(field));
}

BinaryDump read_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot read " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InvalidArgument(path.string() + " is not a parobs binary dump");
  BinaryDump d;
  d.nx = get_le<std::int64_t>(is);
  d.nt = get_le<std::int64_t>(is);
  d.horizon = get_le<double>(is);
  d.lo = get_le<double>(is);
  d.hi = get_le<double>(is);
  require(d.nx > 0 && d.nt >= 0, "binary dump header has invalid sizes");
  d.columns.resize(d.nx, d.nt + 1);
  for (Eigen::Index k = 0; k <= d.nt; ++k)
    for (Eigen::Index i = 0; i < d.nx; ++i) d.columns(i, k) = get_le<double>(is);
  return d;
}

}  // namespace parobs
