#include "parobs/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "parobs/random.hpp"

namespace parobs {

namespace {

/// One JSON object under validation. Every key read is marked; finish()
/// rejects whatever is left.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }

  Node child(const std::string& key) {
    seen_.insert(key);
    return Node(j_.at(key), at(key));
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    out = as_number(raw(key), at(key));
  }

  void number(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    if (j_.at(key).is_null()) {
      seen_.insert(key);
      out.reset();
      return;
    }
    out = as_number(raw(key), at(key));
  }

  void integer(const std::string& key, int& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    const auto value = v.get<std::int64_t>();
    if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max())
      throw ConfigError(at(key), "integer out of range");
    out = static_cast<int>(value);
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(at(key), "expected an unsigned 64-bit integer");
    out = v.get<std::uint64_t>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    out = v.get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    out = v.get<std::string>();
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const Json& v = raw(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(as_number(v[i], at(key) + "[" + std::to_string(i) + "]"));
  }

  void pair(const std::string& key, double& lo, double& hi) {
    if (!has(key)) return;
    std::vector<double> v;
    numbers(key, v);
    if (v.size() != 2) throw ConfigError(at(key), "expected [lo, hi]");
    lo = v[0];
    hi = v[1];
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

 private:
  static double as_number(const Json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
    return d;
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

void one_of(const std::string& value, std::initializer_list<const char*> options,
            const std::string& path) {
  for (const char* o : options)
    if (value == o) return;
  std::string list;
  for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
  throw ConfigError(path, "must be one of " + list + " (got \"" + value + "\")");
}

FieldSpec parse_field(Node n) {
  FieldSpec f;
  if (!n.has("kind")) throw ConfigError(n.at("kind"), "missing");
  n.string("kind", f.kind);
  one_of(f.kind, {"zero", "constant", "gaussian", "oscillating", "polynomial"}, n.at("kind"));
  if (f.kind == "constant") {
    check(n.has("value"), n.at("value"), "missing");
    n.number("value", f.value);
  } else if (f.kind == "gaussian") {
    check(n.has("amplitude"), n.at("amplitude"), "missing");
    n.number("amplitude", f.amplitude);
    n.number("center", f.center);
    n.number("width", f.width);
    check(f.width > 0.0, n.at("width"), "must be positive");
  } else if (f.kind == "oscillating") {
    check(n.has("amplitude"), n.at("amplitude"), "missing");
    n.number("amplitude", f.amplitude);
    n.integer("mode", f.mode);
    n.number("frequency", f.frequency);
    check(f.mode >= 1, n.at("mode"), "must be at least 1");
  } else if (f.kind == "polynomial") {
    check(n.has("coefficients"), n.at("coefficients"), "missing");
    n.numbers("coefficients", f.coefficients);
  }
  n.finish();
  return f;
}

ProblemBlock parse_problem(Node n) {
  ProblemBlock p;
  n.pair("domain", p.domain.lo, p.domain.hi);
  check(p.domain.lo < p.domain.hi, n.at("domain"), "needs lo < hi");
  n.number("T", p.horizon);
  check(p.horizon > 0.0, n.at("T"), "must be positive");
  n.integer("nx", p.nx);
  check(p.nx >= 3, n.at("nx"), "must be at least 3");
  n.integer("nt", p.nt);
  check(p.nt >= 1, n.at("nt"), "must be at least 1");
  n.integer("q", p.q);
  check(p.q >= 2, n.at("q"), "must be at least 2 in one dimension");
  n.number("theta", p.theta);
  check(p.theta >= 0.5 && p.theta <= 1.0, n.at("theta"), "must lie in [0.5, 1]");
  if (n.has("potential")) p.potential = parse_field(n.child("potential"));
  if (n.has("drift")) p.drift = parse_field(n.child("drift"));
  n.finish();
  return p;
}

GeometryBlock parse_geometry(Node n, const Domain& domain) {
  GeometryBlock g;
  check(n.has("omega"), n.at("omega"), "missing");
  n.pair("omega", g.omega_lo, g.omega_hi);
  check(domain.lo <= g.omega_lo && g.omega_lo < g.omega_hi && g.omega_hi <= domain.hi,
        n.at("omega"), "must be a subinterval of the domain");
  g.x0 = 0.5 * (g.omega_lo + g.omega_hi);
  g.r = 0.25 * (g.omega_hi - g.omega_lo);
  n.number("x0", g.x0);
  n.number("r", g.r);
  check(g.r > 0.0, n.at("r"), "must be positive");
  check(g.omega_lo <= g.x0 - g.r && g.x0 + g.r <= g.omega_hi, n.at("r"),
        "the ball (x0 - r, x0 + r) must lie inside omega");
  n.finish();
  return g;
}

TimeSetBlock parse_timeset(Node n, double horizon) {
  TimeSetBlock t;
  check(n.has("kind"), n.at("kind"), "missing");
  n.string("kind", t.kind);
  one_of(t.kind, {"interval", "union", "fat_cantor"}, n.at("kind"));
  if (t.kind == "interval") {
    t.lo = 0.0;
    t.hi = horizon;
    n.number("lo", t.lo);
    n.number("hi", t.hi);
    check(0.0 <= t.lo && t.lo < t.hi && t.hi <= horizon, n.path(), "needs 0 <= lo < hi <= T");
  } else if (t.kind == "union") {
    check(n.has("intervals"), n.at("intervals"), "missing");
    const Json& arr = n.raw("intervals");
    check(arr.is_array() && !arr.empty(), n.at("intervals"), "expected a nonempty array of [lo, hi]");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = n.at("intervals") + "[" + std::to_string(i) + "]";
      check(arr[i].is_array() && arr[i].size() == 2 && arr[i][0].is_number() && arr[i][1].is_number(),
            path, "expected [lo, hi]");
      const Interval iv{arr[i][0].get<double>(), arr[i][1].get<double>()};
      check(0.0 <= iv.lo && iv.lo < iv.hi && iv.hi <= horizon, path, "needs 0 <= lo < hi <= T");
      t.intervals.push_back(iv);
    }
  } else {
    n.integer("depth", t.depth);
    check(t.depth >= 1 && t.depth <= 24, n.at("depth"), "must lie in 1..24");
  }
  n.number("fraction", t.fraction);
  check(t.fraction > 0.0 && t.fraction <= 1.0, n.at("fraction"), "must lie in (0, 1]");
  n.finish();
  return t;
}

StructuralConstants parse_constants(Node n) {
  StructuralConstants c;
  n.number("C", c.C);
  n.number("d", c.d);
  n.number("C0", c.C0);
  n.number("c", c.c);
  check(c.C > 0.0, n.at("C"), "must be positive");
  check(c.d >= 0.0, n.at("d"), "must be nonnegative");
  check(c.C0 >= 0.0, n.at("C0"), "must be nonnegative");
  check(c.c > 0.0, n.at("c"), "must be positive");
  n.finish();
  return c;
}

DataSpec parse_data(Node n) {
  DataSpec d;
  check(n.has("kind"), n.at("kind"), "missing");
  n.string("kind", d.kind);
  one_of(d.kind, {"modes", "random_modes"}, n.at("kind"));
  if (d.kind == "modes") {
    check(n.has("coefficients"), n.at("coefficients"), "missing");
    n.numbers("coefficients", d.coefficients);
    check(!d.coefficients.empty(), n.at("coefficients"), "must not be empty");
  } else {
    n.integer("count", d.count);
    check(d.count >= 1, n.at("count"), "must be at least 1");
  }
  n.finish();
  return d;
}

void positive(double v, const Node& n, const std::string& key) {
  check(v > 0.0, n.at(key), "must be positive");
}

void at_least(int v, int lo, const Node& n, const std::string& key) {
  check(v >= lo, n.at(key), "must be at least " + std::to_string(lo));
}

RunBlock parse_run(Node n, double horizon) {
  RunBlock r;
  n.unsigned64("seed", r.seed);
  if (n.has("output")) {
    std::string out;
    n.string("output", out);
    r.output = out;
  }
  n.integer("workers", r.workers);
  at_least(r.workers, 1, n, "workers");
  if (n.has("initial")) r.initial = parse_data(n.child("initial"));
  if (n.has("terminal")) r.terminal = parse_data(n.child("terminal"));

  if (n.has("density_seq")) {
    Node b = n.child("density_seq");
    b.number("base", r.density.base);
    b.number("ratio", r.density.ratio);
    b.integer("count", r.density.count);
    check(r.density.ratio > 1.0, b.at("ratio"), "must exceed 1");
    at_least(r.density.count, 2, b, "count");
    if (r.density.base)
      check(*r.density.base > 0.0 && *r.density.base < horizon, b.at("base"), "must lie in (0, T)");
    b.finish();
  }
  if (n.has("constants")) {
    Node b = n.child("constants");
    b.number("ell", r.constants.ell);
    b.number("ell1", r.constants.ell1);
    check(r.constants.ell.has_value() == r.constants.ell1.has_value(), b.path(),
          "ell and ell1 go together");
    if (r.constants.ell) check(*r.constants.ell < *r.constants.ell1, b.at("ell1"), "must exceed ell");
    b.finish();
  }
  if (n.has("check_lemmas")) {
    Node b = n.child("check_lemmas");
    b.numbers("lambdas", r.lemmas.lambdas);
    check(!r.lemmas.lambdas.empty(), b.at("lambdas"), "must not be empty");
    for (double l : r.lemmas.lambdas) check(l > 0.0, b.at("lambdas"), "entries must be positive");
    b.number("L", r.lemmas.L);
    check(r.lemmas.L >= 0.0 && r.lemmas.L <= horizon, b.at("L"), "must lie in [0, T]");
    b.integer("samples", r.lemmas.samples);
    at_least(r.lemmas.samples, 1, b, "samples");
    b.integer("modes", r.lemmas.modes);
    at_least(r.lemmas.modes, 1, b, "modes");
    b.numbers("eps_grid", r.lemmas.eps_grid);
    for (double e : r.lemmas.eps_grid) check(e > 0.0, b.at("eps_grid"), "entries must be positive");
    b.number("tolerance", r.lemmas.tolerance);
    positive(r.lemmas.tolerance, b, "tolerance");
    b.finish();
  }
  if (n.has("kappa")) {
    Node b = n.child("kappa");
    b.integer("basis", r.kappa.basis);
    b.integer("starts", r.kappa.starts);
    b.integer("sweeps", r.kappa.sweeps);
    b.integer("samples", r.kappa.samples);
    at_least(r.kappa.basis, 1, b, "basis");
    at_least(r.kappa.starts, 1, b, "starts");
    at_least(r.kappa.sweeps, 1, b, "sweeps");
    at_least(r.kappa.samples, 3, b, "samples");
    b.finish();
  }
  if (n.has("null_control")) {
    Node b = n.child("null_control");
    b.number("tol", r.null_control.tol);
    b.integer("max_iter", r.null_control.max_iter);
    positive(r.null_control.tol, b, "tol");
    at_least(r.null_control.max_iter, 1, b, "max_iter");
    b.finish();
  }
  if (n.has("norm_optimal")) {
    Node b = n.child("norm_optimal");
    b.number("tau", r.norm_optimal.tau);
    b.number("tol", r.norm_optimal.tol);
    b.number("radius", r.norm_optimal.radius);
    b.number("gradient_tol", r.norm_optimal.gradient_tol);
    b.integer("max_iter", r.norm_optimal.max_iter);
    b.boolean("random_start", r.norm_optimal.random_start);
    check(r.norm_optimal.tau >= 0.0 && r.norm_optimal.tau < horizon, b.at("tau"), "must lie in [0, T)");
    positive(r.norm_optimal.tol, b, "tol");
    positive(r.norm_optimal.radius, b, "radius");
    positive(r.norm_optimal.gradient_tol, b, "gradient_tol");
    at_least(r.norm_optimal.max_iter, 1, b, "max_iter");
    b.finish();
  }
  if (n.has("time_optimal")) {
    Node b = n.child("time_optimal");
    b.number("bound", r.time_optimal.bound);
    b.number("bound_factor", r.time_optimal.bound_factor);
    b.number("tol", r.time_optimal.tol);
    if (r.time_optimal.bound) positive(*r.time_optimal.bound, b, "bound");
    positive(r.time_optimal.bound_factor, b, "bound_factor");
    check(r.time_optimal.tol >= 0.0, b.at("tol"), "must be nonnegative (0 selects T/nt)");
    b.finish();
  }
  if (n.has("improve")) {
    Node b = n.child("improve");
    b.number("slack", r.improve.slack);
    b.number("kappa", r.improve.kappa);
    b.number("tol", r.improve.tol);
    b.string("correction", r.improve.correction);
    one_of(r.improve.correction, {"norm_optimal", "hum"}, b.at("correction"));
    check(r.improve.slack > 0.0 && r.improve.slack < 1.0, b.at("slack"), "must lie in (0, 1)");
    if (r.improve.kappa) positive(*r.improve.kappa, b, "kappa");
    positive(r.improve.tol, b, "tol");
    b.finish();
  }
  if (n.has("sweep")) {
    Node b = n.child("sweep");
    b.string("subcommand", r.sweep.subcommand);
    one_of(r.sweep.subcommand, {"kappa", "null-control"}, b.at("subcommand"));
    b.string("axis", r.sweep.axis);
    one_of(r.sweep.axis, {"fraction", "depth"}, b.at("axis"));
    b.numbers("values", r.sweep.values);
    b.boolean("warm_start", r.sweep.warm_start);
    for (double v : r.sweep.values) {
      if (r.sweep.axis == "fraction")
        check(v > 0.0 && v <= 1.0, b.at("values"), "fractions must lie in (0, 1]");
      else
        check(v >= 1.0 && v <= 24.0 && v == std::floor(v), b.at("values"),
              "depths must be integers in 1..24");
    }
    b.finish();
  }
  n.finish();
  return r;
}

}  // namespace

FieldSampler make_sampler(const FieldSpec& f, const Domain& domain) {
  if (f.kind == "zero") return {};
  if (f.kind == "constant") return [v = f.value](double, double) { return v; };
  if (f.kind == "gaussian")
    return [f](double x, double) {
      const double s = (x - f.center) / f.width;
      return f.amplitude * std::exp(-s * s);
    };
  if (f.kind == "oscillating")
    return [f, domain](double x, double t) {
      return f.amplitude * std::sin(f.mode * std::numbers::pi * (x - domain.lo) / domain.length()) *
             std::cos(f.frequency * t);
    };
  if (f.kind == "polynomial")
    return [c = f.coefficients](double x, double) {
      double v = 0.0;
      for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
      return v;
    };
  throw InvalidArgument("unknown field kind " + f.kind);
}

TimeSet build_timeset(const TimeSetBlock& b, double horizon) {
  TimeSet set;
  if (b.kind == "interval")
    set = TimeSet::window(horizon, b.lo, b.hi);
  else if (b.kind == "union")
    set = TimeSet::normalize(b.intervals, horizon).set;
  else
    set = fat_cantor(horizon, b.depth);
  return b.fraction < 1.0 ? shrink(set, b.fraction) : set;
}

Vector build_data(const DataSpec& spec, const ProblemSetup& setup, std::uint64_t seed) {
  const Domain& d = setup.domain();
  const Eigen::ArrayXd xi = (setup.nodes().array() - d.lo) / d.length();
  Vector u = Vector::Zero(setup.nx());
  if (spec.kind == "modes") {
    for (std::size_t j = 0; j < spec.coefficients.size(); ++j)
      u += spec.coefficients[j] * (static_cast<double>(j + 1) * std::numbers::pi * xi).sin().matrix();
  } else {
    Rng rng(seed);
    for (int j = 1; j <= spec.count; ++j)
      u += (rng.normal() / j) * (j * std::numbers::pi * xi).sin().matrix();
  }
  return u;
}

SetupPtr build_setup(const ProblemBlock& b) {
  ProblemSpec spec;
  spec.domain = b.domain;
  spec.horizon = b.horizon;
  spec.nx = b.nx;
  spec.nt = b.nt;
  spec.q = b.q;
  spec.theta = b.theta;
  spec.potential = make_sampler(b.potential, b.domain);
  spec.drift = make_sampler(b.drift, b.domain);
  return make_setup(spec);
}

ObservationGeometry build_geometry(const GeometryBlock& b, const Domain& domain) {
  return make_geometry(domain, b.omega_lo, b.omega_hi, b.x0, b.r);
}

ExperimentConfig parse_config(const Json& document) {
  Node root(document, "");
  ExperimentConfig c;
  check(root.has("schema_version"), "schema_version", "missing");
  root.integer("schema_version", c.schema_version);
  check(c.schema_version == kSchemaVersion, "schema_version",
        "unsupported version " + std::to_string(c.schema_version) + " (expected " +
            std::to_string(kSchemaVersion) + ")");
  check(root.has("problem"), "problem", "missing");
  c.problem = parse_problem(root.child("problem"));
  if (root.has("geometry")) c.geometry = parse_geometry(root.child("geometry"), c.problem.domain);
  if (root.has("timeset")) c.timeset = parse_timeset(root.child("timeset"), c.problem.horizon);
  if (root.has("constants")) c.constants = parse_constants(root.child("constants"));
  if (root.has("run")) c.run = parse_run(root.child("run"), c.problem.horizon);
  root.finish();
  c.source = document;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path, "cannot open config file");
  Json doc;
  try {
    doc = Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

void require_blocks(const ExperimentConfig& c, const std::string& sub) {
  if (std::find(subcommands().begin(), subcommands().end(), sub) == subcommands().end())
    throw ConfigError("subcommand", "unknown subcommand \"" + sub + "\"");
  const bool needs_geometry = sub == "constants" || sub == "check-lemmas" || sub == "kappa" ||
                              sub == "null-control" || sub == "norm-optimal" ||
                              sub == "time-optimal" || sub == "improve" || sub == "sweep";
  const bool needs_timeset = sub == "density-seq" || sub == "kappa" || sub == "null-control" ||
                             sub == "improve" || sub == "sweep";
  const bool needs_constants = sub == "constants" || sub == "check-lemmas";
  if (needs_geometry && !c.geometry) throw ConfigError("geometry", "required by " + sub);
  if (needs_timeset && !c.timeset) throw ConfigError("timeset", "required by " + sub);
  if (needs_constants && !c.constants) throw ConfigError("constants", "required by " + sub);
  if (sub == "sweep" && c.run.sweep.values.empty())
    throw ConfigError("run.sweep.values", "the sweep axis is empty");
}

}  // namespace parobs
