#include "parobs/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <map>

#include "parobs/constants.hpp"
#include "parobs/control.hpp"
#include "parobs/frequency.hpp"
#include "parobs/random.hpp"

namespace parobs {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 of (seed, index)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Json array_of(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

struct Context {
  Context(const ExperimentConfig& c, SetupPtr s, ArtifactWriter& w, std::uint64_t sd, int wk)
      : config(c), setup(std::move(s)), out(w), seed(sd), workers(wk) {}

  const ExperimentConfig& config;
  SetupPtr setup;
  ArtifactWriter& out;
  std::uint64_t seed;
  int workers;
  Json result = Json::object();
  Json invariants = Json::array();
  std::map<std::string, double> timings;

  void invariant(const std::string& name, bool pass, Json detail = Json::object()) {
    invariants.push_back({{"name", name}, {"pass", pass}, {"detail", std::move(detail)}});
  }

  template <typename F>
  auto timed(const std::string& phase, F&& f) {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      timings[phase] += std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto value = f();
      timings[phase] += std::chrono::duration<double>(Clock::now() - t0).count();
      return value;
    }
  }

  ObservationGeometry geometry() const {
    return build_geometry(*config.geometry, config.problem.domain);
  }
  TimeSet timeset() const { return build_timeset(*config.timeset, config.problem.horizon); }
  Vector initial() const { return build_data(config.run.initial, *setup, derive_seed(seed, 0)); }
  Vector terminal() const { return build_data(config.run.terminal, *setup, derive_seed(seed, 1)); }

  bool pure_heat() const {
    return config.problem.potential.kind == "zero" && config.problem.drift.kind == "zero";
  }

  ChainInputs chain_inputs() const {
    ChainInputs in;
    in.horizon = config.problem.horizon;
    in.a_norm = setup->potential_norm();
    in.b_norm = setup->drift_norm();
    in.q = config.problem.q;
    if (config.geometry) {
      const ObservationGeometry g = geometry();
      in.r = g.r;
      in.m0 = g.m0;
    }
    if (config.constants) in.structural = *config.constants;
    return in;
  }
};

Json to_json(const NormOptimalResult& r) {
  return {{"M_tilde", r.M_tilde},
          {"bang_bang_cv", r.bang_bang_cv},
          {"stats", to_json(r.stats)},
          {"defect", r.defect},
          {"radius", r.radius},
          {"dual_value", r.dual_value},
          {"iterations", r.iterations},
          {"trace", r.trace},
          {"dual_terminal", array_of(r.dual_terminal)},
          {"seed", r.seed}};
}

Json to_json(const HumReport& r) {
  Json j = {{"defect", r.defect},     {"uncontrolled", r.uncontrolled}, {"iterations", r.iterations},
            {"history", r.history},   {"sup_abs", r.sup_abs},           {"sup_slice", r.sup_slice},
            {"l2_cost", r.l2_cost}};
  j["kappa_bound"] = r.kappa_bound ? Json(*r.kappa_bound) : Json(nullptr);
  return j;
}

Json to_json(const EnergyReport& e) {
  return {{"fitted_C0", e.fitted_C0}, {"vacuous", e.vacuous},       {"unbounded", e.unbounded},
          {"nonincreasing", e.nonincreasing}, {"max_growth", e.max_growth}, {"trivial", e.trivial}};
}

NormOptimalOptions norm_options(const Context& ctx) {
  const NormOptimalParams& p = ctx.config.run.norm_optimal;
  NormOptimalOptions o;
  o.tol = p.tol;
  o.radius = p.radius;
  o.gradient_tol = p.gradient_tol;
  o.max_iter = p.max_iter;
  o.random_start = p.random_start;
  o.seed = derive_seed(ctx.seed, 2);
  return o;
}

KappaOptions kappa_options(const Context& ctx, std::uint64_t index) {
  const KappaParams& p = ctx.config.run.kappa;
  KappaOptions o;
  o.basis = p.basis;
  o.starts = p.starts;
  o.sweeps = p.sweeps;
  o.samples = p.samples;
  o.seed = derive_seed(ctx.seed, 100 + index);
  return o;
}

// ---------------------------------------------------------------------------

void run_solve(Context& ctx) {
  const Vector u0 = ctx.initial();
  const Trajectory traj = ctx.timed("solve", [&] { return solve_forward(ctx.setup, u0); });
  const EnergyReport energy = check_energy_estimate(traj);
  const FeasibilityReport feas = check_feasibility_conditions(*ctx.setup);
  const Vector norms = traj.norms();
  ctx.result = {{"initial_norm", norms(0)},
                {"terminal_norm", norms(norms.size() - 1)},
                {"norm_ratio", norms(0) > 0.0 ? norms(norms.size() - 1) / norms(0) : 0.0},
                {"potential_norm", ctx.setup->potential_norm()},
                {"drift_norm", ctx.setup->drift_norm()},
                {"energy", to_json(energy)},
                {"feasibility",
                 {{"lambda1", feas.lambda1},
                  {"min_shifted", feas.min_shifted},
                  {"sup_reduced", feas.sup_reduced},
                  {"nonnegative_holds", feas.nonnegative_holds},
                  {"bounded_holds", feas.bounded_holds}}}};
  ctx.invariant("finite trajectory", traj.states.allFinite());
  if (ctx.pure_heat())
    ctx.invariant("norm nonincreasing without coefficients", energy.nonincreasing,
                  {{"max_growth", energy.max_growth}});
  ctx.invariant("energy estimate admits a constant", !energy.unbounded,
                {{"fitted_C0", energy.fitted_C0}});
  ctx.timed("write", [&] { ctx.out.trajectory("trajectory", traj); });
}

void run_adjoint(Context& ctx) {
  const Vector vT = ctx.terminal();
  const Trajectory traj = ctx.timed("solve", [&] { return solve_adjoint(ctx.setup, vT); });
  Rng rng(derive_seed(ctx.seed, 3));
  const Vector psi0 = rng.normal_vector(ctx.setup->nx());
  Matrix source(ctx.setup->nx(), ctx.setup->nt() + 1);
  for (Eigen::Index k = 0; k < source.cols(); ++k) source.col(k) = rng.normal_vector(ctx.setup->nx());
  const DualityReport d = ctx.timed("duality", [&] { return check_duality(ctx.setup, psi0, source, vT); });
  const double transpose = check_step_transpose(*ctx.setup);
  const Vector norms = traj.norms();
  ctx.result = {{"terminal_norm", norms(norms.size() - 1)},
                {"initial_norm", norms(0)},
                {"duality",
                 {{"terminal_pairing", d.terminal_pairing},
                  {"initial_pairing", d.initial_pairing},
                  {"source_pairing", d.source_pairing},
                  {"defect", d.defect},
                  {"relative", d.relative()}}},
                {"step_transpose_difference", transpose}};
  ctx.invariant("discrete duality", d.relative() <= 1e-10, {{"relative", d.relative()}});
  ctx.invariant("adjoint step is the transposed forward step", transpose <= 1e-12,
                {{"difference", transpose}});
  ctx.timed("write", [&] { ctx.out.trajectory("adjoint", traj); });
}

void run_density(Context& ctx) {
  const TimeSet E = ctx.timeset();
  const DensityParams& p = ctx.config.run.density;
  const double base = p.base ? *p.base : pick_density_point(E);
  const DensitySequence seq =
      ctx.timed("search", [&] { return density_sequence(E, base, p.ratio, p.count); });
  const bool all = std::all_of(seq.verified.begin(), seq.verified.end(), [](bool b) { return b; });
  ctx.result = {{"measure", measure(E)}, {"timeset", to_json(E)}, {"sequence", to_json(seq)}};
  ctx.invariant("every gap verified", all);
  ctx.timed("write", [&] {
    ctx.out.json("timeset.json", to_json(E));
    ctx.out.timeset_csv("timeset.csv", E);
  });
}

void run_constants(Context& ctx) {
  ConstantChain chain = compute_chain(ctx.chain_inputs());
  const ConstantsParams& p = ctx.config.run.constants;
  const IdentityCheck z = check_z_identity(chain);
  ctx.invariant("(gamma+1) z^2 = gamma+2", z.holds, {{"relative", z.relative}});
  ctx.invariant("alpha in (0,1)", chain.alpha > 0.0 && chain.alpha < 1.0, {{"alpha", chain.alpha}});
  Json shape = nullptr;
  if (p.ell) {
    chain = bind_interval(chain, *p.ell, *p.ell1);
    const IdentityCheck eta = compute_eta_gamma_identity_check(chain);
    ctx.invariant("eta-gamma identity", eta.holds, {{"relative", eta.relative}});
    const double exponent = kappa_shape_exponent(chain, *p.ell, *p.ell1);
    shape = {{"exponent", exponent}};
    try {
      shape["value"] = theoretical_kappa_shape(chain, *p.ell, *p.ell1);
      shape["overflow"] = false;
    } catch (const OverflowError&) {
      shape["value"] = nullptr;
      shape["overflow"] = true;
    }
  }
  ctx.result = {{"chain", to_json(chain)}, {"kappa_shape", shape}};
  ctx.timed("write", [&] { ctx.out.json("constants.json", to_json(chain)); });
}

void run_lemmas(Context& ctx) {
  const LemmaParams& p = ctx.config.run.lemmas;
  const ObservationGeometry g = ctx.geometry();
  const double L = p.L > 0.0 ? p.L : ctx.config.problem.horizon;
  const double x0 = g.x0;
  const ConstantChain chain = compute_chain(ctx.chain_inputs());

  std::vector<Trajectory> ensemble;
  ctx.timed("trajectories", [&] {
    DataSpec spec;
    spec.kind = "random_modes";
    spec.count = p.modes;
    for (int i = 0; i < p.samples; ++i)
      ensemble.push_back(
          solve_forward(ctx.setup, build_data(spec, *ctx.setup, derive_seed(ctx.seed, 10 + i))));
  });

  Json checks = Json::array();
  std::string csv = "check,pass,value\n";
  auto add = [&](const std::string& name, bool pass, double value, Json extra, bool asserted) {
    Json entry = {{"name", name}, {"pass", pass}, {"asserted", asserted}, {"value", value}};
    entry.update(extra);
    checks.push_back(entry);
    csv += name + "," + (pass ? "pass" : "fail") + "," + Json(value).dump() + "\n";
    if (asserted) ctx.invariant(name, pass, {{"value", value}});
  };

  // Frequency monotonicity (pure heat only).
  ctx.timed("monotonicity", [&] {
    for (double lambda : p.lambdas) {
      double worst = 0.0;
      Json per_sample = Json::array();
      for (const Trajectory& traj : ensemble) {
        const MonotonicityReport m = check_frequency_monotonicity(traj, WeightParams{lambda, L, x0});
        worst = std::max(worst, m.relative_violation);
        per_sample.push_back(m.relative_violation);
      }
      add("frequency monotonicity lambda=" + Json(lambda).dump(), worst <= p.tolerance, worst,
          {{"per_sample_violation", per_sample}, {"lambda", lambda}}, ctx.pure_heat());
    }
  });

  // Caloric weight discretization, three refinements from a base grid that
  // resolves the weight's width √λ and time scale λ.
  ctx.timed("caloric", [&] {
    auto pow2_at_least = [](double v) {
      int n = 16;
      while (n < v) n *= 2;
      return n;
    };
    for (double lambda : p.lambdas) {
      const WeightParams w{lambda, L, x0};
      const int nx0 = pow2_at_least(8.0 * ctx.config.problem.domain.length() / std::sqrt(lambda));
      const int nt0 = pow2_at_least(16.0 * L / lambda);
      std::vector<double> residuals, ratios;
      for (int level = 0; level < 4; ++level)
        residuals.push_back(
            caloric_residual(w, ctx.config.problem.domain, nx0 << level, nt0 << level).finite_difference);
      double min_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t i = 1; i < residuals.size(); ++i) {
        ratios.push_back(residuals[i - 1] / residuals[i]);
        min_ratio = std::min(min_ratio, ratios.back());
      }
      add("caloric residual second order lambda=" + Json(lambda).dump(), min_ratio >= 3.5, min_ratio,
          {{"residuals", residuals}, {"ratios", ratios}, {"base_nx", nx0}, {"base_nt", nt0}}, true);
    }
  });

  // Two-point Hölder structure at time L.
  ctx.timed("holder", [&] {
    const HolderReport h = check_two_point_holder(ensemble, g, chain, L);
    Json slack = Json::array();
    for (const HolderSample& s : h.samples) slack.push_back(s.slack);
    add("two-point Holder fit", h.alpha_in_range && h.min_slack >= 0.0, h.alpha_hat,
        {{"alpha_hat", h.alpha_hat},
         {"C_hat", h.C_hat},
         {"amplification", h.amplification},
         {"structural_C", h.structural_C},
         {"excluded", h.excluded},
         {"per_sample_slack", slack}},
        true);
  });

  // Ball concentration at every λ.
  ctx.timed("ball", [&] {
    for (double lambda : p.lambdas) {
      double worst = std::numeric_limits<double>::infinity();
      Json slack = Json::array();
      for (const Trajectory& traj : ensemble) {
        const BallConcentrationReport b =
            check_ball_concentration(*ctx.setup, traj.at(0), WeightParams{lambda, L, x0}, g);
        const double rel = b.scale > 0.0 ? b.slack / b.scale : b.slack;
        slack.push_back(rel);
        worst = std::min(worst, rel);
      }
      add("ball concentration lambda=" + Json(lambda).dump(), worst >= -1e-10, worst,
          {{"per_sample_slack", slack}, {"lambda", lambda}}, true);
    }
  });

  // ε-interpolation with the configured c: reported, existence-only constant.
  ctx.timed("interpolation", [&] {
    const int nt = ctx.setup->nt();
    const double t1 = ctx.setup->time(std::max(1, nt / 4)), t2 = ctx.setup->time(std::max(2, nt / 2));
    const InterpolationReport r = check_eps_interpolation(ensemble.front(), g, chain, t1, t2, p.eps_grid);
    add("epsilon interpolation", r.all_hold, r.minimal_c,
        {{"t1", t1}, {"t2", t2}, {"minimal_c", r.minimal_c}, {"configured_c", chain.c}}, false);
  });

  // Weighted potential bound for the configured potential.
  if (ctx.config.problem.potential.kind != "zero") {
    ctx.timed("potential", [&] {
      const Vector a = ctx.setup->potential().col(0);
      const PotentialBoundReport r = check_weighted_potential_bound(
          *ctx.setup, ensemble.front().at(0), a, WeightParams{p.lambdas.front(), L, x0}, 0.0, p.eps_grid);
      Json pts = Json::array();
      for (const auto& pt : r.points)
        pts.push_back({{"epsilon", pt.epsilon},
                       {"squared_constant", pt.squared_constant},
                       {"signed_constant", pt.signed_constant},
                       {"sup_squared_constant", pt.sup_squared_constant}});
      add("weighted potential bound slope", r.slope_ok, r.fitted_slope,
          {{"points", pts}, {"theoretical_slope", r.theoretical_slope}}, false);
    });
  }

  // Energy estimate, fitted constant.
  double C0 = 0.0;
  bool bounded = true;
  for (const Trajectory& traj : ensemble) {
    const EnergyReport e = check_energy_estimate(traj);
    C0 = std::max(C0, e.fitted_C0);
    bounded = bounded && !e.unbounded;
  }
  add("energy estimate", bounded, C0, {{"fitted_C0", C0}}, true);

  ctx.result = {{"L", L}, {"samples", p.samples}, {"chain", to_json(chain)}, {"checks", checks}};
  ctx.timed("write", [&] { ctx.out.text("lemmas.csv", csv); });
}

Json theoretical_shape(const Context& ctx, const TimeSet& E) {
  ConstantChain chain = compute_chain(ctx.chain_inputs());
  const ConstantsParams& cp = ctx.config.run.constants;
  double ell = 0.0, ell1 = 0.0;
  if (cp.ell) {
    ell = *cp.ell;
    ell1 = *cp.ell1;
  } else {
    const double base = pick_density_point(E);
    const DensitySequence seq = density_sequence(E, base, chain.z, 2);
    ell = base;
    ell1 = seq.first;
  }
  Json j = {{"ell", ell}, {"ell1", ell1}, {"exponent", kappa_shape_exponent(chain, ell, ell1)},
            {"note", "upper-bound shape with the configured structural constants"}};
  try {
    j["value"] = theoretical_kappa_shape(chain, ell, ell1);
  } catch (const OverflowError&) {
    j["value"] = nullptr;
  }
  return j;
}

void run_kappa(Context& ctx) {
  const TimeSet E = ctx.timeset();
  const KappaEstimate k = ctx.timed("estimate", [&] {
    return estimate_kappa(ctx.setup, ctx.geometry(), E, kappa_options(ctx, 0));
  });
  Json theory;
  try {
    theory = theoretical_shape(ctx, E);
  } catch (const NumericalError& e) {
    theory = {{"error", e.what()}};
  }
  ctx.result = {{"kappa_emp", k.value},
                {"lower_bound", true},
                {"measure", measure(E)},
                {"basis", k.basis},
                {"evaluations", k.evaluations},
                {"trace", k.trace},
                {"coefficients", array_of(k.coefficients)},
                {"seed", k.seed},
                {"theoretical_shape", theory}};
  ctx.invariant("kappa attained by its candidate",
                std::abs(observation_ratio(ctx.setup, ctx.geometry(), E, k.terminal) - k.value) <=
                    1e-9 * k.value);
  ctx.timed("write", [&] { ctx.out.json("timeset.json", to_json(E)); });
}

void run_null_control(Context& ctx) {
  const TimeSet E = ctx.timeset();
  const Vector psi0 = ctx.initial();
  HumOptions o;
  o.tol = ctx.config.run.null_control.tol;
  o.max_iter = ctx.config.run.null_control.max_iter;
  const HumResult h = ctx.timed("hum", [&] { return hum_null_control(ctx.setup, ctx.geometry(), E, psi0, o); });
  ctx.result = to_json(h.report);
  ctx.result["measure"] = measure(E);
  ctx.result["initial_norm"] = ctx.setup->norm(psi0);
  ctx.invariant("terminal defect within tolerance", h.report.defect <= o.tol, {{"defect", h.report.defect}});
  ctx.invariant("control supported on omega x E", h.control.support_contained());
  ctx.timed("write", [&] {
    ctx.out.control("control", h.control);
    ctx.out.json("timeset.json", to_json(E));
  });
}

void run_norm_optimal(Context& ctx) {
  const Vector y0 = ctx.initial();
  const NormOptimalOptions o = norm_options(ctx);
  const double tau = ctx.config.run.norm_optimal.tau;
  const NormOptimalResult r =
      ctx.timed("optimize", [&] { return norm_optimal_control(ctx.setup, ctx.geometry(), tau, y0, o); });
  ctx.result = to_json(r);
  ctx.result["tau"] = tau;
  ctx.invariant("terminal defect within tolerance", r.defect <= o.tol, {{"defect", r.defect}});
  ctx.invariant("control supported on omega x (tau,T)", r.control.support_contained());
  ctx.timed("write", [&] { ctx.out.control("control", r.control); });
}

void run_time_optimal(Context& ctx) {
  const Vector y0 = ctx.initial();
  const ObservationGeometry g = ctx.geometry();
  const TimeOptimalParams& p = ctx.config.run.time_optimal;
  TimeOptimalOptions o;
  o.inner = norm_options(ctx);
  o.tol = p.tol;
  if (p.bound) {
    o.M = *p.bound;
  } else {
    const NormOptimalResult zero =
        ctx.timed("cost_at_zero", [&] { return norm_optimal_control(ctx.setup, g, 0.0, y0, o.inner); });
    o.M = p.bound_factor * zero.M_tilde;
  }
  const TimeOptimalResult r = ctx.timed("bisection", [&] { return time_optimal_control(ctx.setup, g, y0, o); });
  const double T = ctx.config.problem.horizon;
  const double tol = o.tol > 0.0 ? o.tol : ctx.setup->dt();
  const int expected = static_cast<int>(std::ceil(std::log2(T / tol)));

  Json history = Json::array();
  std::string csv = "tau,feasible,cost\n";
  std::vector<BisectionStep> sorted = r.history;
  for (const BisectionStep& s : r.history) {
    history.push_back({{"tau", s.tau}, {"feasible", s.feasible}, {"cost", s.cost}});
    csv += Json(s.tau).dump() + "," + (s.feasible ? "1" : "0") + "," + Json(s.cost).dump() + "\n";
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.tau < b.tau; });
  bool monotone = r.cost_at_zero <= (sorted.empty() ? r.cost_at_zero : sorted.front().cost) * (1.0 + 1e-8);
  for (std::size_t i = 1; i < sorted.size(); ++i)
    monotone = monotone && sorted[i - 1].cost <= sorted[i].cost * (1.0 + 1e-8);

  ctx.result = {{"M", o.M},
                {"tau_star", r.tau_star},
                {"cost_at_zero", r.cost_at_zero},
                {"iterations", r.iterations},
                {"expected_iterations", expected},
                {"bang_bang_cv", r.bang_bang_cv},
                {"history", history},
                {"control", to_json(r.control)}};
  ctx.invariant("N(tau) nondecreasing along the bisection", monotone);
  ctx.invariant("bisection iteration count", r.iterations == expected,
                {{"iterations", r.iterations}, {"expected", expected}});
  ctx.invariant("control cost within the bound", r.control.M_tilde <= o.M, {{"cost", r.control.M_tilde}});
  ctx.timed("write", [&] {
    ctx.out.control("control", r.control.control);
    ctx.out.text("bisection.csv", csv);
  });
}

void run_improve(Context& ctx) {
  const Vector y0 = ctx.initial();
  const ObservationGeometry g = ctx.geometry();
  const TimeSet E = ctx.timeset();
  const ImproveParams& p = ctx.config.run.improve;
  const NormOptimalResult base =
      ctx.timed("base_control", [&] { return norm_optimal_control(ctx.setup, g, 0.0, y0, norm_options(ctx)); });
  const double M = base.M_tilde;
  const double eps = p.slack * M;
  ControlField f = base.control;
  const Vector wE = cell_fractions(E, ctx.setup->nt());
  for (int k = 1; k <= ctx.setup->nt(); ++k)
    if (wE(k) > 0.0) f.values.col(k) *= (M - eps) / M;

  ImproveOptions o;
  o.bound = M;
  o.tol = p.tol;
  o.correction = p.correction == "hum" ? CorrectionKind::hum : CorrectionKind::norm_optimal;
  o.hum.tol = ctx.config.run.null_control.tol;
  o.hum.max_iter = ctx.config.run.null_control.max_iter;
  o.norm = norm_options(ctx);
  double kappa = 0.0;
  if (p.kappa) {
    kappa = *p.kappa;
  } else {
    kappa = ctx.timed("kappa", [&] { return estimate_kappa(ctx.setup, g, E, kappa_options(ctx, 0)).value; });
  }
  o.kappa = kappa;
  const ImproveResult r = ctx.timed("improve", [&] { return improve_control(ctx.setup, g, f, E, eps, y0, o); });
  const double expected_delta = improvement_delta(eps, kappa, ctx.setup->norm(y0));

  ctx.result = {{"correction", p.correction},
                {"bound", r.bound},
                {"epsilon", eps},
                {"kappa", kappa},
                {"delta", r.delta},
                {"sup_before", r.sup_before},
                {"sup_after", r.sup_after},
                {"target", r.target},
                {"reduction_factor", r.sup_after / r.bound},
                {"correction_sup", r.correction_sup},
                {"correction_budget", r.correction_budget},
                {"certificate", r.certificate},
                {"defect_before", r.defect_before},
                {"defect_after", r.defect_after},
                {"measure", measure(E)}};
  ctx.invariant("sup-norm strictly reduced", r.sup_after < r.bound,
                {{"sup_after", r.sup_after}, {"bound", r.bound}});
  ctx.invariant("delta matches eps/(kappa |y0| + eps)", r.delta == expected_delta);
  ctx.invariant("terminal defect within tolerance", r.defect_after <= p.tol, {{"defect", r.defect_after}});
  ctx.timed("write", [&] {
    ctx.out.control("padded", f);
    ctx.out.control("improved", r.improved);
  });
}

struct SweepRow {
  double axis = 0.0;
  double measure = 0.0;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double cost = std::numeric_limits<double>::quiet_NaN();
  double defect = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
  Vector terminal;
};

void run_sweep(Context& ctx) {
  const SweepParams& p = ctx.config.run.sweep;
  const ObservationGeometry g = ctx.geometry();
  const TimeSetBlock& tb = *ctx.config.timeset;
  const double T = ctx.config.problem.horizon;
  const Vector psi0 = ctx.initial();

  auto set_for = [&](double v) {
    if (p.axis == "fraction") return shrink(build_timeset(tb, T), v);
    TimeSetBlock b = tb;
    b.kind = "fat_cantor";
    b.depth = static_cast<int>(v);
    return build_timeset(b, T);
  };

  auto point = [&](std::size_t i, const std::vector<Vector>& warm) {
    SweepRow row;
    row.axis = p.values[i];
    try {
      const TimeSet E = set_for(p.values[i]);
      row.measure = measure(E);
      KappaOptions ko = kappa_options(ctx, i);
      ko.warm_starts = warm;
      const KappaEstimate k = estimate_kappa(ctx.setup, g, E, ko);
      row.kappa = k.value;
      row.terminal = k.terminal;
      if (p.subcommand == "null-control") {
        HumOptions o;
        o.tol = ctx.config.run.null_control.tol;
        o.max_iter = ctx.config.run.null_control.max_iter;
        const HumResult h = hum_null_control(ctx.setup, g, E, psi0, o);
        row.cost = h.report.sup_slice;
        row.defect = h.report.defect;
      }
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    return row;
  };

  std::vector<SweepRow> rows(p.values.size());
  ctx.timed("points", [&] {
    if (p.warm_start) {
      // Each point starts from every earlier maximizer, so along a nested
      // axis the estimates cannot decrease.
      std::vector<Vector> warm;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = point(i, warm);
        if (!rows[i].failed) warm.push_back(rows[i].terminal);
      }
    } else {
      for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(ctx.workers)) {
        std::vector<std::future<SweepRow>> batch;
        const std::size_t stop = std::min(rows.size(), start + static_cast<std::size_t>(ctx.workers));
        for (std::size_t i = start; i < stop; ++i)
          batch.push_back(std::async(std::launch::async, [&, i] { return point(i, {}); }));
        for (std::size_t i = start; i < stop; ++i) rows[i] = batch[i - start].get();
      }
    }
  });

  std::string csv = "axis,measure,kappa_emp,control_cost,defect,status\n";
  Json table = Json::array();
  auto num = [](double v) { return std::isnan(v) ? std::string() : Json(v).dump(); };
  bool any_failed = false;
  for (const SweepRow& r : rows) {
    any_failed = any_failed || r.failed;
    csv += num(r.axis) + "," + num(r.measure) + "," + num(r.kappa) + "," + num(r.cost) + "," +
           num(r.defect) + "," + (r.failed ? "failed" : "ok") + "\n";
    Json row = {{"axis", r.axis}, {"measure", r.measure}, {"status", r.failed ? "failed" : "ok"}};
    row["kappa_emp"] = std::isnan(r.kappa) ? Json(nullptr) : Json(r.kappa);
    row["control_cost"] = std::isnan(r.cost) ? Json(nullptr) : Json(r.cost);
    row["defect"] = std::isnan(r.defect) ? Json(nullptr) : Json(r.defect);
    if (r.failed) row["error"] = r.error;
    table.push_back(row);
  }

  // Shrinking fractions and growing depths give nested, shrinking sets.
  bool nested = true;
  for (std::size_t i = 1; i < p.values.size(); ++i)
    nested = nested && (p.axis == "fraction" ? p.values[i] <= p.values[i - 1] : p.values[i] >= p.values[i - 1]);
  if (nested && p.warm_start && !any_failed) {
    bool monotone = true;
    for (std::size_t i = 1; i < rows.size(); ++i) monotone = monotone && rows[i].kappa >= rows[i - 1].kappa;
    ctx.invariant("kappa_emp nondecreasing as the time set shrinks", monotone);
  }
  if (p.subcommand == "null-control" && !any_failed) {
    bool ok = true;
    for (const SweepRow& r : rows) ok = ok && r.defect <= ctx.config.run.null_control.tol;
    ctx.invariant("every terminal defect within tolerance", ok);
  }
  ctx.result = {{"subcommand", p.subcommand}, {"axis", p.axis}, {"rows", table}, {"failed_rows", any_failed}};
  ctx.timed("write", [&] { ctx.out.text("sweep.csv", csv); });
  if (any_failed) throw NumericalError("one or more sweep points failed");
}

void dispatch(Context& ctx, const std::string& sub) {
  if (sub == "solve") return run_solve(ctx);
  if (sub == "adjoint") return run_adjoint(ctx);
  if (sub == "density-seq") return run_density(ctx);
  if (sub == "constants") return run_constants(ctx);
  if (sub == "check-lemmas") return run_lemmas(ctx);
  if (sub == "kappa") return run_kappa(ctx);
  if (sub == "null-control") return run_null_control(ctx);
  if (sub == "norm-optimal") return run_norm_optimal(ctx);
  if (sub == "time-optimal") return run_time_optimal(ctx);
  if (sub == "improve") return run_improve(ctx);
  if (sub == "sweep") return run_sweep(ctx);
  throw ConfigError("subcommand", "unknown subcommand \"" + sub + "\"");
}

Json error_json(const std::exception& e) {
  Json j = {{"message", e.what()}};
  if (const auto* c = dynamic_cast<const ConvergenceError*>(&e)) {
    j["type"] = "convergence";
    j["history"] = c->history();
  } else if (const auto* o = dynamic_cast<const OverflowError*>(&e)) {
    j["type"] = "overflow";
    j["exponent"] = o->exponent();
  } else if (const auto* a = dynamic_cast<const EmptyAdmissibleSet*>(&e)) {
    j["type"] = "empty_admissible_set";
    j["cost_at_zero"] = a->cost_at_zero();
  } else if (const auto* d = dynamic_cast<const DensitySearchError*>(&e)) {
    j["type"] = "density_search";
    j["worst_gap"] = d->worst_gap();
  } else if (const auto* p = dynamic_cast<const PreconditionError*>(&e)) {
    j["type"] = "precondition";
    j["slice"] = p->slice();
  } else if (dynamic_cast<const InvalidArgument*>(&e)) {
    j["type"] = "invalid_argument";
  } else {
    j["type"] = "numerical";
  }
  return j;
}

}  // namespace

RunOutcome run(ExperimentConfig config, const std::string& subcommand,
               const std::filesystem::path& out_dir, bool force) {
  RunOutcome outcome;
  outcome.out_dir = out_dir;
  const auto t0 = Clock::now();
  try {
    require_blocks(config, subcommand);
  } catch (const ConfigError& e) {
    outcome.exit_code = kExitConfig;
    outcome.message = e.what();
    return outcome;
  }

  std::error_code ec;
  if (std::filesystem::exists(out_dir, ec) && !std::filesystem::is_empty(out_dir, ec) && !force) {
    outcome.exit_code = kExitConfig;
    outcome.message = out_dir.string() + ": output directory is not empty (pass --force to overwrite)";
    return outcome;
  }
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    outcome.exit_code = kExitConfig;
    outcome.message = out_dir.string() + ": " + ec.message();
    return outcome;
  }
  std::filesystem::remove(out_dir / "report.json", ec);

  Json echo = config.source;
  echo["run"]["seed"] = config.run.seed;
  echo["run"]["workers"] = config.run.workers;
  echo["run"].erase("output");

  ArtifactWriter writer(out_dir);
  Json report = {{"schema_version", kSchemaVersion},
                 {"subcommand", subcommand},
                 {"seed", config.run.seed},
                 {"config", echo}};
  std::map<std::string, double> timings;
  std::string status = "ok";
  try {
    const SetupPtr setup = build_setup(config.problem);
    Context ctx(config, setup, writer, config.run.seed, config.run.workers);
    try {
      dispatch(ctx, subcommand);
      report["result"] = ctx.result;
    } catch (const Error&) {
      report["result"] = ctx.result;
      report["invariants"] = ctx.invariants;
      timings = ctx.timings;
      throw;
    }
    report["invariants"] = ctx.invariants;
    timings = ctx.timings;
    const bool all_pass = std::all_of(ctx.invariants.begin(), ctx.invariants.end(),
                                      [](const Json& j) { return j.at("pass").get<bool>(); });
    if (!all_pass) {
      status = "invariant_violation";
      outcome.exit_code = kExitInvariant;
      outcome.message = "one or more invariants failed";
    }
  } catch (const ConfigError& e) {
    status = "config_error";
    report["error"] = {{"type", "config"}, {"message", e.what()}};
    outcome.exit_code = kExitConfig;
    outcome.message = e.what();
  } catch (const InvalidArgument& e) {
    status = "config_error";
    report["error"] = error_json(e);
    outcome.exit_code = kExitConfig;
    outcome.message = e.what();
  } catch (const Error& e) {
    status = "numerical_failure";
    report["error"] = error_json(e);
    outcome.exit_code = kExitNumerical;
    outcome.message = e.what();
  }
  report["status"] = status;

  Json manifest = Json::array();
  for (const ArtifactEntry& e : writer.entries()) manifest.push_back(to_json(e));
  report["manifest"] = manifest;

  Json timing = Json::object();
  for (const auto& [phase, seconds] : timings) timing[phase] = seconds;
  timing["total"] = std::chrono::duration<double>(Clock::now() - t0).count();
  ArtifactWriter side(out_dir);
  side.json("timings.json", {{"subcommand", subcommand}, {"seconds", timing}});
  side.json("report.json", report);
  outcome.report = std::move(report);
  return outcome;
}

RunOutcome run(const RunOptions& options) {
  ExperimentConfig config;
  try {
    config = load_config(options.config_path);
  } catch (const ConfigError& e) {
    RunOutcome o;
    o.exit_code = kExitConfig;
    o.message = e.what();
    return o;
  }
  if (options.seed) config.run.seed = *options.seed;
  if (options.workers) {
    if (*options.workers < 1) {
      RunOutcome o;
      o.exit_code = kExitConfig;
      o.message = "--workers: must be at least 1";
      return o;
    }
    config.run.workers = *options.workers;
  }
  const std::filesystem::path out =
      options.out ? *options.out : (config.run.output ? *config.run.output : "parobs_out");
  return run(std::move(config), options.subcommand, out, options.force);
}

bool manifest_consistent(const Json& report, const std::filesystem::path& out_dir) {
  if (!report.contains("manifest")) return false;
  for (const Json& e : report.at("manifest")) {
    const std::filesystem::path p = out_dir / e.at("path").get<std::string>();
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) return false;
    if (std::filesystem::file_size(p, ec) != e.at("bytes").get<std::uintmax_t>() || ec) return false;
  }
  return true;
}

}  // namespace parobs
