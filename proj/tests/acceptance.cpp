// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Reference values come from closed forms or from oracles written
// here independently of the library code paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "parobs/constants.hpp"
#include "parobs/control.hpp"
#include "parobs/frequency.hpp"
#include "parobs/random.hpp"
#include "parobs/runner.hpp"

using namespace parobs;
using std::numbers::pi;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

SetupPtr heat(int nx, int nt, double T, double theta = 0.5) {
  ProblemSpec spec;
  spec.nx = nx;
  spec.nt = nt;
  spec.horizon = T;
  spec.theta = theta;
  return make_setup(spec);
}

Vector sine(const ProblemSetup& s, int j) { return (j * pi * s.nodes().array()).sin().matrix(); }

// ‖y(T)‖/‖y0‖ from a fresh forward solve.
double defect_of(const SetupPtr& s, const Vector& y0, const ControlField& f) {
  const Matrix source = f.source();
  return s->norm(propagate_forward(s, y0, &source)) / s->norm(y0);
}

Vector random_modes(const ProblemSetup& s, Rng& rng, int count) {
  Vector u = Vector::Zero(s.nx());
  for (int j = 1; j <= count; ++j) u += rng.normal() / j * sine(s, j);
  return u;
}

// 1. ‖u(T)‖/‖u0‖ against e^{-π²T}.
Verdict eigenmode_decay() {
  const auto t0 = std::chrono::steady_clock::now();
  const SetupPtr s = heat(256, 2048, 1.0);
  const Vector u0 = sine(*s, 1);
  const Vector uT = propagate_forward(s, u0);
  const double ratio = s->norm(uT) / s->norm(u0);
  const double expected = std::exp(-pi * pi);
  const double rel = std::abs(ratio - expected) / expected;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {rel <= 1e-3 && secs < 5.0, fmt("relative error %.3e (<= 1e-3), runtime %.2f s (< 5 s)", rel, secs)};
}

// 2. 100 random triples with nonzero, time-dependent coefficients.
Verdict discrete_duality() {
  const auto t0 = std::chrono::steady_clock::now();
  ProblemSpec spec;
  spec.nx = 64;
  spec.nt = 128;
  spec.potential = [](double x, double t) { return 2.0 + std::sin(3.0 * x) * std::cos(2.0 * t); };
  spec.drift = [](double x, double t) { return 0.5 * std::cos(2.0 * x + t); };
  const SetupPtr s = make_setup(spec);
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vector psi0 = rng.normal_vector(s->nx()), thetaT = rng.normal_vector(s->nx());
    Matrix source(s->nx(), s->nt() + 1);
    for (Eigen::Index k = 0; k < source.cols(); ++k) source.col(k) = rng.normal_vector(s->nx());
    worst = std::max(worst, check_duality(s, psi0, source, thetaT).relative());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-10 && secs < 10.0,
          fmt("worst relative defect %.3e (<= 1e-10), runtime %.2f s (< 10 s)", worst, secs)};
}

// Independent |E ∩ (a, b)| in long double.
long double mass_between(const TimeSet& E, long double a, long double b) {
  long double m = 0.0L;
  for (const Interval& iv : E.intervals()) {
    const long double lo = std::max<long double>(iv.lo, a), hi = std::min<long double>(iv.hi, b);
    if (hi > lo) m += hi - lo;
  }
  return m;
}

// 3. Density sequences for fat Cantor sets.
Verdict density_construction() {
  const auto t0 = std::chrono::steady_clock::now();
  int sequences = 0, failures = 0;
  double worst_geometric = 0.0;
  for (int depth = 4; depth <= 10; ++depth) {
    const TimeSet E = fat_cantor(1.0, depth);
    const std::vector<double> points = sample_density_points(E, 20, 1000 + depth);
    for (double z : {1.1, std::sqrt(4.0 / 3.0), 2.0}) {
      for (double base : points) {
        ++sequences;
        DensitySequence seq;
        try {
          seq = density_sequence(E, base, z, 8);
        } catch (const DensitySearchError&) {
          ++failures;
          continue;
        }
        bool ok = seq.count() == 8;
        for (std::size_t m = 0; ok && m + 1 < seq.count(); ++m) {
          const long double hi = seq.points[m], lo = seq.points[m + 1];
          ok = hi - lo <= 3.0L * mass_between(E, lo, hi) + 1e-12L;
        }
        for (std::size_t m = 0; m < seq.count(); ++m) {
          const long double expected = base + std::pow(static_cast<long double>(z), -static_cast<long double>(m)) *
                                                  (static_cast<long double>(seq.first) - base);
          worst_geometric = std::max<double>(worst_geometric, std::fabs(seq.points[m] - expected) / std::fabs(expected));
        }
        if (!ok) ++failures;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {failures == 0 && worst_geometric <= 1e-12 && secs < 5.0,
          fmt("%d sequences, %d failing gap checks, max relative deviation from l + z^-m (l1 - l) %.1e, runtime %.2f s (< 5 s)",
              sequences, failures, worst_geometric, secs)};
}

// 4. (L - t + λ) N(t) nonincreasing along pure-heat trajectories.
Verdict frequency_monotonicity() {
  const SetupPtr s = heat(256, 4096, 0.5, 1.0);
  Rng rng(44);
  double worst = 0.0, worst_abs = 0.0;
  for (int sample = 0; sample < 10; ++sample) {
    const Trajectory traj = solve_forward(s, random_modes(*s, rng, 5));
    for (double lambda : {0.01, 0.1, 1.0}) {
      const MonotonicityReport r = check_frequency_monotonicity(traj, WeightParams{lambda, 0.5, 0.5});
      worst = std::max(worst, r.relative_violation);
      worst_abs = std::max(worst_abs, r.max_violation);
    }
  }
  return {worst <= 1e-8, fmt("worst per-step increase %.3e relative (%.3e absolute), bound 1e-8", worst, worst_abs)};
}

// 5. Second-order caloric residual: ratio >= 3.5 across three refinements.
Verdict caloric_weight() {
  const WeightParams p{0.1, 0.5, 0.4};
  const Domain omega{0.0, 1.0};
  std::vector<double> r;
  for (int level = 0; level < 4; ++level)
    r.push_back(caloric_residual(p, omega, 32 << level, 128 << level).finite_difference);
  double worst = std::numeric_limits<double>::infinity();
  std::string ratios;
  for (std::size_t i = 1; i < r.size(); ++i) {
    worst = std::min(worst, r[i - 1] / r[i]);
    ratios += fmt(" %.3f", r[i - 1] / r[i]);
  }
  return {worst >= 3.5, "Richardson ratios" + ratios + " (>= 3.5)"};
}

HolderReport holder_fit(int nx) {
  const SetupPtr s = heat(nx, 256, 0.5);
  Rng rng(66);
  std::vector<Trajectory> ensemble;
  for (int i = 0; i < 20; ++i) ensemble.push_back(solve_forward(s, random_modes(*s, rng, 5)));
  const ObservationGeometry g = make_geometry(s->domain(), 0.35, 0.45, 0.4, 0.05);
  ChainInputs in;
  in.horizon = 0.5;
  in.r = 0.05;
  return check_two_point_holder(ensemble, g, compute_chain(in), 0.5);
}

// 6. Two-point Hölder fit and its stability under doubling nx.
Verdict holder_structure() {
  const HolderReport coarse = holder_fit(64), fine = holder_fit(128);
  const double change = std::abs(fine.alpha_hat - coarse.alpha_hat) / coarse.alpha_hat;
  const bool ok = coarse.alpha_in_range && fine.alpha_in_range && coarse.min_slack >= 0.0 &&
                  fine.min_slack >= 0.0 && change <= 0.1;
  return {ok, fmt("alpha %.4f -> %.4f (change %.2f%%, <= 10%%), min slack %.2e / %.2e (>= 0)", coarse.alpha_hat,
                  fine.alpha_hat, 100.0 * change, coarse.min_slack, fine.min_slack)};
}

// 7. Ball-concentration slack on random discrete H¹ fields.
Verdict ball_concentration() {
  const SetupPtr s = heat(256, 4, 1.0);
  Rng rng(77);
  double worst = std::numeric_limits<double>::infinity();
  int cases = 0;
  for (int sample = 0; sample < 50; ++sample) {
    // Smooth part plus nodal noise: any grid function is discrete H¹₀.
    Vector f = random_modes(*s, rng, 8) + 0.1 * rng.normal_vector(s->nx());
    for (double lambda : {0.01, 0.1})
      for (double r : {0.1, 0.2}) {
        const ObservationGeometry g = make_geometry(s->domain(), 0.25, 0.75, 0.5, r);
        const BallConcentrationReport b = check_ball_concentration(*s, f, WeightParams{lambda, 0.5, 0.5}, g);
        worst = std::min(worst, b.slack / b.scale);
        ++cases;
      }
  }
  return {worst >= -1e-10, fmt("%d cases, min slack/scale %.3e (>= -1e-10)", cases, worst)};
}

// 8. Identities over 1000 random chains.
Verdict chain_identities() {
  Rng rng(88);
  double worst_z = 0.0, worst_eta = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    ChainInputs in;
    in.horizon = rng.uniform(0.05, 2.0);
    in.a_norm = rng.uniform(0.0, 5.0);
    in.b_norm = rng.uniform(0.0, 1.5);
    in.r = rng.uniform(0.05, 1.0);
    in.q = 2 + static_cast<int>(rng.uniform(0.0, 4.0));
    in.structural.C = rng.uniform(0.1, 3.0);
    in.structural.d = rng.uniform(0.0, 2.0);
    const ConstantChain c = compute_chain(in);
    const double ell = rng.uniform(0.0, 0.5 * in.horizon);
    const ConstantChain bound = bind_interval(c, ell, ell + rng.uniform(1e-3, 0.5) * (in.horizon - ell));
    // (γ+1)z² = γ+2 re-evaluated in long double from the stored z.
    const long double g = c.gamma, z = c.z;
    worst_z = std::max<double>(worst_z, std::fabs((g + 1) * z * z - (g + 2)) / (g + 2));
    worst_eta = std::max(worst_eta, compute_eta_gamma_identity_check(bound).relative);
  }
  return {worst_z <= 1e-12 && worst_eta <= 1e-12,
          fmt("max relative error: z identity %.2e, eta-gamma identity %.2e (<= 1e-12)", worst_z, worst_eta)};
}

// 9. HUM null control from a fat Cantor time set.
Verdict fat_cantor_null_control() {
  const auto t0 = std::chrono::steady_clock::now();
  const SetupPtr s = heat(128, 512, 1.0);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.5, 0.4, 0.05);
  const Vector psi0 = sine(*s, 1) + 0.5 * sine(*s, 3);
  HumOptions o;
  o.tol = 1e-3;
  o.max_iter = 500;
  const HumResult r = hum_null_control(s, g, fat_cantor(1.0, 8), psi0, o);
  // Independent terminal check.
  const double defect = defect_of(s, psi0, r.control);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {defect <= 1e-3 && r.report.iterations <= 500 && secs < 60.0,
          fmt("defect %.3e (<= 1e-3; uncontrolled %.3e), %d iterations (<= 500), runtime %.2f s (< 60 s)", defect,
              r.report.uncontrolled, r.report.iterations, secs)};
}

// 9 (supplement, not a criterion): the same instance driven well below the
// free decay, so the control does real work.
std::string fat_cantor_tight() {
  const SetupPtr s = heat(128, 512, 1.0);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.5, 0.4, 0.05);
  const Vector psi0 = sine(*s, 1) + 0.5 * sine(*s, 3);
  HumOptions o;
  o.tol = 1e-7;
  o.max_iter = 500;
  try {
    const HumResult r = hum_null_control(s, g, fat_cantor(1.0, 8), psi0, o);
    return fmt("tol 1e-7: defect %.3e in %d iterations", r.report.defect, r.report.iterations);
  } catch (const ConvergenceError& e) {
    return fmt("tol 1e-7: not reached in 500 iterations (last %.3e)", e.history().back());
  }
}

// 10. Bang-bang norm-optimal control and agreement of two starts.
Verdict bang_bang() {
  const SetupPtr s = heat(128, 1024, 1.0);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.7, 0.5, 0.1);
  const Vector y0 = sine(*s, 1);
  NormOptimalOptions o;
  const NormOptimalResult a = norm_optimal_control(s, g, 0.0, y0, o);
  o.random_start = true;
  o.seed = 0xfeed;
  const NormOptimalResult b = norm_optimal_control(s, g, 0.0, y0, o);
  const double diff = (a.control.values - b.control.values).norm() / a.control.values.norm();
  const double defect = defect_of(s, y0, a.control);
  const bool ok = a.bang_bang_cv <= 0.02 && b.bang_bang_cv <= 0.02 && defect <= 1e-3 && diff <= 1e-3;
  return {ok, fmt("cv %.2e / %.2e (<= 0.02), defect %.2e (<= 1e-3; ball radius %.2e), two starts differ by %.2e "
                  "(<= 1e-3), M~ %.6e",
                  a.bang_bang_cv, b.bang_bang_cv, defect, a.radius / s->norm(y0), diff, a.M_tilde)};
}

// 11. Improvement construction on a padded control.
Verdict improvement() {
  const SetupPtr s = heat(64, 512, 1.0);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.7, 0.5, 0.1);
  const Vector y0 = sine(*s, 1);
  const NormOptimalResult base = norm_optimal_control(s, g, 0.0, y0);
  const double M = base.M_tilde, eps = 0.2 * M;
  const TimeSet E = TimeSet::normalize({{0.2, 0.3}, {0.5, 0.65}}, 1.0).set;  // measure T/4
  ControlField f = base.control;
  const Vector wE = cell_fractions(E, s->nt());
  for (int k = 1; k <= s->nt(); ++k)
    if (wE(k) > 0.0) f.values.col(k) *= (M - eps) / M;

  const double kappa = estimate_kappa(s, g, E).value;
  ImproveOptions o;
  o.bound = M;
  o.kappa = kappa;
  o.hum.tol = 1e-10;
  o.hum.max_iter = 2000;
  const ImproveResult r = improve_control(s, g, f, E, eps, y0, o);
  const double y0n = s->norm(y0);
  const double delta = eps / (kappa * y0n + eps);
  const double factor = r.sup_after / M;
  const double off = std::abs(factor / (1.0 - delta) - 1.0);
  const double before = defect_of(s, y0, f);
  const double after = defect_of(s, y0, r.improved);
  const bool ok = std::abs(measure(E) - 0.25) <= 1e-12 && r.sup_after < M && off <= 0.05 && r.delta == delta &&
                  after <= before * (1.0 + 1e-6) + 1e-12;
  return {ok, fmt("|E| %.4f, delta %.6e (formula exact: %s), sup %.6e -> %.6e, factor %.5f vs 1-delta %.5f (off "
                  "%.2f%%, <= 5%%), defect %.3e -> %.3e",
                  measure(E), r.delta, r.delta == delta ? "yes" : "no", M, r.sup_after, factor, 1.0 - delta,
                  100.0 * off, before, after)};
}

// 12. N(τ) monotone, bisection count and bang-bang of g*.
Verdict time_optimal() {
  const SetupPtr s = heat(128, 1024, 1.0);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.7, 0.5, 0.1);
  const Vector y0 = sine(*s, 1);
  std::vector<double> N;
  Vector warm;
  for (int i = 0; i <= 7; ++i) {
    NormOptimalOptions o;
    if (warm.size()) o.warm_start = warm;
    const NormOptimalResult r = norm_optimal_control(s, g, 0.1 * i, y0, o);
    N.push_back(r.M_tilde);
    warm = r.dual_terminal;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < N.size(); ++i) monotone = monotone && N[i] >= N[i - 1] * (1.0 - 1e-8);

  TimeOptimalOptions o;
  o.M = 1.5 * N[0];
  const TimeOptimalResult r = time_optimal_control(s, g, y0, o);
  const int expected = static_cast<int>(std::ceil(std::log2(1.0 / s->dt())));
  const bool ok = monotone && r.iterations == expected && r.bang_bang_cv <= 0.03;
  return {ok, fmt("N(0..0.7) %s [%.3e .. %.3e], %d bisection steps (expected %d), tau* %.4f, cv %.2e (<= 0.03)",
                  monotone ? "nondecreasing" : "NOT monotone", N.front(), N.back(), r.iterations, expected,
                  r.tau_star, r.bang_bang_cv)};
}

// 13. κ_emp over nested time sets, through the experiment runner.
Verdict kappa_sweep() {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "parobs_acceptance_sweep";
  const Json doc = Json::parse(R"({
    "schema_version": 1,
    "problem": {"T": 1.0, "nx": 64, "nt": 256},
    "geometry": {"omega": [0.3, 0.7], "x0": 0.5, "r": 0.1},
    "timeset": {"kind": "fat_cantor", "depth": 3},
    "run": {"seed": 13, "sweep": {"subcommand": "kappa", "axis": "fraction",
                                  "values": [1.0, 0.75, 0.5, 0.25], "warm_start": true}}
  })");
  const RunOutcome out = run(parse_config(doc), "sweep", dir, true);
  std::vector<double> kappa;
  for (const Json& row : out.report.at("result").at("rows")) kappa.push_back(row.at("kappa_emp").get<double>());
  bool monotone = kappa.size() == 4;
  for (std::size_t i = 1; i < kappa.size(); ++i) monotone = monotone && kappa[i] >= kappa[i - 1];
  std::string col;
  for (double k : kappa) col += fmt(" %.4e", k);
  const bool ok = out.exit_code == kExitOk && monotone && manifest_consistent(out.report, dir);
  std::filesystem::remove_all(dir);
  return {ok, "kappa_emp at fractions 1, 0.75, 0.5, 0.25:" + col + (monotone ? " (nondecreasing)" : " (NOT monotone)")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"eigenmode decay", eigenmode_decay},
      {"discrete duality", discrete_duality},
      {"density-point sequences on fat Cantor sets", density_construction},
      {"frequency monotonicity", frequency_monotonicity},
      {"caloric weight second order", caloric_weight},
      {"two-point Holder structure", holder_structure},
      {"ball-concentration slack", ball_concentration},
      {"constant-chain identities", chain_identities},
      {"null control from a fat Cantor set", fat_cantor_null_control},
      {"bang-bang norm-optimal control", bang_bang},
      {"improvement construction", improvement},
      {"time-optimal control", time_optimal},
      {"kappa monotone over nested time sets", kappa_sweep},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %2zu  %-44s %s [%.2f s]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                v.detail.c_str(), secs);
    std::fflush(stdout);
    if (!v.pass) ++failed;
    if (i == 8) std::printf("      9+ supplement: %s\n", fat_cantor_tight().c_str());
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
