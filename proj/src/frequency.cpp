#include "parobs/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace parobs {

void validate(const WeightParams& params) {
  require(params.lambda > 0.0, "weight: lambda must be positive");
  require(params.L > 0.0, "weight: anchor time L must be positive");
}

double gaussian_weight(const WeightParams& params, double x, double t) {
  const double s = params.L - t + params.lambda;
  const double d = x - params.x0;
  return std::exp(-d * d / (4.0 * s)) / std::sqrt(s);
}

Vector gaussian_weight(const WeightParams& params, const Vector& x, double t) {
  validate(params);
  require(t <= params.L + 1e-12 * params.L, "weight: t must not exceed L");
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g(i) = gaussian_weight(params, x(i), t);
  return g;
}

Vector closed_nodes(const ProblemSetup& setup) {
  Vector y(setup.nx() + 2);
  y(0) = setup.domain().lo;
  y.segment(1, setup.nx()) = setup.nodes();
  y(setup.nx() + 1) = setup.domain().hi;
  return y;
}

Vector dirichlet_gradient(const Vector& u, double dx) {
  const Eigen::Index n = u.size();
  Vector padded = Vector::Zero(n + 2);
  padded.segment(1, n) = u;
  Vector g(n + 2);
  g(0) = (4.0 * padded(1) - padded(2)) / (2.0 * dx);
  g(n + 1) = -(4.0 * padded(n) - padded(n - 1)) / (2.0 * dx);
  for (Eigen::Index i = 1; i <= n; ++i) g(i) = (padded(i + 1) - padded(i - 1)) / (2.0 * dx);
  return g;
}

WeightedIntegrals weighted_integrals(const Vector& u, const Vector& weight, double dx) {
  const Eigen::Index n = u.size();
  require(weight.size() == n + 2, "weighted_integrals: weight must live on closed nodes");
  const Vector grad = dirichlet_gradient(u, dx);
  WeightedIntegrals out;
  // Trapezoid over closed nodes; u vanishes at both ends.
  out.mass = dx * (u.array().square() * weight.segment(1, n).array()).sum();
  const Eigen::ArrayXd e = grad.array().square() * weight.array();
  out.energy = dx * (e.sum() - 0.5 * (e(0) + e(n + 1)));
  return out;
}

CaloricResidual caloric_residual(const WeightParams& params, const Domain& domain, int nx, int nt) {
  validate(params);
  require(nx >= 1 && nt >= 2, "caloric_residual: need nx >= 1 and nt >= 2");
  const double dx = domain.length() / (nx + 1);
  const double dt = params.L / nt;
  CaloricResidual out;
  for (int k = 1; k < nt; ++k) {
    const double t = k * dt;
    const double s = params.L - t + params.lambda;
    for (int i = 0; i < nx; ++i) {
      const double x = domain.lo + (i + 1) * dx;
      const double g = gaussian_weight(params, x, t);
      const double dtg = (gaussian_weight(params, x, t + dt) - gaussian_weight(params, x, t - dt)) / (2 * dt);
      const double dxxg =
          (gaussian_weight(params, x + dx, t) - 2 * g + gaussian_weight(params, x - dx, t)) / (dx * dx);
      out.finite_difference = std::max(out.finite_difference, std::abs(dtg + dxxg));
      const double d2 = (x - params.x0) * (x - params.x0);
      const double exact_t = g * (0.5 / s - d2 / (4 * s * s));
      const double exact_xx = g * (d2 / (4 * s * s) - 0.5 / s);
      out.analytic = std::max(out.analytic, std::abs(exact_t + exact_xx));
    }
  }
  return out;
}

FrequencyTrace frequency_trace(const Trajectory& traj, const WeightParams& params) {
  validate(params);
  const ProblemSetup& setup = *traj.setup;
  require(params.L <= setup.horizon() * (1 + 1e-12), "frequency_trace: L exceeds the horizon");
  const Vector y = closed_nodes(setup);
  const double floor = 1e-13 * setup.norm(traj.at(0));
  require(floor > 0.0, "frequency_trace: trajectory is identically zero");
  FrequencyTrace trace;
  for (int k = 1; k <= traj.steps(); ++k) {
    const double t = setup.time(k);
    if (t > params.L * (1 + 1e-12)) break;
    const Vector u = traj.at(k);
    if (setup.norm(u) < floor) {
      trace.truncated = true;
      break;
    }
    const WeightedIntegrals w = weighted_integrals(u, gaussian_weight(params, y, std::min(t, params.L)), setup.dx());
    trace.times.push_back(t);
    trace.numerators.push_back(w.energy);
    trace.denominators.push_back(w.mass);
    trace.values.push_back(w.energy / w.mass);
  }
  return trace;
}

MonotonicityReport check_frequency_monotonicity(const Trajectory& traj, const WeightParams& params) {
  const FrequencyTrace trace = frequency_trace(traj, params);
  MonotonicityReport report;
  report.times = trace.times;
  report.truncated = trace.truncated;
  double scale = 0.0;
  for (std::size_t k = 0; k < trace.times.size(); ++k) {
    const double q = (params.L - trace.times[k] + params.lambda) * trace.values[k];
    report.scaled.push_back(q);
    scale = std::max(scale, std::abs(q));
  }
  report.strictly_decreasing = report.scaled.size() >= 2;
  for (std::size_t k = 1; k < report.scaled.size(); ++k) {
    const double increase = report.scaled[k] - report.scaled[k - 1];
    if (increase >= 0.0) report.strictly_decreasing = false;
    if (increase > report.max_violation) {
      report.max_violation = increase;
      report.worst_step = static_cast<int>(k);
    }
  }
  report.relative_violation = scale > 0.0 ? report.max_violation / scale : 0.0;
  return report;
}

namespace {

int time_index(const ProblemSetup& setup, double t, const char* what) {
  const double k = t / setup.dt();
  const long rounded = std::lround(k);
  require(rounded >= 0 && rounded <= setup.nt() && std::abs(k - rounded) <= 1e-9 * setup.nt(),
          std::string(what) + " must be a time level of the grid");
  return static_cast<int>(rounded);
}

}  // namespace

HolderReport check_two_point_holder(const std::vector<Trajectory>& ensemble,
                                    const ObservationGeometry& geometry, const ConstantChain& chain,
                                    double L) {
  require(!ensemble.empty(), "holder check: empty ensemble");
  HolderReport report;
  report.structural_C = chain.C;
  report.amplification = chain.C * (chain.K + 1.0 / L);
  const double log_c = std::log(chain.C);

  std::vector<double> xs, ys;
  for (const Trajectory& traj : ensemble) {
    const ProblemSetup& setup = *traj.setup;
    const int k = time_index(setup, L, "L");
    const NodeRange ball = node_range(setup, geometry.x0 - geometry.r, geometry.x0 + geometry.r);
    HolderSample s;
    const Vector uL = traj.at(k);
    s.global_energy = setup.dx() * uL.squaredNorm();
    s.ball_energy = setup.dx() * uL.segment(ball.begin, ball.size()).squaredNorm();
    s.initial_energy = setup.dx() * traj.at(0).squaredNorm();
    require(s.initial_energy > 0.0, "holder check: zero initial data");
    if (!(s.ball_energy > 1e-14 * s.global_energy) || s.ball_energy <= 0.0) {
      s.excluded = true;
      ++report.excluded;
    }
    report.samples.push_back(s);
    xs.push_back(s.excluded ? 0.0 : report.amplification + std::log(s.initial_energy / s.ball_energy));
    ys.push_back(s.excluded ? 0.0 : std::log(s.global_energy / s.ball_energy));
  }
  if (report.excluded == static_cast<int>(ensemble.size()))
    throw NumericalError("holder check: every sample has vanishing ball energy");

  double alpha = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (report.samples[i].excluded) continue;
    require(xs[i] > log_c, "holder check: amplified energy below the structural prefactor");
    alpha = std::max(alpha, (ys[i] - log_c) / (xs[i] - log_c));
  }
  report.alpha_hat = alpha;
  report.alpha_in_range = alpha > 0.0 && alpha < 1.0;

  double log_chat = -std::numeric_limits<double>::infinity();
  if (alpha < 1.0) {
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (!report.samples[i].excluded) log_chat = std::max(log_chat, (ys[i] - alpha * xs[i]) / (1.0 - alpha));
    log_chat += 1e-12 * std::max(1.0, std::abs(log_chat));
  }
  report.C_hat = std::exp(log_chat);

  report.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    HolderSample& s = report.samples[i];
    if (s.excluded) continue;
    s.slack = (1.0 - alpha) * log_chat + alpha * xs[i] - ys[i];
    report.min_slack = std::min(report.min_slack, s.slack);
  }
  return report;
}

InterpolationReport check_eps_interpolation(const Trajectory& traj,
                                            const ObservationGeometry& geometry,
                                            const ConstantChain& chain, double t1, double t2,
                                            const std::vector<double>& eps_grid) {
  require(t1 >= 0.0 && t1 < t2, "interpolation check: need 0 <= t1 < t2");
  require(!eps_grid.empty(), "interpolation check: empty epsilon grid");
  const ProblemSetup& setup = *traj.setup;
  const int k1 = time_index(setup, t1, "t1");
  const int k2 = time_index(setup, t2, "t2");
  const NodeRange ball = node_range(setup, geometry.x0 - geometry.r, geometry.x0 + geometry.r);
  const double lhs = setup.norm(traj.at(k2));
  const double earlier = setup.norm(traj.at(k1));
  const double ball_l1 = setup.dx() * traj.at(k2).segment(ball.begin, ball.size()).cwiseAbs().sum();
  const double rate = (chain.K + 1.0 / (t2 - t1)) * chain.beta;
  const double log_ball = std::log(ball_l1);

  InterpolationReport report;
  report.all_hold = true;
  bool any = false;
  for (double eps : eps_grid) {
    require(eps > 0.0, "interpolation check: epsilon must be positive");
    InterpolationPoint pt;
    pt.epsilon = eps;
    pt.lhs = lhs;
    const double log_first = -chain.gamma * std::log(eps) + chain.c * rate + log_ball;
    const double log_second = earlier > 0.0 ? std::log(eps * earlier) : -std::numeric_limits<double>::infinity();
    const double hi = std::max(log_first, log_second);
    pt.log_rhs = hi + std::log1p(std::exp(std::min(log_first, log_second) - hi));
    pt.holds = lhs == 0.0 || std::log(lhs) <= pt.log_rhs + 1e-12 * std::max(1.0, std::abs(pt.log_rhs));
    const double needed = lhs - eps * earlier;
    if (needed <= 0.0) {
      pt.minimal_c = 0.0;
    } else if (ball_l1 <= 0.0) {
      pt.minimal_c = std::numeric_limits<double>::infinity();
    } else {
      pt.minimal_c = std::max(0.0, (std::log(needed) + chain.gamma * std::log(eps) - log_ball) / rate);
    }
    report.minimal_c = std::max(report.minimal_c, pt.minimal_c);
    if (pt.holds) {
      if (!any) report.holding_lo = report.holding_hi = eps;
      report.holding_lo = std::min(report.holding_lo, eps);
      report.holding_hi = std::max(report.holding_hi, eps);
      any = true;
    } else {
      report.all_hold = false;
    }
    report.points.push_back(pt);
  }
  return report;
}

PotentialBoundReport check_weighted_potential_bound(const ProblemSetup& setup, const Vector& phi,
                                                    const Vector& a_slice,
                                                    const WeightParams& params, double t,
                                                    const std::vector<double>& eps_grid) {
  const Eigen::Index n = setup.nx();
  require(phi.size() == n && a_slice.size() == n, "potential bound: vectors must have nx entries");
  require(phi.squaredNorm() > 0.0, "potential bound: phi must be nonzero");
  require(!eps_grid.empty(), "potential bound: empty epsilon grid");
  const double dx = setup.dx();
  const Vector y = closed_nodes(setup);
  const Vector g = gaussian_weight(params, y, t);

  const WeightedIntegrals base = weighted_integrals(phi, g, dx);
  const double squared = dx * (a_slice.array().square() * phi.array().square() * g.segment(1, n).array()).sum();
  const double signed_term = dx * (a_slice.array() * phi.array().square() * g.segment(1, n).array()).sum();

  // Cell-centred stiffness and lumped mass for the supremum over H¹₀.
  Vector mid(n + 1);
  for (Eigen::Index j = 0; j <= n; ++j) mid(j) = gaussian_weight(params, 0.5 * (y(j) + y(j + 1)), t);
  const Vector mass = dx * g.segment(1, n);
  const Vector inv_sqrt_mass = mass.cwiseSqrt().cwiseInverse();

  PotentialBoundReport report;
  report.a_norm = std::pow(dx * a_slice.cwiseAbs().array().pow(setup.q()).sum(), 1.0 / setup.q());
  std::vector<double> log_eps, log_sup;
  for (double eps : eps_grid) {
    require(eps > 0.0, "potential bound: epsilon must be positive");
    PotentialBoundPoint pt;
    pt.epsilon = eps;
    pt.squared_constant = std::max(0.0, (squared - eps * base.energy) / base.mass);
    pt.signed_constant = std::max(0.0, (signed_term - eps * base.energy) / base.mass);

    Vector diag(n);
    Vector off(std::max<Eigen::Index>(n - 1, 0));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double stiff = (mid(i) + mid(i + 1)) / dx;
      diag(i) = a_slice(i) * a_slice(i) - eps * stiff * inv_sqrt_mass(i) * inv_sqrt_mass(i);
      if (i + 1 < n) off(i) = eps * mid(i + 1) / dx * inv_sqrt_mass(i) * inv_sqrt_mass(i + 1);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    pt.sup_squared_constant = std::max(0.0, solver.eigenvalues()(n - 1));
    if (pt.sup_squared_constant > 0.0) {
      log_eps.push_back(std::log(eps));
      log_sup.push_back(std::log(pt.sup_squared_constant));
    }
    report.points.push_back(pt);
  }
  if (log_eps.size() >= 2) {
    const double m = static_cast<double>(log_eps.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < log_eps.size(); ++i) {
      sx += log_eps[i];
      sy += log_sup[i];
      sxx += log_eps[i] * log_eps[i];
      sxy += log_eps[i] * log_sup[i];
    }
    report.fitted_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    report.slope_ok = std::abs(report.fitted_slope - report.theoretical_slope) <=
                      0.2 * std::abs(report.theoretical_slope);
  }
  return report;
}

BallConcentrationReport check_ball_concentration(const ProblemSetup& setup, const Vector& f,
                                                 const WeightParams& params,
                                                 const ObservationGeometry& geometry) {
  validate(params);
  require(f.size() == setup.nx(), "ball concentration: f must have nx entries");
  require(f.squaredNorm() > 0.0, "ball concentration: f must be nonzero");
  const double dx = setup.dx();
  const Vector y = closed_nodes(setup);
  Vector e(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    e(i) = std::exp(-(y(i) - params.x0) * (y(i) - params.x0) / (4.0 * params.lambda));

  const WeightedIntegrals w = weighted_integrals(f, e, dx);
  BallConcentrationReport report;
  report.lhs = w.mass;
  const NodeRange ball = node_range(setup, geometry.x0 - geometry.r, geometry.x0 + geometry.r);
  report.ball_term = dx * (f.segment(ball.begin, ball.size()).array().square() *
                           e.segment(ball.begin + 1, ball.size()).array()).sum();
  report.frequency = w.energy / w.mass;
  const double lambda = params.lambda;
  report.remainder_term =
      16.0 * lambda / (geometry.r * geometry.r) * (lambda * report.frequency + 0.25) * w.mass;
  report.slack = report.ball_term + report.remainder_term - report.lhs;
  report.scale = report.lhs + report.ball_term + report.remainder_term;
  return report;
}

}  // namespace parobs
