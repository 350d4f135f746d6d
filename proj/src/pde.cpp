#include "parobs/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace parobs {

namespace {

Matrix sample(const FieldSampler& f, const Vector& nodes, int nt, double horizon) {
  Matrix m = Matrix::Zero(nodes.size(), nt + 1);
  if (!f) return m;
  for (int k = 0; k <= nt; ++k) {
    const double t = horizon * static_cast<double>(k) / nt;
    for (Eigen::Index i = 0; i < nodes.size(); ++i) m(i, k) = f(nodes(i), t);
  }
  if (!m.allFinite()) throw InvalidArgument("coefficient sampler returned a non-finite value");
  return m;
}

bool columns_agree(const Matrix& m) {
  for (Eigen::Index k = 1; k < m.cols(); ++k)
    if (m.col(k) != m.col(0)) return false;
  return true;
}

}  // namespace

ProblemSetup::ProblemSetup(const ProblemSpec& spec)
    : domain_(spec.domain),
      horizon_(spec.horizon),
      nx_(spec.nx),
      nt_(spec.nt),
      q_(spec.q),
      theta_(spec.theta) {
  require(domain_.lo < domain_.hi, "domain: x_lo must be below x_hi");
  require(horizon_ > 0.0, "horizon must be positive");
  require(nx_ >= 3, "nx must be at least 3");
  require(nt_ >= 2, "nt must be at least 2");
  require(q_ >= 2, "q must be at least 2 in one space dimension");
  require(theta_ >= 0.5 && theta_ <= 1.0, "theta must lie in [0.5, 1]");

  dx_ = domain_.length() / (nx_ + 1);
  nodes_.resize(nx_);
  for (int i = 0; i < nx_; ++i) nodes_(i) = domain_.lo + (i + 1) * dx_;

  potential_ = sample(spec.potential, nodes_, nt_, horizon_);
  drift_ = sample(spec.drift, nodes_, nt_, horizon_);
  if (spec.drift_divergence) {
    drift_divergence_ = sample(spec.drift_divergence, nodes_, nt_, horizon_);
  } else if (spec.drift) {
    const double h = dx_;
    const FieldSampler& b = spec.drift;
    drift_divergence_ = sample([&](double x, double t) { return (b(x + h, t) - b(x - h, t)) / (2 * h); },
                               nodes_, nt_, horizon_);
  } else {
    drift_divergence_ = Matrix::Zero(nx_, nt_ + 1);
  }

  for (int k = 0; k <= nt_; ++k) {
    const double lq = std::pow(dx_ * potential_.col(k).cwiseAbs().array().pow(q_).sum(), 1.0 / q_);
    potential_norm_ = std::max(potential_norm_, lq);
  }
  drift_norm_ = drift_.cwiseAbs().maxCoeff();
  time_independent_ = columns_agree(potential_) && columns_agree(drift_);
  build_cache();
}

void ProblemSetup::build_cache() {
  forward_cache_.reset();
  adjoint_cache_.reset();
  if (time_independent_) {
    forward_cache_ = forward_pair(0);
    adjoint_cache_ = adjoint_pair(0);
  }
}

Tridiagonal<double> ProblemSetup::spatial_operator(int k) const {
  Tridiagonal<double> op(nx_);
  const double inv2 = 1.0 / (dx_ * dx_);
  const double half = 0.5 / dx_;
  for (int i = 0; i < nx_; ++i) {
    const double b = drift_(i, k);
    op.diag(i) = -2.0 * inv2 - potential_(i, k);
    if (i > 0) op.lower(i) = inv2 + b * half;
    if (i + 1 < nx_) op.upper(i) = inv2 - b * half;
  }
  return op;
}

Tridiagonal<double> ProblemSetup::adjoint_spatial_operator(int k) const {
  Tridiagonal<double> op(nx_);
  const double inv2 = 1.0 / (dx_ * dx_);
  const double half = 0.5 / dx_;
  for (int i = 0; i < nx_; ++i) {
    op.diag(i) = -2.0 * inv2 - potential_(i, k);
    if (i > 0) op.lower(i) = inv2 - drift_(i - 1, k) * half;
    if (i + 1 < nx_) op.upper(i) = inv2 + drift_(i + 1, k) * half;
  }
  return op;
}

ProblemSetup::StepPair ProblemSetup::forward_pair(int k) const {
  const double dt = this->dt();
  return {ThomasSolver<double>(spatial_operator(k + 1).shifted_identity(-theta_ * dt)),
          spatial_operator(k).shifted_identity((1.0 - theta_) * dt)};
}

ProblemSetup::StepPair ProblemSetup::adjoint_pair(int k) const {
  const double dt = this->dt();
  return {ThomasSolver<double>(adjoint_spatial_operator(k + 1).shifted_identity(-theta_ * dt)),
          adjoint_spatial_operator(k).shifted_identity((1.0 - theta_) * dt)};
}

Vector ProblemSetup::forward_step(int k, const Vector& u) const {
  if (forward_cache_) return forward_cache_->implicit_solver.solve(forward_cache_->explicit_part.apply(u));
  const StepPair pair = forward_pair(k);
  return pair.implicit_solver.solve(pair.explicit_part.apply(u));
}

Vector ProblemSetup::adjoint_step(int k, const Vector& v) const {
  if (adjoint_cache_) return adjoint_cache_->explicit_part.apply(adjoint_cache_->implicit_solver.solve(v));
  const StepPair pair = adjoint_pair(k);
  return pair.explicit_part.apply(pair.implicit_solver.solve(v));
}

std::shared_ptr<const ProblemSetup> ProblemSetup::with_theta(double theta) const {
  require(theta >= 0.5 && theta <= 1.0, "theta must lie in [0.5, 1]");
  auto copy = std::make_shared<ProblemSetup>(*this);
  copy->theta_ = theta;
  copy->build_cache();
  return copy;
}

SetupPtr make_setup(const ProblemSpec& spec) { return std::make_shared<const ProblemSetup>(spec); }

Vector Trajectory::norms() const {
  Vector out(states.cols());
  for (Eigen::Index k = 0; k < states.cols(); ++k) out(k) = setup->norm(states.col(k));
  return out;
}

ObservationGeometry make_geometry(const Domain& domain, double omega_lo, double omega_hi,
                                  double x0, double r) {
  require(r > 0.0, "geometry: ball radius must be positive");
  require(domain.lo <= omega_lo && omega_lo < omega_hi && omega_hi <= domain.hi,
          "geometry: omega must be a subinterval of the domain");
  require(omega_lo <= x0 - r && x0 + r <= omega_hi, "geometry: ball must lie inside omega");
  ObservationGeometry g{omega_lo, omega_hi, x0, r, 0.0};
  g.m0 = std::max((x0 - domain.lo) * (x0 - domain.lo), (domain.hi - x0) * (domain.hi - x0));
  return g;
}

NodeRange node_range(const ProblemSetup& setup, double lo, double hi) {
  const Vector& x = setup.nodes();
  NodeRange range{x.size(), x.size()};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) > lo) {
      range.begin = i;
      break;
    }
  }
  range.end = range.begin;
  while (range.end < x.size() && x(range.end) < hi) ++range.end;
  return range;
}

namespace {

void check_initial(const ProblemSetup& setup, const Vector& v, const char* what) {
  require(v.size() == setup.nx(), std::string(what) + " must have nx entries");
  require(v.allFinite(), std::string(what) + " must be finite");
}

void check_source(const ProblemSetup& setup, const Matrix& s) {
  require(s.rows() == setup.nx() && s.cols() == setup.nt() + 1,
          "source must be an nx × (nt+1) array");
}

}  // namespace

Trajectory solve_forward(const SetupPtr& setup, const Vector& u0) {
  check_initial(*setup, u0, "initial state");
  Trajectory traj{setup, Matrix(setup->nx(), setup->nt() + 1)};
  traj.states.col(0) = u0;
  for (int k = 0; k < setup->nt(); ++k)
    traj.states.col(k + 1) = setup->forward_step(k, traj.states.col(k));
  return traj;
}

Trajectory solve_forward(const SetupPtr& setup, const Vector& u0, const Matrix& source) {
  check_initial(*setup, u0, "initial state");
  check_source(*setup, source);
  const double dt = setup->dt();
  Trajectory traj{setup, Matrix(setup->nx(), setup->nt() + 1)};
  traj.states.col(0) = u0;
  for (int k = 0; k < setup->nt(); ++k)
    traj.states.col(k + 1) = setup->forward_step(k, traj.states.col(k)) + dt * source.col(k + 1);
  return traj;
}

Vector propagate_forward(const SetupPtr& setup, const Vector& u0, const Matrix* source) {
  check_initial(*setup, u0, "initial state");
  if (source) check_source(*setup, *source);
  const double dt = setup->dt();
  Vector u = u0;
  for (int k = 0; k < setup->nt(); ++k) {
    u = setup->forward_step(k, u);
    if (source) u += dt * source->col(k + 1);
  }
  return u;
}

Trajectory solve_adjoint(const SetupPtr& setup, const Vector& terminal) {
  check_initial(*setup, terminal, "terminal state");
  const int nt = setup->nt();
  Trajectory traj{setup, Matrix(setup->nx(), nt + 1)};
  traj.states.col(nt) = terminal;
  for (int k = nt - 1; k >= 0; --k) traj.states.col(k) = setup->adjoint_step(k, traj.states.col(k + 1));
  return traj;
}

EnergyReport check_energy_estimate(const Trajectory& traj) {
  const ProblemSetup& setup = *traj.setup;
  EnergyReport report;
  const Vector norms = traj.norms();
  const double n0 = norms(0);
  if (n0 == 0.0) {
    report.trivial = report.vacuous = report.nonincreasing = true;
    return report;
  }
  const double rate = setup.potential_norm() * setup.potential_norm() +
                      setup.drift_norm() * setup.drift_norm();
  report.nonincreasing = true;
  report.max_growth = 1.0;
  for (int k = 1; k <= traj.steps(); ++k) {
    if (norms(k) > norms(k - 1) * (1.0 + 1e-12)) report.nonincreasing = false;
    const double growth = (norms(k) / n0) * (norms(k) / n0);
    report.max_growth = std::max(report.max_growth, growth);
    if (growth > 1.0) {
      if (rate == 0.0) {
        report.unbounded = true;
        continue;
      }
      report.fitted_C0 = std::max(report.fitted_C0, std::log(growth) / (setup.time(k) * rate));
    }
  }
  report.vacuous = report.max_growth <= 1.0;
  return report;
}

EigenPairs dirichlet_eigs(const ProblemSetup& setup, int count) {
  require(count >= 1 && count <= setup.nx(), "dirichlet_eigs: count must lie in [1, nx]");
  // Closed form; a dense eigensolver mixes in ~eps·|A|/gap of neighbouring modes.
  const Eigen::Index n = setup.nx();
  const double h = std::numbers::pi / static_cast<double>(n + 1);
  EigenPairs pairs;
  pairs.values.resize(count);
  pairs.vectors.resize(n, count);
  const double scale = std::sqrt(2.0 / (static_cast<double>(n + 1) * setup.dx()));
  for (int j = 0; j < count; ++j) {
    const double s = std::sin(0.5 * (j + 1) * h) * 2.0 / setup.dx();
    pairs.values(j) = s * s;
    for (Eigen::Index i = 0; i < n; ++i) pairs.vectors(i, j) = scale * std::sin(static_cast<double>((j + 1) * (i + 1)) * h);
  }
  return pairs;
}

DualityReport check_duality(const SetupPtr& setup, const Vector& psi0, const Matrix& source,
                            const Vector& terminal) {
  const Trajectory forward = solve_forward(setup, psi0, source);
  const Trajectory adjoint = solve_adjoint(setup, terminal);
  const int nt = setup->nt();
  DualityReport report;
  report.terminal_pairing = setup->inner(forward.at(nt), terminal);
  report.initial_pairing = setup->inner(psi0, adjoint.at(0));
  double scale = std::abs(report.terminal_pairing) + std::abs(report.initial_pairing);
  for (int k = 1; k <= nt; ++k) {
    const double term = setup->dt() * setup->inner(source.col(k), adjoint.at(k));
    report.source_pairing += term;
    scale += std::abs(term);
  }
  report.defect = std::abs(report.terminal_pairing - report.initial_pairing - report.source_pairing);
  report.scale = scale;
  return report;
}

double check_step_transpose(const ProblemSetup& setup) {
  double worst = 0.0;
  const int last = setup.time_independent() ? 0 : setup.nt();
  for (int k = 0; k <= last; ++k) {
    const Tridiagonal<double> lt = setup.spatial_operator(k).transpose();
    const Tridiagonal<double> la = setup.adjoint_spatial_operator(k);
    worst = std::max({worst, (lt.lower - la.lower).cwiseAbs().maxCoeff(),
                      (lt.diag - la.diag).cwiseAbs().maxCoeff(),
                      (lt.upper - la.upper).cwiseAbs().maxCoeff()});
  }
  return worst;
}

FeasibilityReport check_feasibility_conditions(const ProblemSetup& setup) {
  FeasibilityReport report;
  report.lambda1 = dirichlet_eigs(setup, 1).values(0);
  const Matrix reduced = setup.potential() - 0.5 * setup.drift_divergence();
  report.min_shifted = reduced.minCoeff() + report.lambda1;
  report.sup_reduced = reduced.cwiseAbs().maxCoeff();
  report.nonnegative_holds = report.min_shifted >= 0.0;
  report.bounded_holds = report.sup_reduced <= report.lambda1;
  return report;
}

}  // namespace parobs
