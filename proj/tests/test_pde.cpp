#include <doctest.h>

#include <cmath>
#include <numbers>

#include "parobs/control_field.hpp"
#include "parobs/pde.hpp"
#include "parobs/random.hpp"

using namespace parobs;
using std::numbers::pi;

namespace {

Vector sine_mode(const ProblemSetup& s, int j) {
  return (j * pi * (s.nodes().array() - s.domain().lo) / s.domain().length()).sin().matrix();
}

SetupPtr heat(int nx, int nt, double T = 1.0, double theta = 0.5) {
  ProblemSpec spec;
  spec.nx = nx;
  spec.nt = nt;
  spec.horizon = T;
  spec.theta = theta;
  return make_setup(spec);
}

double decay_error(int nx, int nt) {
  const SetupPtr s = heat(nx, nt, 0.1);
  const Vector u0 = sine_mode(*s, 1);
  const double ratio = s->norm(propagate_forward(s, u0)) / s->norm(u0);
  return std::abs(ratio - std::exp(-pi * pi * 0.1));
}

}  // namespace

TEST_CASE("eigenmode decay") {
  const SetupPtr s = heat(256, 2048);
  const Vector u0 = sine_mode(*s, 1);
  const Trajectory traj = solve_forward(s, u0);
  const double ratio = s->norm(traj.at(s->nt())) / s->norm(u0);
  CHECK(std::abs(ratio / std::exp(-pi * pi) - 1.0) <= 1e-3);

  const Vector norms = traj.norms();
  for (int k = 1; k <= s->nt(); ++k) CHECK(norms(k) <= norms(k - 1) * (1 + 1e-12));
}

TEST_CASE("shifted eigenmode decay with a constant potential") {
  ProblemSpec spec;
  spec.nx = 256;
  spec.nt = 2048;
  spec.potential = [](double, double) { return 3.0; };
  const SetupPtr s = make_setup(spec);
  const Vector u0 = sine_mode(*s, 1);
  const double ratio = s->norm(propagate_forward(s, u0)) / s->norm(u0);
  CHECK(std::abs(ratio / std::exp(-(pi * pi + 3.0)) - 1.0) <= 1e-3);
}

TEST_CASE("zero data stays zero") {
  const SetupPtr s = heat(32, 16);
  CHECK(solve_forward(s, Vector::Zero(32)).states.isZero(0.0));
  CHECK(solve_adjoint(s, Vector::Zero(32)).states.isZero(0.0));
}

TEST_CASE("second-order convergence of the Crank-Nicolson scheme") {
  const double e1 = decay_error(32, 16), e2 = decay_error(64, 32), e3 = decay_error(128, 64);
  CHECK(e1 / e2 >= 3.5);
  CHECK(e2 / e3 >= 3.5);
}

TEST_CASE("adjoint of the heat equation is the time-reversed forward solve") {
  ProblemSpec spec;
  spec.nx = 64;
  spec.nt = 100;
  spec.potential = [](double x, double) { return 4.0 * std::sin(3.0 * x) - 1.0; };
  const SetupPtr s = make_setup(spec);
  Rng rng(5);
  const Vector data = rng.normal_vector(64);
  const Trajectory fwd = solve_forward(s, data);
  const Trajectory adj = solve_adjoint(s, data);
  for (int k = 0; k <= s->nt(); ++k)
    CHECK((fwd.at(k) - adj.at(s->nt() - k)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("discrete duality with time-dependent coefficients and drift") {
  ProblemSpec spec;
  spec.nx = 64;
  spec.nt = 128;
  spec.potential = [](double x, double t) { return 3.0 * std::cos(5 * x + t); };
  spec.drift = [](double x, double t) { return 2.0 * x - t; };
  const SetupPtr s = make_setup(spec);
  CHECK_FALSE(s->time_independent());
  CHECK(check_step_transpose(*s) <= 1e-12);
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector psi0 = rng.normal_vector(64), thetaT = rng.normal_vector(64);
    Matrix v(64, 129);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
    const DualityReport r = check_duality(s, psi0, v, thetaT);
    CHECK(r.relative() <= 1e-10);
  }
  const DualityReport zero = check_duality(s, Vector::Zero(64), Matrix::Zero(64, 129), Vector::Zero(64));
  CHECK(zero.defect == 0.0);
}

TEST_CASE("duality pairing through a control field on a fat Cantor support") {
  const SetupPtr s = heat(64, 128);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.5, 0.4, 0.05);
  ControlField f = make_control(s, g, fat_cantor(1.0, 4));
  Rng rng(1);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = rng.normal();
  f.restrict_to_support();
  CHECK(f.support_contained());
  const DualityReport r = check_duality(s, rng.normal_vector(64), f, rng.normal_vector(64));
  CHECK(r.relative() <= 1e-10);
}

TEST_CASE("energy estimate fit") {
  const SetupPtr s = heat(64, 200);
  const EnergyReport decay = check_energy_estimate(solve_forward(s, sine_mode(*s, 1)));
  CHECK(decay.vacuous);
  CHECK(decay.nonincreasing);
  CHECK(decay.fitted_C0 == 0.0);

  CHECK(check_energy_estimate(solve_forward(s, Vector::Zero(64))).trivial);

  ProblemSpec spec;
  spec.domain = {0.0, 2.0};
  spec.nx = 64;
  spec.nt = 200;
  spec.potential = [](double, double) { return -5.0; };
  const SetupPtr amp = make_setup(spec);
  const Trajectory traj = solve_forward(amp, sine_mode(*amp, 1));
  const EnergyReport grow = check_energy_estimate(traj);
  CHECK_FALSE(grow.vacuous);
  CHECK(grow.fitted_C0 > 0.0);
  CHECK(std::isfinite(grow.fitted_C0));
  // The fitted constant makes the estimate hold at every level.
  const Vector n = traj.norms();
  const double rate = amp->potential_norm() * amp->potential_norm();
  for (int k = 0; k <= amp->nt(); ++k)
    CHECK(n(k) * n(k) <= std::exp(grow.fitted_C0 * amp->time(k) * rate) * n(0) * n(0) * (1 + 1e-12));
}

TEST_CASE("Dirichlet eigenpairs") {
  const SetupPtr s = heat(256, 4);
  const EigenPairs e = dirichlet_eigs(*s, 6);
  CHECK(std::abs(e.values(0) / (pi * pi) - 1.0) <= 1e-3);
  const double dx = s->dx();
  for (int j = 0; j < 6; ++j) {
    const double exact = 4.0 / (dx * dx) * std::pow(std::sin((j + 1) * pi * dx / 2.0), 2);
    CHECK(e.values(j) == doctest::Approx(exact).epsilon(1e-10));
    if (j > 0) CHECK(e.values(j) > e.values(j - 1));
  }
  const Matrix gram = dx * e.vectors.transpose() * e.vectors;
  CHECK((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("feasibility conditions") {
  const SetupPtr free = heat(64, 4);
  const FeasibilityReport both = check_feasibility_conditions(*free);
  CHECK(both.nonnegative_holds);
  CHECK(both.bounded_holds);
  const double l1 = both.lambda1;

  ProblemSpec spec;
  spec.nx = 64;
  spec.nt = 4;
  spec.potential = [l1](double, double) { return -2.0 * l1; };
  const FeasibilityReport fail = check_feasibility_conditions(*make_setup(spec));
  CHECK_FALSE(fail.nonnegative_holds);
  CHECK_FALSE(fail.bounded_holds);

  spec.potential = [l1](double, double) { return 0.5 * l1; };
  const FeasibilityReport half = check_feasibility_conditions(*make_setup(spec));
  CHECK(half.bounded_holds);
  CHECK(half.sup_reduced == doctest::Approx(0.5 * l1));
}

TEST_CASE("setup validation") {
  ProblemSpec spec;
  spec.nx = 2;
  CHECK_THROWS_AS(make_setup(spec), InvalidArgument);
  spec.nx = 16;
  spec.theta = 0.3;
  CHECK_THROWS_AS(make_setup(spec), InvalidArgument);
  spec.theta = 0.5;
  spec.domain = {1.0, 0.0};
  CHECK_THROWS_AS(make_setup(spec), InvalidArgument);
}

TEST_CASE("coefficient norms") {
  ProblemSpec spec;
  spec.nx = 999;
  spec.nt = 4;
  spec.q = 2;
  spec.potential = [](double x, double) { return x; };
  spec.drift = [](double x, double t) { return -3.0 * x * (1 + t); };
  const SetupPtr s = make_setup(spec);
  CHECK(s->potential_norm() == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-3));
  CHECK(s->drift_norm() == doctest::Approx(6.0 * s->nodes()(998)).epsilon(1e-12));
}

TEST_CASE("implicit Euler steps are stable for stiff potentials") {
  ProblemSpec spec;
  spec.nx = 64;
  spec.nt = 10;
  spec.theta = 1.0;
  spec.potential = [](double, double) { return 1e4; };
  const SetupPtr s = make_setup(spec);
  const Vector u = propagate_forward(s, Vector::Ones(64));
  CHECK(u.allFinite());
  CHECK(u.cwiseAbs().maxCoeff() < 1.0);
}
