#include <doctest.h>

#include <cmath>
#include <numbers>

#include "parobs/frequency.hpp"
#include "parobs/random.hpp"

using namespace parobs;
using std::numbers::pi;

namespace {

SetupPtr heat(int nx, int nt, double T = 1.0, double theta = 1.0) {
  ProblemSpec spec;
  spec.nx = nx;
  spec.nt = nt;
  spec.horizon = T;
  spec.theta = theta;
  return make_setup(spec);
}

Vector mode(const ProblemSetup& s, int j) {
  return (j * pi * s.nodes().array()).sin().matrix();
}

Vector random_modes(const ProblemSetup& s, Rng& rng, int count) {
  Vector u = Vector::Zero(s.nx());
  for (int j = 1; j <= count; ++j) u += rng.normal() * mode(s, j);
  return u;
}

}  // namespace

TEST_CASE("Gaussian weight: normalization, symmetry, flat limit") {
  WeightParams p{1.0, 0.5, 0.4};
  CHECK(gaussian_weight(p, 0.4, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
  for (double d : {0.01, 0.1, 0.3})
    CHECK(gaussian_weight(p, 0.4 + d, 0.2) == doctest::Approx(gaussian_weight(p, 0.4 - d, 0.2)).epsilon(1e-15));
  const double tau = 0.5 - 0.2 + 1.0;
  CHECK(gaussian_weight(p, 0.9, 0.2) ==
        doctest::Approx(std::exp(-0.25 / (4.0 * tau)) / std::sqrt(tau)).epsilon(1e-14));
  WeightParams flat{1e8, 0.5, 0.4};
  for (double x : {0.0, 0.3, 1.0})
    CHECK(gaussian_weight(flat, x, 0.1) * std::sqrt(1e8) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK_THROWS_AS(validate(WeightParams{0.0, 0.5, 0.4}), InvalidArgument);
  CHECK_THROWS_AS(validate(WeightParams{1.0, 0.0, 0.4}), InvalidArgument);
}

TEST_CASE("boundary-closed gradient is second order") {
  double previous = 0.0;
  for (int nx : {32, 64, 128}) {
    const SetupPtr s = heat(nx, 4);
    const Vector y = closed_nodes(*s);
    const Vector g = dirichlet_gradient(mode(*s, 1), s->dx());
    REQUIRE(g.size() == nx + 2);
    const double err = (g - (pi * (pi * y.array()).cos()).matrix()).cwiseAbs().maxCoeff();
    if (previous > 0.0) CHECK(previous / err > 3.5);
    previous = err;
  }
}

TEST_CASE("weighted trapezoid integrals converge to the exact values") {
  const SetupPtr s = heat(256, 4);
  const Vector ones = Vector::Ones(s->nx() + 2);
  const WeightedIntegrals w = weighted_integrals(mode(*s, 1), ones, s->dx());
  CHECK(w.mass == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(w.energy == doctest::Approx(pi * pi / 2.0).epsilon(1e-4));
}

TEST_CASE("caloric residual: exact kernel and second-order discretization") {
  const WeightParams p{0.5, 0.5, 0.5};
  const Domain omega{0.0, 1.0};
  double previous = 0.0;
  for (int level = 0; level < 4; ++level) {
    const int nx = 16 << level, nt = 16 << level;
    const CaloricResidual r = caloric_residual(p, omega, nx, nt);
    CHECK(r.analytic < 1e-12);
    if (previous > 0.0) CHECK(previous / r.finite_difference >= 3.5);
    previous = r.finite_difference;
  }
}

TEST_CASE("frequency of an eigenmode under a nearly flat weight") {
  const SetupPtr s = heat(256, 64, 0.5);
  const Trajectory traj = solve_forward(s, mode(*s, 1));
  const FrequencyTrace trace = frequency_trace(traj, WeightParams{1e3, 0.5, 0.5});
  REQUIRE(!trace.values.empty());
  for (double n : trace.values) CHECK(n == doctest::Approx(pi * pi).epsilon(1e-2));

  const Trajectory doubled = solve_forward(s, 2.0 * mode(*s, 1));
  const FrequencyTrace trace2 = frequency_trace(doubled, WeightParams{1e3, 0.5, 0.5});
  for (std::size_t k = 0; k < trace.values.size(); ++k)
    CHECK(std::abs(trace2.values[k] - trace.values[k]) <= 1e-12 * trace.values[k]);
}

TEST_CASE("frequency trace is nonnegative, homogeneous and truncates dead snapshots") {
  Rng rng(21);
  const SetupPtr s = heat(64, 64, 0.5);
  const Vector u0 = random_modes(*s, rng, 5);
  const WeightParams p{0.1, 0.5, 0.3};
  const FrequencyTrace a = frequency_trace(solve_forward(s, u0), p);
  const FrequencyTrace b = frequency_trace(solve_forward(s, -3.7 * u0), p);
  CHECK(!a.truncated);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    CHECK(a.values[k] >= 0.0);
    CHECK(std::abs(a.values[k] - b.values[k]) <= 1e-12 * a.values[k]);
  }
  // A high mode on a short, coarse grid decays below the cutoff quickly.
  const SetupPtr fast = heat(16, 32, 4.0, 1.0);
  const FrequencyTrace dead = frequency_trace(solve_forward(fast, mode(*fast, 16)), WeightParams{1.0, 4.0, 0.5});
  CHECK(dead.truncated);
}

TEST_CASE("scaled frequency is nonincreasing along pure heat flow") {
  const SetupPtr s = heat(128, 1024, 0.5);
  for (double lambda : {0.01, 0.1, 1.0}) {
    const WeightParams p{lambda, 0.5, 0.5};
    const MonotonicityReport single = check_frequency_monotonicity(solve_forward(s, mode(*s, 1)), p);
    CHECK(single.max_violation <= 1e-8);
    const MonotonicityReport mixed =
        check_frequency_monotonicity(solve_forward(s, mode(*s, 1) + mode(*s, 2)), p);
    CHECK(mixed.max_violation <= 1e-8);
    CHECK(mixed.strictly_decreasing);
  }
}

TEST_CASE("two-point Holder fit over a random ensemble") {
  Rng rng(22);
  const SetupPtr s = heat(64, 128, 0.5);
  std::vector<Trajectory> ensemble;
  for (int i = 0; i < 20; ++i) ensemble.push_back(solve_forward(s, random_modes(*s, rng, 5)));
  const ObservationGeometry g = make_geometry(s->domain(), 0.35, 0.45, 0.4, 0.05);
  ChainInputs in;
  in.horizon = 0.5;
  in.r = 0.05;
  const ConstantChain chain = compute_chain(in);
  const HolderReport r = check_two_point_holder(ensemble, g, chain, 0.5);
  CHECK(r.alpha_in_range);
  CHECK(r.excluded == 0);
  CHECK(r.min_slack >= 0.0);
  CHECK(r.C_hat <= chain.C * (1.0 + 1e-9));

  std::vector<Trajectory> zero{solve_forward(s, Vector::Zero(s->nx()))};
  CHECK_THROWS_AS(check_two_point_holder(zero, g, chain, 0.5), InvalidArgument);
}

TEST_CASE("epsilon interpolation at the extremes of the epsilon range") {
  Rng rng(23);
  const SetupPtr s = heat(64, 100, 0.5);
  const Trajectory traj = solve_forward(s, random_modes(*s, rng, 5));
  const ObservationGeometry g = make_geometry(s->domain(), 0.35, 0.45, 0.4, 0.05);
  ChainInputs in;
  in.horizon = 0.5;
  in.r = 0.05;
  const ConstantChain chain = compute_chain(in);
  const InterpolationReport r = check_eps_interpolation(traj, g, chain, 0.1, 0.3, {1e-30, 1e-12, 1.0, 10.0, 1e6});
  CHECK(r.points.front().holds);
  CHECK(r.points[2].holds);
  CHECK(r.points.back().holds);
  CHECK(r.points[2].minimal_c == 0.0);
  CHECK(std::isfinite(r.minimal_c));
  CHECK_THROWS_AS(check_eps_interpolation(traj, g, chain, 0.3, 0.3, {1.0}), InvalidArgument);
}

TEST_CASE("weighted potential bound: trivial potentials") {
  Rng rng(24);
  const SetupPtr s = heat(64, 4);
  const Vector phi = random_modes(*s, rng, 6);
  const WeightParams p{0.1, 1.0, 0.5};
  const PotentialBoundReport zero = check_weighted_potential_bound(*s, phi, Vector::Zero(64), p, 0.5, {0.1, 0.01});
  for (const auto& pt : zero.points) {
    CHECK(pt.squared_constant == 0.0);
    CHECK(pt.signed_constant == 0.0);
    CHECK(pt.sup_squared_constant == 0.0);
  }
  const PotentialBoundReport flat =
      check_weighted_potential_bound(*s, phi, Vector::Constant(64, 3.0), p, 0.5, {1e-12});
  CHECK(flat.points[0].signed_constant == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(flat.points[0].sup_squared_constant == doctest::Approx(9.0).epsilon(1e-8));
  CHECK_THROWS_AS(check_weighted_potential_bound(*s, Vector::Zero(64), Vector::Zero(64), p, 0.5, {0.1}),
                  InvalidArgument);
}

TEST_CASE("weighted potential bound: supremum matches a dense eigen solve") {
  Rng rng(25);
  const SetupPtr s = heat(48, 4);
  const int n = s->nx();
  const double dx = s->dx();
  const WeightParams p{0.05, 1.0, 0.45};
  const double t = 0.7;
  Vector a(n);
  for (int i = 0; i < n; ++i) a(i) = 1.0 + std::sin(7.0 * s->nodes()(i)) + rng.uniform();
  const Vector phi = random_modes(*s, rng, 4);

  // Dense stiffness with midpoint weights and lumped weighted mass.
  Matrix S = Matrix::Zero(n, n), M = Matrix::Zero(n, n), Q = Matrix::Zero(n, n);
  for (int j = 0; j <= n; ++j) {
    const double xm = s->domain().lo + (j + 0.5) * dx;
    const double w = gaussian_weight(p, xm, t) / dx;
    if (j > 0) S(j - 1, j - 1) += w;
    if (j < n) S(j, j) += w;
    if (j > 0 && j < n) {
      S(j - 1, j) -= w;
      S(j, j - 1) -= w;
    }
  }
  for (int i = 0; i < n; ++i) {
    M(i, i) = dx * gaussian_weight(p, s->nodes()(i), t);
    Q(i, i) = a(i) * a(i) * M(i, i);
  }
  const std::vector<double> grid{1e-1, 1e-2, 1e-3};
  const PotentialBoundReport r = check_weighted_potential_bound(*s, phi, a, p, t, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(Q - grid[k] * S, M);
    const double expected = std::max(0.0, ges.eigenvalues().maxCoeff());
    CHECK(r.points[k].sup_squared_constant == doctest::Approx(expected).epsilon(1e-9));
    CHECK(r.points[k].squared_constant <= r.points[k].sup_squared_constant * (1.0 + 1e-9));
  }
}

TEST_CASE("weighted potential bound: spike potential scales like 1/epsilon") {
  const SetupPtr s = heat(512, 4);
  const int n = s->nx();
  Vector a = Vector::Zero(n);
  const int centre = n / 2;
  a(centre) = 1.0 / std::sqrt(s->dx());  // unit L² norm
  Rng rng(26);
  const Vector phi = random_modes(*s, rng, 4);
  const PotentialBoundReport r =
      check_weighted_potential_bound(*s, phi, a, WeightParams{0.1, 1.0, 0.5}, 0.5, {1e-1, 3e-2, 1e-2, 3e-3});
  CHECK(r.slope_ok);
  CHECK(r.fitted_slope == doctest::Approx(-1.0).epsilon(0.2));
}

TEST_CASE("ball concentration inequality") {
  const SetupPtr s = heat(256, 4);
  const ObservationGeometry g = make_geometry(s->domain(), 0.3, 0.7, 0.5, 0.2);
  const BallConcentrationReport sine = check_ball_concentration(*s, mode(*s, 1), WeightParams{0.1, 1.0, 0.5}, g);
  CHECK(sine.slack >= -1e-10 * sine.scale);

  Vector inside = Vector::Zero(s->nx());
  for (int i = 0; i < s->nx(); ++i) {
    const double x = s->nodes()(i);
    if (std::abs(x - 0.5) < 0.15) inside(i) = std::cos(pi * (x - 0.5) / 0.3);
  }
  const BallConcentrationReport local = check_ball_concentration(*s, inside, WeightParams{0.1, 1.0, 0.5}, g);
  CHECK(local.ball_term == doctest::Approx(local.lhs).epsilon(1e-12));
  CHECK(local.slack >= 0.0);

  // Small λ: the weight concentrates inside the ball and the ball term dominates.
  const BallConcentrationReport sharp = check_ball_concentration(*s, mode(*s, 1), WeightParams{5e-4, 1.0, 0.5}, g);
  CHECK(sharp.ball_term / sharp.lhs > 1.0 - 1e-6);
  CHECK_THROWS_AS(check_ball_concentration(*s, Vector::Zero(s->nx()), WeightParams{0.1, 1.0, 0.5}, g),
                  InvalidArgument);
}
