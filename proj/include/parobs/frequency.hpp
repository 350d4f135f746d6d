#pragma once

#include <vector>

#include "parobs/constants.hpp"
#include "parobs/pde.hpp"

namespace parobs {

/// Backward Gaussian G_λ(x,t) = (L - t + λ)^{-1/2} e^{-(x-x0)²/(4(L - t + λ))}.
struct WeightParams {
  double lambda = 1.0;
  double L = 1.0;
  double x0 = 0.5;
};

void validate(const WeightParams& params);

double gaussian_weight(const WeightParams& params, double x, double t);

/// G_λ at the given coordinates.
Vector gaussian_weight(const WeightParams& params, const Vector& x, double t);

/// Nodes including both boundary points, x_lo = y_0 < ... < y_{nx+1} = x_hi.
Vector closed_nodes(const ProblemSetup& setup);

/// ∂_x u on closed nodes for Dirichlet data: centered inside, second-order
/// one-sided at the boundary.
Vector dirichlet_gradient(const Vector& u, double dx);

/// Weighted trapezoid integrals of u² and (u_x)² against a weight sampled on
/// closed nodes.
struct WeightedIntegrals {
  double mass = 0.0;
  double energy = 0.0;
};

WeightedIntegrals weighted_integrals(const Vector& u, const Vector& weight, double dx);

struct CaloricResidual {
  double finite_difference = 0.0;   // max |D_t G + D_xx G| over interior nodes
  double analytic = 0.0;            // same with exact derivatives
};

/// Residual of (∂_t + ∂_xx)G_λ on a uniform grid of nx interior nodes over the
/// domain and nt steps over [0, L].
CaloricResidual caloric_residual(const WeightParams& params, const Domain& domain, int nx, int nt);

struct FrequencyTrace {
  std::vector<double> times;
  std::vector<double> numerators;     // ∫ |u_x|² G
  std::vector<double> denominators;   // ∫ |u|² G
  std::vector<double> values;         // N_{λ,u}
  bool truncated = false;             // snapshots below 1e-13 ‖u(0)‖ were dropped
};

/// N_{λ,u}(t_k) for every time level with 0 < t_k <= L.
FrequencyTrace frequency_trace(const Trajectory& traj, const WeightParams& params);

struct MonotonicityReport {
  std::vector<double> times;
  std::vector<double> scaled;          // (L - t + λ) N(t)
  double max_violation = 0.0;          // largest per-step increase
  double relative_violation = 0.0;     // divided by max |scaled|
  int worst_step = -1;
  bool strictly_decreasing = false;
  bool truncated = false;
};

/// Along pure-heat trajectories t ↦ (L - t + λ) N_{λ,u}(t) is nonincreasing.
MonotonicityReport check_frequency_monotonicity(const Trajectory& traj, const WeightParams& params);

struct HolderSample {
  double global_energy = 0.0;      // ∫_Ω |u(L)|²
  double ball_energy = 0.0;        // ∫_{B_r} |u(L)|²
  double initial_energy = 0.0;     // ∫_Ω |u(0)|²
  double slack = 0.0;              // log RHS - log LHS at the fitted constants
  bool excluded = false;
};

struct HolderReport {
  double alpha_hat = 0.0;
  double C_hat = 0.0;
  double amplification = 0.0;      // C (K + 1/L), the exponent on the initial energy
  double structural_C = 0.0;
  std::vector<HolderSample> samples;
  int excluded = 0;
  bool alpha_in_range = false;
  double min_slack = 0.0;
};

/// Fits the smallest α in (0,1) for which
///   ∫|u(L)|² <= (C ∫_{B_r}|u(L)|²)^{1-α} (e^{C(K+1/L)} ∫|u(0)|²)^α
/// holds over the ensemble with C the structural constant, then the smallest
/// ball prefactor Ĉ <= C at that α. Trajectories must reach time L.
HolderReport check_two_point_holder(const std::vector<Trajectory>& ensemble,
                                    const ObservationGeometry& geometry, const ConstantChain& chain,
                                    double L);

struct InterpolationPoint {
  double epsilon = 0.0;
  double lhs = 0.0;           // ‖u(t2)‖
  double log_rhs = 0.0;       // log of the right side with the configured c
  bool holds = false;
  double minimal_c = 0.0;     // smallest c for which this ε passes
};

struct InterpolationReport {
  std::vector<InterpolationPoint> points;
  double minimal_c = 0.0;     // over all tested ε
  double holding_lo = 0.0, holding_hi = 0.0;  // range of passing ε, zero if none
  bool all_hold = false;
};

/// ‖u(t2)‖ <= ε^{-γ} e^{c(K + 1/(t2-t1))β} ‖u(t2)‖_{L¹(B_r)} + ε ‖u(t1)‖,
/// evaluated in log form.
InterpolationReport check_eps_interpolation(const Trajectory& traj,
                                            const ObservationGeometry& geometry,
                                            const ConstantChain& chain, double t1, double t2,
                                            const std::vector<double>& eps_grid);

struct PotentialBoundPoint {
  double epsilon = 0.0;
  double squared_constant = 0.0;   // minimal C with ∫|aφ|²G <= ε∫|φ'|²G + C∫φ²G
  double signed_constant = 0.0;    // same for ∫aφ²G
  double sup_squared_constant = 0.0;  // sup over the discrete H¹₀ space
};

struct PotentialBoundReport {
  std::vector<PotentialBoundPoint> points;
  double a_norm = 0.0;             // ‖a‖_{L^q} of the slice
  double fitted_slope = 0.0;       // log-log slope of the sup constant against ε
  double theoretical_slope = -1.0; // -p/(2-p) with p = 1
  bool slope_ok = false;           // within 20% of the theory
};

/// φ, a_slice on interior nodes; weight evaluated at time t.
PotentialBoundReport check_weighted_potential_bound(const ProblemSetup& setup, const Vector& phi,
                                                    const Vector& a_slice,
                                                    const WeightParams& params, double t,
                                                    const std::vector<double>& eps_grid);

struct BallConcentrationReport {
  double lhs = 0.0;               // ∫_Ω f² e^{-|x-x0|²/4λ}
  double ball_term = 0.0;         // ∫_{B_r} f² e^{...}
  double frequency = 0.0;         // N_{λ,f} at t = L
  double remainder_term = 0.0;    // (16λ/r²)(λN + 1/4) lhs
  double slack = 0.0;             // ball + remainder - lhs
  double scale = 0.0;
};

/// Static form of the ball-concentration inequality for f on interior nodes.
BallConcentrationReport check_ball_concentration(const ProblemSetup& setup, const Vector& f,
                                                 const WeightParams& params,
                                                 const ObservationGeometry& geometry);

}  // namespace parobs
