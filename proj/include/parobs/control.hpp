#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "parobs/control_field.hpp"

namespace parobs {

struct KappaOptions {
  int basis = 8;
  int starts = 4;          // including e_1 and warm starts
  int sweeps = 25;
  int samples = 33;        // per coordinate line search
  std::uint64_t seed = 0x5eed;
  /// Terminal data tried as additional starts (projected onto the basis).
  std::vector<Vector> warm_starts;
};

struct KappaEstimate {
  double value = 0.0;
  Vector terminal;          // maximizing terminal data, grid values
  Vector coefficients;      // in the eigenvector basis
  int basis = 0;            // modes kept; unresolved ones on omega × E are dropped
  std::vector<double> trace;  // best value after each sweep
  int evaluations = 0;
  std::uint64_t seed = 0;
};

/// Maximizes ‖ϑ(0)‖ / ∫_{ω×E} |ϑ| over terminal data spanned by the first
/// `basis` Dirichlet eigenvectors. The value is attained by the returned
/// candidate, so it is a lower bound of the discrete supremum.
KappaEstimate estimate_kappa(const SetupPtr& setup, const ObservationGeometry& geometry,
                             const TimeSet& E, const KappaOptions& options = {});

/// The observation ratio of a single terminal datum.
double observation_ratio(const SetupPtr& setup, const ObservationGeometry& geometry,
                         const TimeSet& E, const Vector& terminal);

struct HumOptions {
  double tol = 1e-6;         // on ‖ψ(T)‖ / ‖ψ0‖
  int max_iter = 500;
  int stagnation_window = 50;
  std::optional<double> kappa;
};

struct HumReport {
  double defect = 0.0;           // from an independent forward solve
  double uncontrolled = 0.0;     // ‖S(T)ψ0‖ / ‖ψ0‖
  int iterations = 0;
  std::vector<double> history;   // relative defect per iteration, starting at 0
  double sup_abs = 0.0;          // ‖v‖_{L^∞(ω×E)}
  double sup_slice = 0.0;        // ‖v‖_{L^∞(E;L²)}
  double l2_cost = 0.0;          // ‖v‖_{L²(ω×E)}
  std::optional<double> kappa_bound;  // κ ‖ψ0‖ when κ was supplied
  Vector dual_terminal;
};

struct HumResult {
  ControlField control;
  HumReport report;
};

/// HUM null control on ω×E: minimizes ½∫_{ω×E}ϑ² + ⟨ψ0, ϑ(0)⟩ by conjugate
/// residuals on the Gramian, which makes the defect monotone in the
/// iteration count.
HumResult hum_null_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                           const TimeSet& E, const Vector& psi0, const HumOptions& options = {});

/// HUM control on ω×E that drives the terminal state by -target.
/// `reference` normalizes the reported defect.
HumResult hum_cancel(const SetupPtr& setup, const ObservationGeometry& geometry, const TimeSet& E,
                     const Vector& target, double reference, const HumOptions& options = {});

/// Λϑ_T: terminal state produced from zero by the control ϑ|_{ω×E}.
Vector apply_gramian(const ControlField& shape, const Vector& terminal);

struct NormOptimalOptions {
  double tol = 1e-3;                      // on ‖y(T)‖ / ‖y0‖
  /// Radius δ of the terminal target ball as a fraction of ‖S(T)y0‖.
  double radius = 1e-2;
  /// Stationarity test ‖∇J‖ ≤ gradient_tol·δ on the last smoothing stage.
  double gradient_tol = 1e-6;
  std::vector<double> smoothing{1e-2, 1e-4, 1e-6};
  int max_iter = 200;                     // damped Newton steps per smoothing stage
  int max_cg = 200;                       // inner conjugate-gradient steps
  /// Start from -S(T)y0 (false) or a seeded random direction (true).
  bool random_start = false;
  std::uint64_t seed = 0x5eed;
  std::optional<Vector> warm_start;
};

struct NormOptimalResult {
  ControlField control;
  double M_tilde = 0.0;
  double bang_bang_cv = 0.0;
  BangBangStats stats;
  Vector dual_terminal;
  double defect = 0.0;            // ‖y(T)‖ / ‖y0‖ under the recovered control
  double dual_value = 0.0;        // nonsmooth dual functional at the minimizer
  double radius = 0.0;            // δ, absolute
  int iterations = 0;
  std::vector<double> trace;      // smoothed gradient norm / δ per iteration
  std::uint64_t seed = 0;
};

/// Nonsmooth dual ½(Σ_k w_k dt ‖ϑ^k‖_{L²(ω)})² + ⟨y0, ϑ(0)⟩ + δ‖ϑ(T)‖ for
/// the time support of `shape`.
double norm_dual_functional(const ControlField& shape, const Vector& y0, const Vector& terminal,
                            double radius = 0.0);

/// Minimal L^∞(τ,T;L²) control on ω×(τ,T) steering y0 into the ball of
/// radius δ = options.radius·‖S(T)y0‖. The plain null-control dual has no
/// usable minimizer on fine grids (its terminal datum grows without bound
/// in the high modes), so the ball keeps the problem coercive.
NormOptimalResult norm_optimal_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                       double tau, const Vector& y0,
                                       const NormOptimalOptions& options = {});

/// Same on ω×E for an arbitrary time support.
NormOptimalResult norm_optimal_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                       const TimeSet& support, const Vector& y0,
                                       const NormOptimalOptions& options = {});

enum class CorrectionKind { hum, norm_optimal };

struct ImproveOptions {
  double kappa = 1.0;                 // κ used in δ
  double tol = 1e-3;                  // terminal defect requirement
  std::optional<double> bound;        // M̃; defaults to the sup norm of f
  // The L^∞-minimal control keeps ‖v_δ‖ within δκ‖y0‖; the L²-minimal HUM
  // control can overshoot that budget by a few percent.
  CorrectionKind correction = CorrectionKind::norm_optimal;
  HumOptions hum;
  NormOptimalOptions norm;
};

struct ImproveResult {
  double delta = 0.0;
  ControlField improved;
  double bound = 0.0;                 // M̃
  double sup_before = 0.0;
  double sup_after = 0.0;
  double target = 0.0;                // (1 - δ) M̃
  double correction_sup = 0.0;        // ‖v_δ‖_{L^∞(E;L²)}
  double correction_budget = 0.0;     // δ κ ‖y0‖
  bool certificate = false;           // correction within budget
  double defect_before = 0.0;
  double defect_after = 0.0;
};

/// δ = ε / (κ‖y0‖ + ε).
double improvement_delta(double epsilon, double kappa, double y0_norm);

/// f_δ = (1-δ) f + 1_E v_δ where v_δ steers δ·y0 to zero on ω×E.
/// Requires ‖f(t)‖ <= M̃ - ε on every cell meeting E.
ImproveResult improve_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                              const ControlField& f, const TimeSet& E, double epsilon,
                              const Vector& y0, const ImproveOptions& options);

class PreconditionError : public InvalidArgument {
 public:
  PreconditionError(const std::string& what, int slice) : InvalidArgument(what), slice_(slice) {}
  int slice() const noexcept { return slice_; }

 private:
  int slice_;
};

struct TimeOptimalOptions {
  double M = 1.0;
  double tol = 0.0;                   // 0 selects T / nt
  NormOptimalOptions inner;
};

struct BisectionStep {
  double tau = 0.0;
  bool feasible = false;
  double cost = 0.0;                  // N(τ)
};

struct TimeOptimalResult {
  double tau_star = 0.0;
  NormOptimalResult control;          // g* at τ*
  std::vector<BisectionStep> history;
  double cost_at_zero = 0.0;          // N(0)
  double bang_bang_cv = 0.0;
  int iterations = 0;
};

TimeOptimalResult time_optimal_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                       const Vector& y0, const TimeOptimalOptions& options);

class EmptyAdmissibleSet : public NumericalError {
 public:
  EmptyAdmissibleSet(const std::string& what, double cost) : NumericalError(what), cost_(cost) {}
  double cost_at_zero() const noexcept { return cost_; }

 private:
  double cost_;
};

}  // namespace parobs
