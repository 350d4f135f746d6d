#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "parobs/common.hpp"
#include "parobs/tridiagonal.hpp"

namespace parobs {

struct Domain {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

/// Coefficient sampler f(x, t).
using FieldSampler = std::function<double(double, double)>;

/// User-facing description of the equation
///   u_t - u_xx + a u + b u_x = s   on domain × (0, horizon)
/// with homogeneous Dirichlet data. Empty samplers mean zero coefficients.
struct ProblemSpec {
  Domain domain;
  double horizon = 1.0;
  int nx = 128;
  int nt = 512;
  int q = 2;
  double theta = 0.5;
  FieldSampler potential;
  FieldSampler drift;
  /// Defaults to a centered difference of the drift sampler.
  FieldSampler drift_divergence;
};

/// Sampled, immutable problem on the uniform grid x_i = lo + (i+1)dx,
/// i = 0..nx-1, dx = (hi-lo)/(nx+1), and t_k = k·horizon/nt.
///
/// Coefficient fields are stored as nx × (nt+1) matrices, one column per
/// time level. When every column agrees the step operators are factored once.
class ProblemSetup {
 public:
  explicit ProblemSetup(const ProblemSpec& spec);

  const Domain& domain() const { return domain_; }
  double horizon() const { return horizon_; }
  int nx() const { return nx_; }
  int nt() const { return nt_; }
  int q() const { return q_; }
  double theta() const { return theta_; }
  double dx() const { return dx_; }
  double dt() const { return horizon_ / nt_; }
  double node(Eigen::Index i) const { return nodes_(i); }
  const Vector& nodes() const { return nodes_; }
  double time(int k) const { return horizon_ * static_cast<double>(k) / nt_; }

  const Matrix& potential() const { return potential_; }
  const Matrix& drift() const { return drift_; }
  const Matrix& drift_divergence() const { return drift_divergence_; }
  bool time_independent() const { return time_independent_; }

  /// max_k ‖a(·,t_k)‖_{L^q}.
  double potential_norm() const { return potential_norm_; }
  double drift_norm() const { return drift_norm_; }

  double inner(const Vector& u, const Vector& v) const { return dx_ * u.dot(v); }
  double norm(const Vector& u) const { return std::sqrt(dx_) * u.norm(); }

  /// L_k u = u_xx - a_k u - b_k u_x with centered differences.
  Tridiagonal<double> spatial_operator(int k) const;
  /// Conservative form v_xx - a_k v + (b_k v)_x; the exact transpose of L_k.
  Tridiagonal<double> adjoint_spatial_operator(int k) const;

  /// u^{k+1} = (I - θ dt L_{k+1})^{-1} (I + (1-θ) dt L_k) u^k.
  Vector forward_step(int k, const Vector& u) const;
  /// ϑ^k = (I + (1-θ) dt L*_k)(I - θ dt L*_{k+1})^{-1} ϑ^{k+1}.
  Vector adjoint_step(int k, const Vector& v) const;

  /// Copy of this setup with a different scheme weight.
  std::shared_ptr<const ProblemSetup> with_theta(double theta) const;

 private:
  struct StepPair {
    ThomasSolver<double> implicit_solver;
    Tridiagonal<double> explicit_part;
  };
  StepPair forward_pair(int k) const;
  StepPair adjoint_pair(int k) const;
  void build_cache();

  Domain domain_;
  double horizon_ = 1.0;
  int nx_ = 0, nt_ = 0, q_ = 2;
  double theta_ = 0.5;
  double dx_ = 0.0;
  Vector nodes_;
  Matrix potential_, drift_, drift_divergence_;
  bool time_independent_ = false;
  double potential_norm_ = 0.0, drift_norm_ = 0.0;
  std::optional<StepPair> forward_cache_, adjoint_cache_;
};

using SetupPtr = std::shared_ptr<const ProblemSetup>;

SetupPtr make_setup(const ProblemSpec& spec);

/// Snapshots at every time level, one column per t_k. Dirichlet boundary
/// values are implicit.
struct Trajectory {
  SetupPtr setup;
  Matrix states;

  int steps() const { return static_cast<int>(states.cols()) - 1; }
  auto at(int k) const { return states.col(k); }
  Vector norms() const;
};

/// ω, a ball B_r = (x0 - r, x0 + r) inside it, and m0 = sup |x - x0|².
struct ObservationGeometry {
  double omega_lo = 0.0, omega_hi = 0.0;
  double x0 = 0.0, r = 0.0;
  double m0 = 0.0;
};

ObservationGeometry make_geometry(const Domain& domain, double omega_lo, double omega_hi,
                                  double x0, double r);

/// Half-open node index range [begin, end).
struct NodeRange {
  Eigen::Index begin = 0, end = 0;
  Eigen::Index size() const { return end - begin; }
  bool empty() const { return end <= begin; }
};

/// Nodes strictly inside (lo, hi).
NodeRange node_range(const ProblemSetup& setup, double lo, double hi);

/// Column k of source is added as dt·source.col(k) after step k-1 → k;
/// column 0 is ignored.
Trajectory solve_forward(const SetupPtr& setup, const Vector& u0);
Trajectory solve_forward(const SetupPtr& setup, const Vector& u0, const Matrix& source);
/// Terminal state only, without storing the trajectory.
Vector propagate_forward(const SetupPtr& setup, const Vector& u0, const Matrix* source = nullptr);

Trajectory solve_adjoint(const SetupPtr& setup, const Vector& terminal);

struct EnergyReport {
  double fitted_C0 = 0.0;       // minimal C0 over the sampled times
  bool vacuous = false;         // the norm never grows, any C0 >= 0 works
  bool unbounded = false;       // growth with a = b = 0, no C0 exists
  bool nonincreasing = false;   // per step, with 1e-12 relative slack
  double max_growth = 0.0;      // max_k ‖u_k‖² / ‖u_0‖²
  bool trivial = false;         // zero initial state
};

EnergyReport check_energy_estimate(const Trajectory& traj);

struct EigenPairs {
  Vector values;    // ascending
  Matrix vectors;   // columns, orthonormal under dx·(·,·)
};

/// Discrete Dirichlet eigenpairs of -d²/dx² on the setup grid.
EigenPairs dirichlet_eigs(const ProblemSetup& setup, int count);

struct DualityReport {
  double terminal_pairing = 0.0;
  double initial_pairing = 0.0;
  double source_pairing = 0.0;
  double defect = 0.0;
  double scale = 0.0;
  double relative() const { return scale > 0.0 ? defect / scale : defect; }
};

/// ⟨ψ(T), ϑ_T⟩ - ⟨ψ0, ϑ(0)⟩ - Σ_k dt ⟨s^k, ϑ^k⟩ for a forward solve with
/// source s and the adjoint solve from ϑ_T.
DualityReport check_duality(const SetupPtr& setup, const Vector& psi0, const Matrix& source,
                            const Vector& terminal);

/// Largest entry difference between the transposed forward operators and the
/// independently assembled adjoint operators over all time levels.
double check_step_transpose(const ProblemSetup& setup);

struct FeasibilityReport {
  double lambda1 = 0.0;
  double min_shifted = 0.0;     // min (a - div b / 2) + λ1
  double sup_reduced = 0.0;     // ‖a - div b / 2‖_∞
  bool nonnegative_holds = false;
  bool bounded_holds = false;
};

FeasibilityReport check_feasibility_conditions(const ProblemSetup& setup);

}  // namespace parobs
