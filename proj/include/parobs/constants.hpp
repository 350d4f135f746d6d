#pragma once

#include <optional>

#include "parobs/common.hpp"

namespace parobs {

/// Existence-only constants of the observability estimate. C stands in for
/// C_(Ω,n,q); c appears in the ε-interpolation estimate.
struct StructuralConstants {
  double C = 1.0;
  double d = 1.0;
  double C0 = 1.0;
  double c = 1.0;
};

struct ChainInputs {
  double horizon = 1.0;
  double a_norm = 0.0;   // ‖a‖_{L^∞(0,T;L^q)}
  double b_norm = 0.0;   // ‖b‖_{L^∞}
  double r = 1.0;
  int n = 1;
  int q = 2;
  double m0 = 0.0;
  StructuralConstants structural;
};

struct ConstantChain {
  ChainInputs inputs;
  double p = 1.0;
  double A = 0.0;
  double K = 1.0;
  double beta = 0.0;        // β(r, T, ‖b‖)
  double beta_half = 0.0;   // β(r/2, T, ‖b‖), used in γ
  double log_beta = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double z = 1.0;
  double z_minus_one = 0.0; // evaluated without cancellation
  double m0 = 0.0;
  double C = 1.0, d = 1.0, C0 = 1.0, c = 1.0;

  /// Set once a density interval (ℓ, ℓ₁) is bound.
  std::optional<double> ell, ell1, eta;
};

/// p = 2n/q for n < q <= 2n, 1 for q >= 2n. One dimension requires q >= 2.
double compute_p(int n, int q);

/// Throws OverflowError when β or A leaves double range.
ConstantChain compute_chain(const ChainInputs& inputs);

/// β(r, T, ‖b‖) = r^{-2} e^{2T(1 + ‖b‖²)}.
double compute_beta(double r, double horizon, double b_norm);

double compute_eta(const ConstantChain& chain, double ell, double ell1);

/// Copy of the chain with (ℓ, ℓ₁) and η filled in.
ConstantChain bind_interval(ConstantChain chain, double ell, double ell1);

/// Exponent E of the end-to-end constant e^{(C0 + dβ)K} e^{C β³ / (ℓ₁ - ℓ)}.
double kappa_shape_exponent(const ConstantChain& chain, double ell, double ell1);

/// e^E; OverflowError carrying E when it exceeds double range.
double theoretical_kappa_shape(const ConstantChain& chain, double ell, double ell1);

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double relative = 0.0;
  bool holds = false;
};

/// (γ+1) z² against γ+2.
IdentityCheck check_z_identity(const ConstantChain& chain, double tolerance = 1e-14);

/// η(γ+2)z² against (1+dβ)(ℓ₁-ℓ)^{-1}(γ+2)√(γ+2)(√(γ+2)+√(γ+1)); needs a
/// bound interval.
IdentityCheck compute_eta_gamma_identity_check(const ConstantChain& chain,
                                               double tolerance = 1e-12);

}  // namespace parobs
