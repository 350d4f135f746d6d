#include "parobs/constants.hpp"

#include <cmath>
#include <limits>

namespace parobs {

namespace {

// log(DBL_MAX), rounded down.
constexpr double kMaxExponent = 709.78;

IdentityCheck compare(double lhs, double rhs, double tolerance) {
  IdentityCheck check{lhs, rhs, 0.0, false};
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  check.relative = scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
  check.holds = check.relative <= tolerance;
  return check;
}

}  // namespace

double compute_p(int n, int q) {
  require(n >= 1, "compute_p: dimension must be positive");
  const bool admissible = n == 1 ? q >= 2 : q > n;
  if (!admissible)
    throw InvalidArgument("compute_p: exponent q = " + std::to_string(q) +
                          " is not admissible in dimension " + std::to_string(n));
  if (q >= 2 * n) return 1.0;
  return 2.0 * n / q;
}

double compute_beta(double r, double horizon, double b_norm) {
  require(r > 0.0, "beta: radius must be positive");
  const double exponent = 2.0 * horizon * (1.0 + b_norm * b_norm) - 2.0 * std::log(r);
  if (!(exponent < kMaxExponent)) throw OverflowError("beta overflows", exponent);
  return std::exp(exponent);
}

ConstantChain compute_chain(const ChainInputs& in) {
  require(in.horizon > 0.0, "chain: horizon must be positive");
  require(in.r > 0.0, "chain: radius must be positive");
  require(in.a_norm >= 0.0 && in.b_norm >= 0.0, "chain: norms must be nonnegative");
  require(in.structural.C > 0.0 && in.structural.d >= 0.0 && in.structural.C0 >= 0.0 &&
              in.structural.c > 0.0,
          "chain: structural constants must be positive");

  ConstantChain chain;
  chain.inputs = in;
  chain.C = in.structural.C;
  chain.d = in.structural.d;
  chain.C0 = in.structural.C0;
  chain.c = in.structural.c;
  chain.m0 = in.m0;
  chain.p = compute_p(in.n, in.q);

  const double T = in.horizon;
  const double a = in.a_norm;
  chain.A = a + (T + std::pow(T, 2.0 - chain.p)) * a * a + T * T * std::pow(a, 4.0 / (2.0 - chain.p));
  if (!std::isfinite(chain.A))
    throw OverflowError("A overflows", 4.0 / (2.0 - chain.p) * std::log(std::max(a, 1.0)));
  chain.K = 1.0 + chain.A + T * in.b_norm * in.b_norm;
  if (!std::isfinite(chain.K)) throw OverflowError("K overflows", std::log(chain.K));

  chain.log_beta = 2.0 * T * (1.0 + in.b_norm * in.b_norm) - 2.0 * std::log(in.r);
  chain.beta = compute_beta(in.r, T, in.b_norm);
  chain.beta_half = compute_beta(0.5 * in.r, T, in.b_norm);

  const double cb = chain.C * chain.beta;
  chain.alpha = cb / (1.0 + cb);
  chain.gamma = chain.C * chain.beta_half * (1.0 + 0.5 * in.n) + 0.5 * in.n;
  if (!std::isfinite(chain.gamma)) throw OverflowError("gamma overflows", chain.log_beta);
  chain.z = std::sqrt((chain.gamma + 2.0) / (chain.gamma + 1.0));
  chain.z_minus_one = (1.0 / (chain.gamma + 1.0)) / (chain.z + 1.0);
  return chain;
}

double compute_eta(const ConstantChain& chain, double ell, double ell1) {
  if (!(ell1 > ell)) throw InvalidArgument("eta: need l1 > l");
  return (1.0 + chain.d * chain.beta) / ((ell1 - ell) * chain.z * chain.z_minus_one);
}

ConstantChain bind_interval(ConstantChain chain, double ell, double ell1) {
  chain.eta = compute_eta(chain, ell, ell1);
  chain.ell = ell;
  chain.ell1 = ell1;
  return chain;
}

double kappa_shape_exponent(const ConstantChain& chain, double ell, double ell1) {
  if (!(ell1 > ell)) throw InvalidArgument("kappa shape: need l1 > l");
  const double cubic_log = std::log(chain.C) + 3.0 * chain.log_beta - std::log(ell1 - ell);
  if (!(cubic_log < kMaxExponent))
    throw OverflowError("kappa shape exponent overflows", cubic_log);
  return (chain.C0 + chain.d * chain.beta) * chain.K + std::exp(cubic_log);
}

double theoretical_kappa_shape(const ConstantChain& chain, double ell, double ell1) {
  const double exponent = kappa_shape_exponent(chain, ell, ell1);
  if (!(exponent < kMaxExponent)) throw OverflowError("kappa shape overflows", exponent);
  return std::exp(exponent);
}

IdentityCheck check_z_identity(const ConstantChain& chain, double tolerance) {
  return compare((chain.gamma + 1.0) * chain.z * chain.z, chain.gamma + 2.0, tolerance);
}

IdentityCheck compute_eta_gamma_identity_check(const ConstantChain& chain, double tolerance) {
  require(chain.eta && chain.ell && chain.ell1, "identity check needs a bound (l, l1) interval");
  const double g = chain.gamma;
  const double lhs = *chain.eta * (g + 2.0) * chain.z * chain.z;
  const double rhs = (1.0 + chain.d * chain.beta) / (*chain.ell1 - *chain.ell) * (g + 2.0) *
                     std::sqrt(g + 2.0) * (std::sqrt(g + 2.0) + std::sqrt(g + 1.0));
  return compare(lhs, rhs, tolerance);
}

}  // namespace parobs
