#include "parobs/control_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace parobs {

Vector ControlField::slice_norms() const {
  Vector out(values.cols());
  for (Eigen::Index k = 0; k < values.cols(); ++k) out(k) = setup->norm(values.col(k));
  return out;
}

double ControlField::sup_norm() const {
  const Vector norms = slice_norms();
  double sup = 0.0;
  for (Eigen::Index k = 1; k < norms.size(); ++k)
    if (weights(k) > 0.0) sup = std::max(sup, norms(k));
  return sup;
}

Matrix ControlField::source() const { return values * weights.asDiagonal(); }

void ControlField::restrict_to_support() {
  values.col(0).setZero();
  for (Eigen::Index k = 1; k < values.cols(); ++k) {
    if (weights(k) <= 0.0) {
      values.col(k).setZero();
      continue;
    }
    values.col(k).head(omega.begin).setZero();
    values.col(k).tail(values.rows() - omega.end).setZero();
  }
}

bool ControlField::support_contained() const {
  if (!values.col(0).isZero(0.0)) return false;
  for (Eigen::Index k = 1; k < values.cols(); ++k) {
    if (weights(k) <= 0.0 && !values.col(k).isZero(0.0)) return false;
    if (!values.col(k).head(omega.begin).isZero(0.0)) return false;
    if (!values.col(k).tail(values.rows() - omega.end).isZero(0.0)) return false;
  }
  return true;
}

ControlField make_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                          const TimeSet& support, double tau) {
  require(support.horizon() == setup->horizon(), "control support horizon must match the setup");
  ControlField f;
  f.setup = setup;
  f.geometry = geometry;
  f.omega = node_range(*setup, geometry.omega_lo, geometry.omega_hi);
  require(!f.omega.empty(), "omega contains no grid nodes");
  f.support = support;
  f.tau = tau;
  f.weights = cell_fractions(support, setup->nt());
  f.values = Matrix::Zero(setup->nx(), setup->nt() + 1);
  return f;
}

ControlField make_window_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                 double tau) {
  require(tau >= 0.0 && tau < setup->horizon(), "activation time must lie in [0, T)");
  return make_control(setup, geometry, TimeSet::window(setup->horizon(), tau, setup->horizon()), tau);
}

BangBangStats bang_bang_diagnostic(const ControlField& f) {
  const Vector norms = f.slice_norms();
  const double dt = f.setup->dt();
  BangBangStats stats;
  double mass = 0.0, sum = 0.0, sum_sq = 0.0;
  stats.min = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 1; k < norms.size(); ++k) {
    const double w = f.weights(k);
    if (w <= 0.0) continue;
    ++stats.slices;
    mass += w;
    sum += w * norms(k);
    stats.min = std::min(stats.min, norms(k));
    stats.max = std::max(stats.max, norms(k));
  }
  if (stats.slices == 0) {
    stats.min = 0.0;
    return stats;
  }
  stats.mean = sum / mass;
  for (Eigen::Index k = 1; k < norms.size(); ++k) {
    const double w = f.weights(k);
    if (w <= 0.0) continue;
    sum_sq += w * (norms(k) - stats.mean) * (norms(k) - stats.mean);
    if (std::abs(norms(k) - stats.max) > 0.05 * stats.max) stats.deviation_measure += w * dt;
  }
  stats.cv = stats.mean > 0.0 ? std::sqrt(sum_sq / mass) / stats.mean : 0.0;
  return stats;
}

DualityReport check_duality(const SetupPtr& setup, const Vector& psi0, const ControlField& v,
                            const Vector& terminal) {
  return check_duality(setup, psi0, v.source(), terminal);
}

}  // namespace parobs
