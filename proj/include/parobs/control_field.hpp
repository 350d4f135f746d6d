#pragma once

#include "parobs/pde.hpp"
#include "parobs/timeset.hpp"

namespace parobs {

/// Space-time control supported on ω × support.
///
/// values.col(k) is the control on the cell (t_{k-1}, t_k); weights(k) is the
/// fraction of that cell covered by the time support. The source seen by the
/// solver is weights(k)·values.col(k). Column 0 is always zero.
struct ControlField {
  SetupPtr setup;
  ObservationGeometry geometry;
  NodeRange omega;
  TimeSet support;
  double tau = 0.0;
  Vector weights;
  Matrix values;

  /// ‖f(·, t_k)‖_{L²(Ω)} for k = 0..nt.
  Vector slice_norms() const;
  /// Max slice norm over cells that meet the support.
  double sup_norm() const;
  Matrix source() const;
  /// Zero every entry outside ω × support.
  void restrict_to_support();
  bool support_contained() const;
};

/// Zero control on ω × support.
ControlField make_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                          const TimeSet& support, double tau = 0.0);

/// Zero control on ω × (tau, T).
ControlField make_window_control(const SetupPtr& setup, const ObservationGeometry& geometry,
                                 double tau);

struct BangBangStats {
  double mean = 0.0, min = 0.0, max = 0.0;
  double cv = 0.0;                  // time-measure weighted
  double deviation_measure = 0.0;   // |{t : |‖f(t)‖ - max| > 5% max}|
  int slices = 0;
};

BangBangStats bang_bang_diagnostic(const ControlField& f);

DualityReport check_duality(const SetupPtr& setup, const Vector& psi0, const ControlField& v,
                            const Vector& terminal);

}  // namespace parobs
