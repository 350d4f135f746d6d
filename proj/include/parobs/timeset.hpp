#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "parobs/common.hpp"

namespace parobs {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct NormalizeResult;

/// Finite union of disjoint open intervals inside (0, horizon).
///
/// Intervals are kept sorted and pairwise disjoint; touching intervals are
/// merged, so hi_i < lo_{i+1} always holds.
class TimeSet {
 public:
  TimeSet() = default;
  explicit TimeSet(double horizon);

  /// Clip, sort and merge raw pairs. Pairs that end up empty are dropped and
  /// counted.
  static NormalizeResult normalize(std::vector<Interval> raw, double horizon);

  /// The single window (lo, hi) clipped to (0, horizon).
  static TimeSet window(double horizon, double lo, double hi);

  double horizon() const { return horizon_; }
  const std::vector<Interval>& intervals() const { return intervals_; }
  bool empty() const { return intervals_.empty(); }
  std::size_t size() const { return intervals_.size(); }

  friend bool operator==(const TimeSet&, const TimeSet&) = default;

 private:
  TimeSet(double horizon, std::vector<Interval> sorted_disjoint);

  double horizon_ = 0.0;
  std::vector<Interval> intervals_;
};

struct NormalizeResult {
  TimeSet set;
  std::size_t dropped = 0;
};

double measure(const TimeSet& set);

/// Measure of set ∩ (window.lo, window.hi) without materializing the result.
double measure_in(const TimeSet& set, Interval window);

TimeSet intersect(const TimeSet& set, Interval window);

/// (0, horizon) minus the closure of the set.
TimeSet complement(const TimeSet& set);

/// Smith–Volterra–Cantor construction: step k removes a centered open
/// interval of length horizon·4^{-k} from each of the 2^{k-1} kept pieces.
TimeSet fat_cantor(double horizon, int depth);

/// Shrinks every constituent (lo, hi) to (lo, lo + fraction·(hi - lo)).
/// Results for decreasing fractions are nested.
TimeSet shrink(const TimeSet& set, double fraction);

/// |set ∩ (point - radius, point + radius)| / (2 radius).
double density_ratio(const TimeSet& set, double point, double radius);

/// Midpoint of the widest constituent interval (earliest on ties).
double pick_density_point(const TimeSet& set);

/// Deterministic interior points of the set, drawn length-weighted.
std::vector<double> sample_density_points(const TimeSet& set, std::size_t count,
                                          std::uint64_t seed);

/// Fraction of each time cell (t_{k-1}, t_k), k = 1..steps, covered by the
/// set. Entry 0 is always zero.
Vector cell_fractions(const TimeSet& set, int steps);

/// Geometric sequence l_{m+1} = l + ratio^{-m} (l_1 - l) with the gap
/// certificate l_m - l_{m+1} <= 3 |E ∩ (l_{m+1}, l_m)| for m < count.
struct DensitySequence {
  double base = 0.0;
  double first = 0.0;
  double ratio = 0.0;
  std::vector<double> points;      // l_1 > l_2 > ... > l_count
  std::vector<double> gaps;        // l_m - l_{m+1}
  std::vector<double> gap_mass;    // |E ∩ (l_{m+1}, l_m)|
  std::vector<bool> verified;
  double epsilon = 0.0;            // min((z-1)/(1+3z), 1/3)
  double theta_o = 0.0;            // largest sampled radius where the density bound holds
  bool first_within_theta_o = false;
  int scan_steps = 0;

  std::size_t count() const { return points.size(); }
};

class DensitySearchError : public NumericalError {
 public:
  DensitySearchError(const std::string& what, int worst_gap)
      : NumericalError(what), worst_gap_(worst_gap) {}
  /// 1-based index m of the worst violated gap at the best candidate.
  int worst_gap() const noexcept { return worst_gap_; }

 private:
  int worst_gap_;
};

DensitySequence density_sequence(const TimeSet& set, double base, double ratio, int count);

}  // namespace parobs
