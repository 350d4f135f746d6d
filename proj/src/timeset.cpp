#include "parobs/timeset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "parobs/random.hpp"

namespace parobs {

TimeSet::TimeSet(double horizon) : horizon_(horizon) {
  require(horizon > 0.0, "time set horizon must be positive");
}

TimeSet::TimeSet(double horizon, std::vector<Interval> sorted_disjoint)
    : horizon_(horizon), intervals_(std::move(sorted_disjoint)) {}

NormalizeResult TimeSet::normalize(std::vector<Interval> raw, double horizon) {
  require(horizon > 0.0, "time set horizon must be positive");
  NormalizeResult result;
  std::vector<Interval> kept;
  kept.reserve(raw.size());
  for (Interval iv : raw) {
    iv.lo = std::max(iv.lo, 0.0);
    iv.hi = std::min(iv.hi, horizon);
    if (!(iv.lo < iv.hi)) {
      ++result.dropped;
      continue;
    }
    kept.push_back(iv);
  }
  std::sort(kept.begin(), kept.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> merged;
  merged.reserve(kept.size());
  for (const Interval& iv : kept) {
    if (!merged.empty() && iv.lo <= merged.back().hi) {
      merged.back().hi = std::max(merged.back().hi, iv.hi);
    } else {
      merged.push_back(iv);
    }
  }
  result.set = TimeSet(horizon, std::move(merged));
  return result;
}

TimeSet TimeSet::window(double horizon, double lo, double hi) {
  return normalize({{lo, hi}}, horizon).set;
}

double measure(const TimeSet& set) {
  double total = 0.0;
  for (const Interval& iv : set.intervals()) total += iv.length();
  return total;
}

double measure_in(const TimeSet& set, Interval window) {
  const auto& ivs = set.intervals();
  auto it = std::lower_bound(ivs.begin(), ivs.end(), window.lo,
                             [](const Interval& iv, double t) { return iv.hi <= t; });
  double total = 0.0;
  for (; it != ivs.end() && it->lo < window.hi; ++it) {
    const double lo = std::max(it->lo, window.lo);
    const double hi = std::min(it->hi, window.hi);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

TimeSet intersect(const TimeSet& set, Interval window) {
  std::vector<Interval> out;
  for (const Interval& iv : set.intervals()) {
    const double lo = std::max(iv.lo, window.lo);
    const double hi = std::min(iv.hi, window.hi);
    if (hi > lo) out.push_back({lo, hi});
  }
  return TimeSet::normalize(std::move(out), set.horizon()).set;
}

TimeSet complement(const TimeSet& set) {
  std::vector<Interval> out;
  double cursor = 0.0;
  for (const Interval& iv : set.intervals()) {
    if (iv.lo > cursor) out.push_back({cursor, iv.lo});
    cursor = iv.hi;
  }
  if (cursor < set.horizon()) out.push_back({cursor, set.horizon()});
  return TimeSet::normalize(std::move(out), set.horizon()).set;
}

TimeSet fat_cantor(double horizon, int depth) {
  require(horizon > 0.0, "fat_cantor: horizon must be positive");
  require(depth >= 1, "fat_cantor: depth must be at least 1");
  const double removal = horizon * std::pow(4.0, -depth);
  if (removal <= 1e-12 * horizon) {
    throw NumericalError("fat_cantor: depth " + std::to_string(depth) +
                         " removes gaps below the floating resolution of the horizon");
  }
  std::vector<Interval> pieces{{0.0, horizon}};
  double width = horizon / 4.0;
  for (int k = 1; k <= depth; ++k, width /= 4.0) {
    std::vector<Interval> next;
    next.reserve(pieces.size() * 2);
    for (const Interval& iv : pieces) {
      const double mid = 0.5 * (iv.lo + iv.hi);
      next.push_back({iv.lo, mid - 0.5 * width});
      next.push_back({mid + 0.5 * width, iv.hi});
    }
    pieces = std::move(next);
  }
  return TimeSet::normalize(std::move(pieces), horizon).set;
}

TimeSet shrink(const TimeSet& set, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, "shrink: fraction must lie in (0, 1]");
  std::vector<Interval> out;
  out.reserve(set.size());
  for (const Interval& iv : set.intervals())
    out.push_back({iv.lo, iv.lo + fraction * iv.length()});
  return TimeSet::normalize(std::move(out), set.horizon()).set;
}

double density_ratio(const TimeSet& set, double point, double radius) {
  require(radius > 0.0, "density_ratio: radius must be positive");
  return measure_in(set, {point - radius, point + radius}) / (2.0 * radius);
}

double pick_density_point(const TimeSet& set) {
  if (set.empty() || measure(set) <= 0.0)
    throw InvalidArgument("pick_density_point: set has measure zero");
  double widest = 0.0;
  for (const Interval& iv : set.intervals()) widest = std::max(widest, iv.length());
  // Equal-width pieces of generated sets differ in the last bits.
  const double tie = widest - 1e-12 * set.horizon();
  for (const Interval& iv : set.intervals())
    if (iv.length() >= tie) return 0.5 * (iv.lo + iv.hi);
  return 0.5 * (set.intervals().front().lo + set.intervals().front().hi);
}

std::vector<double> sample_density_points(const TimeSet& set, std::size_t count,
                                          std::uint64_t seed) {
  const double total = measure(set);
  if (total <= 0.0) throw InvalidArgument("sample_density_points: set has measure zero");
  Rng rng(seed);
  std::vector<double> points;
  points.reserve(count);
  while (points.size() < count) {
    double offset = rng.uniform() * total;
    for (const Interval& iv : set.intervals()) {
      if (offset < iv.length()) {
        const double t = iv.lo + offset;
        if (t > iv.lo && t < iv.hi) points.push_back(t);
        break;
      }
      offset -= iv.length();
    }
  }
  return points;
}

Vector cell_fractions(const TimeSet& set, int steps) {
  require(steps >= 1, "cell_fractions: steps must be positive");
  const double horizon = set.horizon();
  const double dt = horizon / steps;
  Vector fractions = Vector::Zero(steps + 1);
  auto node = [&](int k) { return horizon * static_cast<double>(k) / steps; };
  for (const Interval& iv : set.intervals()) {
    int k = std::max(1, static_cast<int>(std::floor(iv.lo / dt)));
    while (k > 1 && node(k - 1) > iv.lo) --k;
    for (; k <= steps && node(k - 1) < iv.hi; ++k) {
      const double lo = std::max(iv.lo, node(k - 1));
      const double hi = std::min(iv.hi, node(k));
      if (hi > lo) fractions(k) += (hi - lo) / dt;
    }
  }
  for (int k = 1; k <= steps; ++k) fractions(k) = std::min(fractions(k), 1.0);
  return fractions;
}

namespace {

struct Candidate {
  std::vector<double> points, gaps, mass;
  std::vector<bool> verified;
  double worst_ratio = std::numeric_limits<double>::infinity();
  int worst_gap = 0;
  bool ok = true;
};

Candidate evaluate(const TimeSet& set, double base, double first, double ratio, int count) {
  Candidate c;
  c.points.resize(count);
  for (int m = 0; m < count; ++m)
    c.points[m] = base + std::pow(ratio, -static_cast<double>(m)) * (first - base);
  for (int m = 0; m + 1 < count; ++m) {
    const double gap = c.points[m] - c.points[m + 1];
    const double mass = measure_in(set, {c.points[m + 1], c.points[m]});
    const bool ok = gap <= 3.0 * mass;
    c.gaps.push_back(gap);
    c.mass.push_back(mass);
    c.verified.push_back(ok);
    const double r = gap > 0.0 ? 3.0 * mass / gap : 0.0;
    if (r < c.worst_ratio) {
      c.worst_ratio = r;
      c.worst_gap = m + 1;
    }
    c.ok = c.ok && ok;
  }
  return c;
}

// Largest radius theta = horizon·2^{-j} such that the density bound
// |E^c ∩ W| < eps/(1-eps) |E ∩ W| holds on W = (l-θ', l+θ') for every
// sampled θ' <= θ.
double estimate_theta_o(const TimeSet& set, double base, double eps) {
  const double factor = eps / (1.0 - eps);
  double theta_o = 0.0;
  for (int j = 60; j >= 0; --j) {
    const double theta = set.horizon() * std::ldexp(1.0, -j);
    const double inside = measure_in(set, {base - theta, base + theta});
    const double outside = 2.0 * theta - inside;
    if (outside < factor * inside)
      theta_o = theta;
    else
      break;
  }
  return theta_o;
}

}  // namespace

DensitySequence density_sequence(const TimeSet& set, double base, double ratio, int count) {
  require(measure(set) > 0.0, "density_sequence: set has measure zero");
  require(base >= 0.0 && base < set.horizon(), "density_sequence: base point outside [0, T)");
  require(ratio > 1.0, "density_sequence: ratio must exceed 1");
  require(count >= 2, "density_sequence: need at least two points");

  const double horizon = set.horizon();
  const double start_gap = (horizon - (horizon - base) / 10.0) - base;
  Candidate best;
  best.worst_ratio = -1.0;
  for (int j = 0; j <= 60; ++j) {
    const double first = base + std::ldexp(start_gap, -j);
    if (!(first > base && first < horizon)) continue;
    Candidate c = evaluate(set, base, first, ratio, count);
    if (c.ok) {
      DensitySequence seq;
      seq.base = base;
      seq.first = first;
      seq.ratio = ratio;
      seq.points = std::move(c.points);
      seq.gaps = std::move(c.gaps);
      seq.gap_mass = std::move(c.mass);
      seq.verified = std::move(c.verified);
      seq.epsilon = std::min((ratio - 1.0) / (1.0 + 3.0 * ratio), 1.0 / 3.0);
      seq.theta_o = estimate_theta_o(set, base, seq.epsilon);
      seq.first_within_theta_o = first - base < seq.theta_o;
      seq.scan_steps = j + 1;
      return seq;
    }
    if (c.worst_ratio > best.worst_ratio) best = std::move(c);
  }
  throw DensitySearchError("density_sequence: no admissible first point within 60 halvings "
                           "(worst gap m = " + std::to_string(best.worst_gap) + ")",
                           best.worst_gap);
}

}  // namespace parobs
