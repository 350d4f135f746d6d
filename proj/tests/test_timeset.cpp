#include <doctest.h>

#include <cmath>

#include "parobs/random.hpp"
#include "parobs/timeset.hpp"

using namespace parobs;

namespace {

// Independent oracle: removed mass of the first `depth` steps.
double removed_mass(int depth) {
  double removed = 0.0;
  for (int k = 1; k <= depth; ++k) removed += std::ldexp(1.0, k - 1) * std::pow(4.0, -k);
  return removed;
}

}  // namespace

TEST_CASE("normalize merges, sorts and drops") {
  auto r = TimeSet::normalize({{0.2, 0.5}, {0.4, 0.7}}, 1.0);
  REQUIRE(r.set.size() == 1);
  CHECK(r.set.intervals()[0] == Interval{0.2, 0.7});
  CHECK(r.dropped == 0);

  CHECK(TimeSet::normalize({}, 1.0).set.empty());

  auto same = TimeSet::normalize({{0.1, 0.2}, {0.3, 0.4}}, 1.0).set;
  CHECK(same.intervals() == std::vector<Interval>{{0.1, 0.2}, {0.3, 0.4}});

  auto touching = TimeSet::normalize({{0.3, 0.5}, {0.1, 0.3}}, 1.0).set;
  CHECK(touching.intervals() == std::vector<Interval>{{0.1, 0.5}});

  auto clipped = TimeSet::normalize({{-1.0, -0.5}, {0.9, 1.5}, {2.0, 3.0}}, 1.0);
  CHECK(clipped.dropped == 2);
  CHECK(clipped.set.intervals() == std::vector<Interval>{{0.9, 1.0}});
}

TEST_CASE("normalize is idempotent and measure preserving on disjoint input") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Interval> raw;
    double cursor = 0.0, total = 0.0;
    for (int i = 0; i < 6; ++i) {
      const double lo = cursor + rng.uniform(0.01, 0.05);
      const double hi = lo + rng.uniform(0.01, 0.1);
      raw.push_back({lo, hi});
      total += hi - lo;
      cursor = hi;
    }
    std::reverse(raw.begin(), raw.end());
    const TimeSet once = TimeSet::normalize(raw, 1.0).set;
    const TimeSet twice = TimeSet::normalize(once.intervals(), 1.0).set;
    CHECK(once == twice);
    CHECK(measure(once) == doctest::Approx(total).epsilon(1e-14));
  }
}

TEST_CASE("measure and intersect") {
  CHECK(measure(TimeSet::normalize({{0, 1}, {2, 3}}, 3.0).set) == 2.0);
  CHECK(measure(TimeSet(1.0)) == 0.0);

  const TimeSet unit = TimeSet::window(1.0, 0.0, 1.0);
  CHECK(intersect(unit, {0.25, 0.75}).intervals() == std::vector<Interval>{{0.25, 0.75}});
  CHECK(intersect(TimeSet::window(1.0, 0.0, 0.5), {0.6, 0.9}).empty());

  const TimeSet svc = fat_cantor(1.0, 7);
  CHECK(measure(intersect(svc, {0.0, 0.5})) == doctest::Approx(0.5 * measure(svc)).epsilon(1e-13));
}

TEST_CASE("set and complement split every window") {
  Rng rng(11);
  const TimeSet svc = fat_cantor(2.0, 6);
  const TimeSet rest = complement(svc);
  for (int trial = 0; trial < 200; ++trial) {
    double a = rng.uniform(0.0, 2.0), b = rng.uniform(0.0, 2.0);
    if (a > b) std::swap(a, b);
    const double total = measure(intersect(svc, {a, b})) + measure(intersect(rest, {a, b}));
    CHECK(std::abs(total - (b - a)) <= 1e-12 * 2.0);
    CHECK(measure_in(svc, {a, b}) == doctest::Approx(measure(intersect(svc, {a, b}))).epsilon(1e-13));
  }
}

TEST_CASE("fat Cantor construction") {
  const TimeSet d1 = fat_cantor(1.0, 1);
  CHECK(d1.intervals() == std::vector<Interval>{{0.0, 0.375}, {0.625, 1.0}});

  const TimeSet d2 = fat_cantor(1.0, 2);
  CHECK(d2.size() == 4);
  CHECK(measure(d2) == doctest::Approx(0.625).epsilon(1e-15));

  for (int depth = 1; depth <= 16; ++depth) {
    const TimeSet s = fat_cantor(3.0, depth);
    CHECK(s.size() == (std::size_t{1} << depth));
    CHECK(std::abs(measure(s) - 3.0 * (1.0 - removed_mass(depth))) <= 1e-12 * 3.0);
  }
  CHECK(std::abs(measure(fat_cantor(1.0, 12)) - (0.5 + std::ldexp(1.0, -13))) <= 1e-12);
  CHECK(std::abs(1.0 - removed_mass(60) - 0.5) < 1e-15);
  CHECK_THROWS_AS(fat_cantor(1.0, 0), InvalidArgument);
  CHECK_THROWS_AS(fat_cantor(1.0, 30), NumericalError);
}

TEST_CASE("shrink nests") {
  const TimeSet base = fat_cantor(1.0, 3);
  const TimeSet half = shrink(base, 0.5), quarter = shrink(base, 0.25);
  CHECK(measure(half) == doctest::Approx(0.5 * measure(base)));
  CHECK(measure(intersect(half, {0, 1})) >= measure(quarter));
  for (const Interval& iv : quarter.intervals())
    CHECK(measure_in(half, iv) == doctest::Approx(iv.length()).epsilon(1e-14));
}

TEST_CASE("density point selection") {
  CHECK(pick_density_point(TimeSet::window(1.0, 0.2, 0.8)) == doctest::Approx(0.5));
  CHECK(pick_density_point(TimeSet::normalize({{0, 0.1}, {0.5, 0.9}}, 1.0).set) == doctest::Approx(0.7));
  CHECK_THROWS_AS(pick_density_point(TimeSet(1.0)), InvalidArgument);

  const TimeSet svc = fat_cantor(1.0, 8);
  const double l = pick_density_point(svc);
  // Earliest widest interval is the first one.
  CHECK(l == doctest::Approx(0.5 * (svc.intervals()[0].lo + svc.intervals()[0].hi)));
  const double half_width = 0.5 * svc.intervals()[0].length();
  for (double theta : {0.9 * half_width, 0.5 * half_width, 1e-3 * half_width})
    CHECK(density_ratio(svc, l, theta) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampled points lie inside the set") {
  const TimeSet svc = fat_cantor(1.0, 5);
  const auto pts = sample_density_points(svc, 100, 3);
  CHECK(pts.size() == 100);
  for (double t : pts) CHECK(measure_in(svc, {t - 1e-9, t + 1e-9}) > 0.0);
  CHECK(pts == sample_density_points(svc, 100, 3));
}

TEST_CASE("cell fractions") {
  const TimeSet s = TimeSet::normalize({{0.1, 0.35}, {0.5, 0.75}}, 1.0).set;
  const Vector w = cell_fractions(s, 4);
  CHECK(w(0) == 0.0);
  CHECK(w(1) == doctest::Approx(0.6));
  CHECK(w(2) == doctest::Approx(0.4));
  CHECK(w(3) == doctest::Approx(1.0));
  CHECK(w(4) == doctest::Approx(0.0));
  const TimeSet svc = fat_cantor(1.0, 6);
  CHECK(cell_fractions(svc, 200).sum() / 200 == doctest::Approx(measure(svc)).epsilon(1e-12));
}

TEST_CASE("density sequence on the full interval") {
  const TimeSet full = TimeSet::window(1.0, 0.0, 1.0);
  const DensitySequence seq = density_sequence(full, 0.5, 2.0, 10);
  REQUIRE(seq.count() == 10);
  CHECK(seq.epsilon == doctest::Approx(1.0 / 7.0));
  CHECK(seq.first < 1.0);
  for (std::size_t m = 0; m + 1 < seq.count(); ++m) {
    CHECK(seq.verified[m]);
    CHECK(seq.gaps[m] == doctest::Approx(seq.gap_mass[m]).epsilon(1e-12));
  }
}

TEST_CASE("density sequence on a fat Cantor set") {
  const TimeSet svc = fat_cantor(1.0, 10);
  const double l = pick_density_point(svc);
  const DensitySequence seq = density_sequence(svc, l, 1.2, 6);
  REQUIRE(seq.count() == 6);
  CHECK(seq.points[0] == seq.first);
  for (std::size_t m = 0; m < seq.count(); ++m) {
    const double expected = l + std::pow(1.2, -static_cast<double>(m)) * (seq.first - l);
    CHECK(std::abs(seq.points[m] - expected) <= 1e-12 * std::abs(expected));
    if (m + 1 < seq.count()) {
      // Re-derive each gap mass from the raw interval list.
      double mass = 0.0;
      for (const Interval& iv : svc.intervals())
        mass += std::max(0.0, std::min(iv.hi, seq.points[m]) - std::max(iv.lo, seq.points[m + 1]));
      CHECK(seq.points[m] - seq.points[m + 1] <= 3.0 * mass + 1e-12);
      CHECK(seq.points[m] > seq.points[m + 1]);
    }
  }
  CHECK(seq.points.back() > l);
}

TEST_CASE("density sequence failure reports the violated gap") {
  // Base point outside the set: every gap has zero mass.
  const TimeSet sparse = TimeSet::normalize({{0.0, 0.1}}, 1.0).set;
  try {
    density_sequence(sparse, 0.5, 2.0, 8);
    FAIL("expected a search failure");
  } catch (const DensitySearchError& e) {
    CHECK(e.worst_gap() >= 1);
  }
}
