#include <cmath>
#include <vector>

#include "doctest.h"
#include "ergolab/interval_geometry.hpp"
#include "ergolab/rng.hpp"

using namespace ergolab;

namespace {
IntervalSet iv(std::vector<std::pair<double, double>> arcs) {
  std::vector<Arc> a;
  for (auto [lo, hi] : arcs) a.push_back(Arc::interval(lo, hi));
  return IntervalSet(Ambient::interval, a);
}

std::vector<Arc> random_arcs(Rng& rng, Ambient amb, int count) {
  std::vector<Arc> out;
  for (int i = 0; i < count; ++i) {
    double c = uniform01(rng);
    double len = 0.2 * uniform01(rng) + 1e-4;
    if (amb == Ambient::circle) {
      out.push_back(Arc::circle(c, c + len));
    } else {
      double lo = std::min(c, 1 - len);
      out.push_back(Arc::interval(lo, lo + len));
    }
  }
  return out;
}
}  // namespace

TEST_CASE("overlapping arcs merge and measure adds up") {
  CHECK(std::fabs(double(iv({{0, 0.2}, {0.1, 0.3}}).measure()) - 0.3) < 1e-15);
  CHECK(iv({{0, 0.2}, {0.1, 0.3}}).arcs().size() == 1);
  CHECK(std::fabs(double(iv({{0.2, 0.5}}).complement().measure()) - 0.7) < 1e-15);
  CHECK(IntervalSet(Ambient::interval).measure() == 0);
}

TEST_CASE("set difference, circle intersection, self difference") {
  IntervalSet d = iv({{0, 0.5}}).subtract(iv({{0.2, 0.3}}));
  auto arcs = d.arcs();
  REQUIRE(arcs.size() == 2);
  CHECK(std::fabs(double(arcs[0].lo)) < 1e-15);
  CHECK(std::fabs(double(arcs[0].hi) - 0.2) < 1e-15);
  CHECK(std::fabs(double(arcs[1].lo) - 0.3) < 1e-15);
  CHECK(std::fabs(double(arcs[1].hi) - 0.5) < 1e-15);

  IntervalSet wrap = IntervalSet::of(Arc::circle(0.9, 0.1));
  IntervalSet small = IntervalSet::of(Arc::circle(0.0, 0.05));
  IntervalSet both = wrap.intersect(small);
  REQUIRE(both.arcs().size() == 1);
  CHECK(std::fabs(double(both.arcs()[0].lo)) < 1e-15);
  CHECK(std::fabs(double(both.arcs()[0].hi) - 0.05) < 1e-15);

  CHECK(d.subtract(d).empty());
}

TEST_CASE("ambient mismatch is an error") {
  IntervalSet a = IntervalSet::of(Arc::circle(0.1, 0.2));
  CHECK_THROWS_AS(a.unite(iv({{0.1, 0.2}})), AmbientMismatch);
}

TEST_CASE("circle distance") {
  CHECK(std::fabs(double(circle_dist(0.9L, 0.1L)) - 0.2) < 1e-15);
  CHECK(circle_dist(0.37L, 0.37L) == 0);
  CHECK(std::fabs(double(circle_dist(0.0L, 0.5L)) - 0.5) < 1e-15);
}

TEST_CASE("fattening") {
  IntervalSet f = iv({{0.4, 0.5}}).fatten(0.01);
  REQUIRE(f.arcs().size() == 1);
  CHECK(std::fabs(double(f.arcs()[0].lo) - 0.39) < 1e-15);
  CHECK(std::fabs(double(f.arcs()[0].hi) - 0.51) < 1e-15);
  CHECK(IntervalSet(Ambient::interval).fatten(0.1).empty());
  CHECK(iv({{0.1, 0.2}, {0.21, 0.3}}).fatten(0.01).arcs().size() == 1);
  // An arc through 0 on the circle stays one arc after fattening.
  IntervalSet c = IntervalSet::of(Arc::circle(0.95, 0.02)).fatten(0.01);
  REQUIRE(c.arcs().size() == 1);
  CHECK(std::fabs(double(c.measure()) - 0.09) < 1e-15);
}

TEST_CASE("canonical form is idempotent and fattening is monotone") {
  Rng rng = make_rng(7, 1, 0);
  for (Ambient amb : {Ambient::circle, Ambient::interval}) {
    for (int trial = 0; trial < 200; ++trial) {
      IntervalSet s(amb, random_arcs(rng, amb, 1 + trial % 9));
      IntervalSet again(amb, s.arcs());
      CHECK(again == s);
      IntervalSet f = s.fatten(0.003);
      CHECK(f.measure() >= s.measure());
      CHECK(f.measure() <= s.measure() + 2 * 0.003 * s.arcs().size() + 1e-15);
      CHECK(f.intersect(s) == s);
    }
  }
}

TEST_CASE("inclusion-exclusion on random families") {
  Rng rng = make_rng(7, 2, 0);
  for (Ambient amb : {Ambient::circle, Ambient::interval}) {
    for (int trial = 0; trial < 300; ++trial) {
      IntervalSet a(amb, random_arcs(rng, amb, 1 + trial % 7));
      IntervalSet b(amb, random_arcs(rng, amb, 1 + trial % 5));
      real lhs = a.unite(b).measure() + a.intersect(b).measure();
      real rhs = a.measure() + b.measure();
      CHECK(std::fabs(double(lhs - rhs)) < 1e-14);
      CHECK(std::fabs(double(a.subtract(b).measure() + a.intersect(b).measure() - a.measure())) < 1e-14);
      CHECK(std::fabs(double(a.measure() + a.complement().measure()) - 1.0) < 1e-14);
    }
  }
}

TEST_CASE("union measure agrees with a million-point grid count") {
  Rng rng = make_rng(7, 3, 0);
  const int grid = 1000000;
  const double h = 1.0 / grid;
  for (Ambient amb : {Ambient::circle, Ambient::interval}) {
    for (int trial = 0; trial < 4; ++trial) {
      auto arcs = random_arcs(rng, amb, 12);
      IntervalSet u(amb, arcs);
      long hits = 0;
      for (int i = 0; i < grid; ++i) {
        real x = (i + 0.5L) * h;
        for (const Arc& a : arcs) {
          if (a.contains(x)) {
            ++hits;
            break;
          }
        }
      }
      double est = hits * h;
      CHECK(std::fabs(est - double(u.measure())) <= 2 * h * arcs.size());
    }
  }
}

TEST_CASE("covers and contains respect closed endpoints") {
  IntervalSet s = iv({{0.1, 0.3}, {0.5, 0.6}});
  CHECK(s.contains(real(0.1)));
  CHECK(s.contains(real(0.3)));
  CHECK_FALSE(s.contains(0.4L));
  CHECK(s.covers(Arc::interval(0.15, 0.3)));
  CHECK_FALSE(s.covers(Arc::interval(0.25, 0.55)));
  IntervalSet c = IntervalSet::of(Arc::circle(0.8, 0.2));
  CHECK(c.covers(Arc::circle(0.95, 0.05)));
  CHECK(c.contains(1.05L));
}
