#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ergolab/map_models.hpp"

using namespace ergolab;

namespace {
bool near(real a, real b, real tol) { return std::fabs(a - b) <= tol; }

// Independent root finder for the left LSV branch: plain bisection.
real lsv_left_bisect(double alpha, real y) {
  real lo = 0, hi = 0.5L;
  for (int i = 0; i < 200; ++i) {
    real mid = (lo + hi) / 2;
    real v = mid * (1 + std::pow(2 * mid, static_cast<real>(alpha)));
    (v < y ? lo : hi) = mid;
  }
  return (lo + hi) / 2;
}
}  // namespace

TEST_CASE("evaluation examples") {
  DoublingMap d;
  LsvMap l1(1.0);
  GaussMap g;
  CHECK(near(d.evaluate(pt(0.3))[0], 0.6, 1e-15));
  CHECK(near(l1.evaluate(pt(0.25))[0], 0.375, 1e-15));
  CHECK(near(g.evaluate(pt(0.4))[0], 0.5, 1e-14));
  CHECK_THROWS_AS(g.evaluate(pt(0.0)), SingularPoint);
}

TEST_CASE("truncated distance to the singular set") {
  GaussMap g;
  DoublingMap d;
  CHECK(dist_delta(g, pt(0.05), 0.1) == doctest::Approx(0.05));
  CHECK(dist_delta(g, pt(0.5), 0.1) == 1.0);
  CHECK(dist_delta(d, pt(0.01), 0.1) == 1.0);
}

TEST_CASE("branch pre-images") {
  DoublingMap d;
  auto pd = d.branch_preimages(0.3L);
  REQUIRE(pd.size() == 2);
  CHECK(near(pd[0], 0.15L, 1e-18L));
  CHECK(near(pd[1], 0.65L, 1e-18L));

  LsvMap l1(1.0);
  auto pl = l1.branch_preimages(0.375L);
  REQUIRE(pl.size() == 2);
  CHECK(near(pl[0], 0.25L, 1e-15L));
  CHECK(near(pl[1], 0.6875L, 1e-15L));

  GaussMap g3(3);
  auto pg = g3.branch_preimages(0.5L);
  REQUIRE(pg.size() == 3);
  CHECK(near(pg[0], 1 / 1.5L, 1e-15L));
  CHECK(near(pg[1], 1 / 2.5L, 1e-15L));
  CHECK(near(pg[2], 1 / 3.5L, 1e-15L));
}

TEST_CASE("LSV inverse agrees with an independent bisection") {
  for (double alpha : {0.3, 0.5, 0.8, 1.0}) {
    LsvMap m(alpha);
    for (int i = 1; i < 200; ++i) {
      real y = i / 200.0L;
      CHECK(near(m.inverse(0, y), lsv_left_bisect(alpha, y), 1e-15L));
    }
  }
}

TEST_CASE("branch round trip") {
  Rng rng = make_rng(11, 1, 0);
  LsvMap lsv(0.5);
  GaussMap gauss(10000);
  DoublingMap dbl;
  const IntervalMap* models[] = {&dbl, &lsv, &gauss};
  for (const IntervalMap* m : models) {
    real worst = 0;
    for (int i = 0; i < 10000; ++i) {
      int b = static_cast<int>(rng() % std::min(m->branch_count(), 50));
      real y = 1e-9L + uniform01(rng) * (1 - 2e-9L);
      real x = m->inverse(b, y);
      real back = m->forward(x);
      worst = std::max(worst, std::fabs(back - y));
    }
    CHECK(worst < 1e-10L);
  }
}

TEST_CASE("circle lift inverse handles positions outside [0,1)") {
  LsvMap m(0.5);
  for (real y : {-0.3L, -0.05L, 1.2L, 2.7L}) {
    for (int b = 0; b < 2; ++b) {
      real x = m.inverse(b, y);
      CHECK(near(wrap01(m.forward(x)), wrap01(y), 1e-15L));
    }
  }
  // Continuity across 0: pulling back a lifted arc keeps it an arc.
  real a = m.inverse(0, -0.01L), c = m.inverse(0, 0.01L);
  CHECK(a < c);
  CHECK(c - a < 0.03L);
}

TEST_CASE("derivative matches a central finite difference") {
  Rng rng = make_rng(11, 2, 0);
  LsvMap lsv(0.5);
  GaussMap gauss(10000);
  DoublingMap dbl;
  const IntervalMap* models[] = {&dbl, &lsv, &gauss};
  const real h = 1e-7L;
  for (const IntervalMap* m : models) {
    int bad = 0;
    for (int i = 0; i < 10000; ++i) {
      real x = 0.001L + 0.998L * uniform01(rng);
      if (m->branch_of(x - h) != m->branch_of(x + h)) continue;
      real fd = (m->forward(x + h) - m->forward(x - h)) / (2 * h);
      real exact = m->slope(x);
      if (std::fabs(std::fabs(fd) - exact) / exact >= 1e-6L) ++bad;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("branch domains cover the ambient space") {
  CHECK(near(DoublingMap().covered_measure(), 1, 1e-12L));
  CHECK(near(LsvMap(0.5).covered_measure(), 1, 1e-12L));
  GaussMap g(10000);
  CHECK(near(g.covered_measure() + g.excluded_mass(), 1, 1e-12L));
  CHECK(LsvMap(0.5).branch_count() == 2);
  CHECK(DoublingMap().branch_count() == 2);
}

TEST_CASE("non-degeneracy constants") {
  auto d = check_nondegeneracy(DoublingMap(), 2000, 5);
  CHECK(d.passes());
  CHECK(d.beta_hat == 0);
  CHECK(d.B_hat >= 2);

  auto g = check_nondegeneracy(GaussMap(10000), 10000, 5);
  CHECK(g.s1_ok());
  CHECK(g.beta_hat == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g.lipschitz_violations == 0);

  auto l = check_nondegeneracy(LsvMap(0.5), 2000, 5);
  CHECK(l.s1_ok());
  CHECK(l.beta_hat == 0);
  CHECK(l.min_slope >= 1.0);
  CHECK(l.max_slope <= 4.0);
}

TEST_CASE("doubling orbits stay exact in distribution beyond 53 steps") {
  DoublingMap d;
  std::vector<Point> orbit;
  d.trajectory(pt(0.3), 200, 42, orbit);
  CHECK(orbit[1][0] == doctest::Approx(0.6));
  CHECK(orbit[2][0] == doctest::Approx(0.2));
  int zeros = 0;
  for (const auto& p : orbit) zeros += p[0] == 0.0;
  CHECK(zeros == 0);
}

TEST_CASE("Viana strip is forward invariant") {
  VianaMap v;
  Rng rng = make_rng(3, 3, 0);
  std::vector<Point> orbit;
  for (int i = 0; i < 100; ++i) {
    v.trajectory(v.sample(rng), 500, i, orbit);
    for (const auto& p : orbit) {
      CHECK(std::fabs(p[1]) <= v.x_bound() + 1e-12);
    }
  }
  CHECK(v.deriv_norm_inv(Point{0.1, 0.5}) == doctest::Approx(1.0).epsilon(0.01));
}
