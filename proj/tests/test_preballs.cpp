#include <cmath>

#include "doctest.h"
#include "ergolab/preballs.hpp"

using namespace ergolab;

namespace {
ExpansionConfig config_for(const MapModel& m, std::size_t horizon) {
  ExpansionConfig c;
  c.lambda = m.lambda();
  c.sigma = std::exp(-c.lambda / 4);
  c.eps_rec = c.lambda / 20;
  c.delta_rec = 0.1;
  c.delta_hyp = 0.1;
  c.b = 0.25 * (m.nondegeneracy().beta > 0 ? std::min(0.5, 1 / (4 * m.nondegeneracy().beta)) : 0.5);
  c.horizon = horizon;
  return c;
}

ExpansionConfig doubling_config() {
  DoublingMap d;
  ExpansionConfig c = config_for(d, 1000);
  c.sigma = std::pow(2.0, -0.25);
  return c;
}
}  // namespace

TEST_CASE("doubling pre-balls are exact dyadic balls") {
  DoublingMap d;
  ExpansionConfig c = doubling_config();
  for (std::size_t n : {1u, 5u, 12u, 30u}) {
    PreballReport r = preball(d, c, 0.3141L, n, 0.05);
    const real radius = static_cast<real>(0.05) * std::ldexp(1.0L, -static_cast<int>(n));
    CHECK(std::fabs(r.preball.length() - 2 * radius) < 1e-18L);
    CHECK(std::fabs(r.shadow - 0.3141L) < 1e-18L);
    CHECK(std::fabs((r.preball.lo + r.preball.hi) / 2 - r.shadow) < 1e-18L);
    for (std::size_t k = 1; k < n; ++k) {
      CHECK(r.contraction[k - 1] == doctest::Approx(std::ldexp(1.0, -static_cast<int>(k))).epsilon(1e-12));
    }
    CHECK(r.contraction_violations == 0);
    CHECK(r.distortion == 1.0);
    CHECK(r.endpoint_residual < (n <= 5 ? 1e-15 : 1e-9));
    CHECK(r.monotone);
    CHECK(r.passes());
  }
}

TEST_CASE("pre-ball radius beyond the branch range is rejected") {
  DoublingMap d;
  ExpansionConfig c = doubling_config();
  try {
    preball(d, c, 0.2L, 3, 0.6);
    FAIL("expected RadiusTooLarge");
  } catch (const RadiusTooLarge& e) {
    CHECK(e.feasible_radius() == 0.5);
  }
  GaussMap g;
  ExpansionConfig cg = config_for(g, 100);
  // f(0.4) = 0.5: any radius above 0.5 leaves [0,1].
  try {
    preball(g, cg, 0.4L, 1, 0.6);
    FAIL("expected RadiusTooLarge");
  } catch (const RadiusTooLarge& e) {
    CHECK(e.feasible_radius() == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("LSV pre-ball at the first hyperbolic time") {
  LsvMap l(0.5);
  ExpansionConfig c = config_for(l, 2000);
  BranchOrbit o = l.branch_orbit(0.7L, 2000, 0);
  std::vector<double> le(2000), ld(2000, 0.0);
  for (std::size_t j = 0; j < 2000; ++j) le[j] = std::log(static_cast<double>(l.slope(o.x[j])));
  auto times = hyperbolic_times_from_terms(le, ld, c.sigma, c.b);
  REQUIRE(!times.empty());
  PreballReport r = preball(l, c, 0.7L, times.front(), 0.05);
  CHECK(r.contraction_violations == 0);
  CHECK(r.monotone);
  CHECK(r.endpoint_residual < 1e-9);
  CHECK(std::isfinite(r.distortion));
  CHECK(r.distortion >= 1.0);

  // D1 is stable under doubling the sample density.
  PreballOptions dense;
  dense.sample = 200;
  PreballReport r2 = preball(l, c, 0.7L, times.front(), 0.05, dense);
  CHECK(std::fabs(r2.distortion - r.distortion) <= 0.1 * r.distortion);
}

TEST_CASE("non-hyperbolic times are refused") {
  LsvMap l(0.5);
  ExpansionConfig c = config_for(l, 100);
  // Near the indifferent point the first steps barely expand.
  CHECK_THROWS_AS(preball(l, c, 1e-3L, 2, 0.05), std::invalid_argument);
}

TEST_CASE("uniform cover time") {
  DoublingMap d;
  ExpansionConfig c = doubling_config();
  CoverTimeReport r = uniform_cover_time(d, c, 0.01, 2000, 3);
  CHECK(r.kappa == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.n_prime == 10);
  CHECK(r.n_eps == 10);
  CHECK(r.uncovered == 0.0);
  CHECK(r.n_prime_rate_reading == 4);

  LsvMap l(0.5);
  ExpansionConfig cl = config_for(l, 10000);
  CoverTimeReport rl = uniform_cover_time(l, cl, 0.05, 10000, 3);
  CHECK(rl.n_eps >= rl.n_prime);
  CHECK(rl.uncovered <= 0.05 / 10);

  ExpansionConfig short_horizon = cl;
  short_horizon.horizon = 1000;
  CHECK_THROWS_AS(uniform_cover_time(l, short_horizon, 1e-60, 100, 3), NotFound);
}

TEST_CASE("dense pre-image base points") {
  DoublingMap d;
  BasePoint b = dense_preimage_base(d, 0.02);
  CHECK(b.p == 0);
  CHECK(b.n0 == 5);
  CHECK(b.density == doctest::Approx(1.0 / 64));
  CHECK(dense_preimage_base(d, 0.4).n0 == 1);

  GaussMap g;
  BasePoint bg = dense_preimage_base(g, 0.05);
  CHECK(bg.density <= 0.05);
  PreimageTree t = preimage_tree(g, bg.p, bg.n0, 0.05);
  for (const auto& node : t.nodes) CHECK(node.x >= 0.01L);
  CHECK(t.max_gap_distance <= 0.05);
}

TEST_CASE("base geometry constants") {
  DoublingMap d;
  BaseGeometry g = make_base_geometry(d, 0.01, 0.05);
  CHECK(g.p == 0);
  CHECK(g.n0 == 5);
  CHECK(g.c0 == doctest::Approx(32.0));
  CHECK(g.d0 == doctest::Approx(1.0));
  CHECK(g.radius(3) == doctest::Approx(0.2));
  CHECK_THROWS_AS(make_base_geometry(d, 0.01, 0.05, true), ConfigError);
  CHECK_NOTHROW(make_base_geometry(d, 1e-4, 0.05, true));

  // C0 bounds |(f^m)'| and its inverse at every tree point.
  LsvMap l(0.5);
  BaseGeometry gl = make_base_geometry(l, 0.01, 0.05);
  // Derivative along each node's own branch path, so points on the branch
  // boundary 1/2 use the slope of the branch that carries them to p.
  for (const auto& node : gl.tree.nodes) {
    double log_d = 0;
    for (const TreeNode* q = &node; q->parent >= 0; q = &gl.tree.nodes[q->parent])
      log_d += std::log(static_cast<double>(l.slope(q->x)));
    CHECK(std::exp(log_d) <= gl.c0 * (1 + 1e-12));
    CHECK(std::exp(-log_d) <= gl.c0 * (1 + 1e-12));
  }
}

TEST_CASE("return to base") {
  DoublingMap d;
  BaseGeometry g = make_base_geometry(d, 0.01, 0.05);
  Arc b = Arc::circle(0.3, 0.4);
  ReturnToBase r = return_to_base(d, g, b);
  CHECK(r.steps <= 5);
  CHECK(r.steps == 3);
  CHECK(r.tree_point == 0.375L);
  CHECK(IntervalSet::of(b).covers(Arc::circle(r.v.lo, r.v.hi)));
  CHECK(r.distortion == 1.0);
  CHECK(r.endpoint_residual < 1e-15);

  // The dyadic point 5/16 is also a valid landing point at depth 4.
  bool found = false;
  for (const auto& node : g.tree.nodes) {
    if (node.x == 0.3125L) {
      found = node.level == 4 && IntervalSet::of(b).covers(Arc::circle(node.v_lo, node.v_hi));
    }
  }
  CHECK(found);

  ReturnToBase whole = return_to_base(d, g, Arc::circle(0.7, 0.3));
  CHECK(whole.steps == 0);

  LsvMap l(0.5);
  BaseGeometry gl = make_base_geometry(l, 0.01, 0.05);
  for (double c : {0.12, 0.33, 0.61, 0.87}) {
    ReturnToBase rl = return_to_base(l, gl, Arc::ball(Ambient::circle, c, 0.05));
    CHECK(rl.steps <= gl.n0);
    CHECK(rl.endpoint_residual < 1e-9);
    ReturnToBase dense = return_to_base(l, gl, Arc::ball(Ambient::circle, c, 0.05), 128);
    CHECK(std::fabs(dense.distortion - rl.distortion) <= 0.1 * rl.distortion);
  }
}
