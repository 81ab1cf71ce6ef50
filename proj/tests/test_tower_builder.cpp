#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ergolab/tower_builder.hpp"

using namespace ergolab;

namespace {
ExpansionConfig doubling_config(const MapModel& m) {
  ExpansionConfig c;
  c.lambda = m.lambda();
  c.sigma = std::pow(2.0, -0.25);
  c.eps_rec = c.lambda / 20;
  c.delta_rec = 0.1;
  c.delta_hyp = 0.1;
  c.b = 0.125;
  c.horizon = 1000;
  return c;
}

double circle_gap(real a, real b) {
  real d = std::fmod(a - b, real(1));
  if (d < 0) d += 1;
  return static_cast<double>(std::min(d, 1 - d));
}

TowerRun small_doubling(std::size_t n_max, std::size_t seeds = 2000) {
  DoublingMap d;
  TowerConfig cfg;
  cfg.n_max = n_max;
  cfg.seeds = seeds;
  return run_tower(d, doubling_config(d), cfg);
}
}  // namespace

TEST_CASE("ring index") {
  const double sigma = std::pow(2.0, -0.25);
  RingSystem rs = RingSystem::make(0.01, sigma);
  CHECK(rs.k_ring > 100);
  CHECK(ring_index(rs, 0.016) == 6);
  CHECK(ring_index(rs, 0.02) == 1);
  // Just inside the first ring boundary: floor(2 log(sigma^{1/2}(1-1e-15)) / log sigma) + 1 = 2.
  CHECK(ring_index(rs, rs.boundary(1) * (1 - 1e-15)) == 2);
  CHECK(ring_index(rs, rs.boundary(1) * (1 + 1e-12)) == 1);
  CHECK(ring_index(rs, 0.01 * (1 + 1e-14)) == rs.k_ring);
  CHECK_THROWS_AS(ring_index(rs, 0.005), std::domain_error);
  CHECK_THROWS_AS(ring_index(rs, 0.0201), std::domain_error);
  for (std::size_t k = 1; k + 1 < rs.k_ring; k += 7) {
    const double mid = 0.5 * (rs.boundary(k) + rs.boundary(k - 1));
    CHECK(ring_index(rs, mid) == k);
    CHECK(rs.inner_threshold(k) == rs.boundary(k - 1));
  }
  CHECK(rs.inner_threshold(0) == 0.02);
  CHECK(rs.inner_threshold(rs.k_ring + 1) == 0.01);
}

TEST_CASE("collar epsilon bound") {
  BaseGeometry g;
  g.delta0 = 0.01;
  g.n0 = 5;
  g.c0 = 32;
  const double sigma = std::pow(2.0, -0.25);
  const double expect = std::pow(2.0, -5.0 / 8) * 0.01 * (std::pow(2.0, 0.125) - 1) / 32;
  CHECK(collar_epsilon_bound(g, sigma) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(collar_epsilon_bound(g, sigma) == doctest::Approx(1.8e-5).epsilon(0.05));
  g.n0 = 0;
  CHECK(collar_epsilon_bound(g, sigma) == doctest::Approx(0.01 * (std::pow(2.0, 0.125) - 1) / 32).epsilon(1e-14));
  CHECK(collar_epsilon_bound(g, 1 - 1e-12) < 1e-13);
}

TEST_CASE("eps above the collar bound is a configuration error") {
  DoublingMap d;
  TowerConfig cfg;
  cfg.n_max = 20;
  cfg.seeds = 100;
  cfg.eps = 1.0;
  try {
    run_tower(d, doubling_config(d), cfg);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.constraint() == "collar_epsilon_bound");
  }
  cfg.allow_eps_above_bound = true;
  CHECK_NOTHROW(run_tower(d, doubling_config(d), cfg));
}

TEST_CASE("n_max at or below R0 leaves the base untouched") {
  TowerRun run = small_doubling(12, 500);
  CHECK(run.elements.empty());
  for (const auto& s : run.steps) {
    CHECK(s.exact_delta == doctest::Approx(run.base_measure()).epsilon(1e-15));
    CHECK(s.exact_a == doctest::Approx(run.base_measure()).epsilon(1e-15));
    CHECK(s.exact_a_eps == doctest::Approx(run.base_measure()).epsilon(1e-15));
    CHECK(s.exact_b == 0);
    CHECK(s.returned == 0);
    CHECK(s.alive == 500);
  }
  CHECK(run.collar.empty());
}

TEST_CASE("doubling to n = 30") {
  DoublingMap d;
  TowerRun run = small_doubling(30);
  REQUIRE(run.elements.size() >= 1);
  CHECK(run.overlaps == 0);
  const real p = run.base.p;
  const real d0 = run.base.delta0;
  for (const auto& e : run.elements) {
    CHECK(e.r > 12);
    CHECK(e.r <= 30);
    CHECK(e.n_hyp + e.extra == e.r);
    CHECK(e.extra <= run.base.n0);
    for (int i = 0; i < 3; ++i) {
      CHECK(e.u[i].lo >= e.u[i + 1].lo);
      CHECK(e.u[i].hi <= e.u[i + 1].hi);
    }
    // f^R(U^0) = base ball on the circle, by forward iteration of the endpoints.
    real lo = e.u[0].lo, hi = e.u[0].hi;
    for (std::size_t k = 0; k < e.r; ++k) {
      lo = 2 * lo;
      hi = 2 * hi;
    }
    CHECK(circle_gap(lo, p - d0) < 1e-9);
    CHECK(circle_gap(hi, p + d0) < 1e-9);
    CHECK(static_cast<double>(hi - lo) == doctest::Approx(0.02).epsilon(1e-9));
  }
}

TEST_CASE("tower invariants hold step by step") {
  TowerRun run = small_doubling(40);
  const double base = run.base_measure();
  double returned = 0;
  for (std::size_t n = 1; n <= 40; ++n) {
    const StepRecord& s = run.steps[n];
    returned += s.exact_r_eq_n;
    CHECK(s.exact_delta + returned == doctest::Approx(base).epsilon(1e-12));
    CHECK(s.exact_a + s.exact_b == doctest::Approx(s.exact_delta).epsilon(1e-12));
    CHECK(s.exact_a_eps >= s.exact_a - 1e-15);
    CHECK(s.exact_delta <= run.steps[n - 1].exact_delta + 1e-15);
    CHECK(s.alive + s.returned == run.steps[n - 1].alive - s.lost);
    CHECK(s.in_a + s.in_b == s.alive);
    CHECK(s.collar_violations == 0);
    CHECK(s.exact_collar_failures == 0);
  }
  for (const auto& c : run.collar) CHECK(c.pass);
}

TEST_CASE("exact state stays consistent when replayed") {
  DoublingMap d;
  TowerRun run = small_doubling(30);
  TowerState st = initial_state(run);
  for (std::size_t n = 1; n <= 30; ++n) {
    TowerState nx = tower_step(d, run, st);
    CHECK(nx.n == n);
    CHECK(static_cast<double>(nx.a.intersect(nx.b).measure()) < 1e-15);
    CHECK(static_cast<double>(nx.a.subtract(nx.a_eps).measure()) < 1e-15);
    for (std::size_t i : nx.finished) CHECK(static_cast<double>(nx.delta.intersect(IntervalSet::of(run.elements[i].u[0])).measure()) < 1e-15);
    CollarReport cr = collar_check(run, st, nx);
    CHECK(cr.pass);
    if (n <= 12) {
      CHECK(nx.b.empty());
      CHECK(nx.collar.empty());
    }
    for (const auto& [set, t] : nx.t_levels()) {
      CHECK(t >= 1);
      CHECK(static_cast<std::size_t>(t) <= run.rings.k_ring);
      CHECK(static_cast<double>(set.subtract(nx.b).measure()) < 1e-15);
    }
    st = std::move(nx);
  }
}

TEST_CASE("manifest round trip") {
  TowerRun run = small_doubling(24, 400);
  std::ostringstream a;
  write_tower_manifest(a, run);
  std::istringstream in(a.str());
  TowerRun back = read_tower_manifest(in);
  std::ostringstream b;
  write_tower_manifest(b, back);
  CHECK(a.str() == b.str());
  REQUIRE(back.elements.size() == run.elements.size());
  for (std::size_t i = 0; i < run.elements.size(); ++i) {
    CHECK(back.elements[i].u[0].lo == run.elements[i].u[0].lo);
    CHECK(back.elements[i].r == run.elements[i].r);
  }
  std::istringstream bad("{\"model\": 3}");
  CHECK_THROWS_AS(read_tower_manifest(bad), VerificationError);
}

TEST_CASE("runs are deterministic") {
  TowerRun a = small_doubling(20, 300);
  TowerRun b = small_doubling(20, 300);
  std::ostringstream sa, sb;
  write_tower_csv(sa, a);
  write_tower_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().find("n,leb_delta_n,leb_R_eq_n,elements_cumulative") != std::string::npos);
}
