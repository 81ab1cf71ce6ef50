#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ergolab/expansion_stats.hpp"
#include "ergolab/induced_map.hpp"

using namespace ergolab;

namespace {
TowerRun build(const IntervalMap& m, std::size_t n_max, std::size_t seeds) {
  ExpansionConfig c = default_expansion_config(m, 1000, 3);
  if (m.name() == "doubling") c.sigma = std::pow(2.0, -0.25);
  TowerConfig cfg;
  cfg.n_max = n_max;
  cfg.seeds = seeds;
  cfg.r0 = m.name() == "gauss" ? 3 : 12;
  cfg.exact_view = false;
  return run_tower(m, c, cfg);
}

struct Fixture {
  DoublingMap d;
  TowerRun run = build(d, 30, 2000);
};
}  // namespace

TEST_CASE_FIXTURE(Fixture, "doubling return map") {
  InducedMap im(d, run);
  REQUIRE(!run.elements.empty());
  MarkovReport mk = verify_markov(im);
  CHECK(mk.pass());
  CHECK(mk.passed == run.elements.size());
  CHECK(mk.max_residual < 1e-9);

  ExpansionReport ex = verify_expansion(im);
  std::size_t r_min = run.elements.front().r;
  for (const auto& e : run.elements) r_min = std::min(r_min, e.r);
  CHECK(ex.lambda_hat == doctest::Approx(std::ldexp(1.0, static_cast<int>(r_min))).epsilon(1e-12));
  CHECK(ex.log_lambda_hat >= 13 * std::log(2.0) - 1e-12);
  CHECK(ex.chain_rule_error < 1e-9);

  DistortionReport dr = verify_distortion(im, 1000, 7);
  CHECK(dr.b_tilde == 0.0);
  CHECK(dr.k_hat == 0.0);
  CHECK(dr.pairs_tested + dr.pairs_rejected == 1000);
  CHECK(dr.pairs_rejected > 0);
  CHECK(dr.max_pair_dist_scaled <= 1 + 1e-6);
  CHECK(dr.form_consistent);
}

TEST_CASE_FIXTURE(Fixture, "widened element fails the Markov check") {
  TowerRun bad = run;
  bad.elements[0].u[0].lo -= 1e-6;
  bad.elements[0].u[0].hi += 1e-6;
  InducedMap im(d, bad);
  MarkovReport mk = verify_markov(im);
  CHECK_FALSE(mk.pass());
  REQUIRE(mk.failures.size() == 1);
  CHECK(mk.failures[0] == 0);
  CHECK(mk.max_residual > 1e-3);
}

TEST_CASE_FIXTURE(Fixture, "separation time") {
  InducedMap im(d, run);
  const auto& e0 = run.elements[0].u[0];
  const auto& e1 = run.elements[1].u[0];
  const real x = e0.lo + e0.length() / 3;
  CHECK(separation_time(im, x, x, 25).s == 25);
  CHECK(separation_time(im, x, x, 25).censored == Censor::none);

  Separation apart = separation_time(im, x, e1.lo + e1.length() / 2, 25);
  CHECK(apart.s == 0);
  CHECK(apart.censored == Censor::none);

  const real y = x + 1e-6 * e0.length();
  Separation close = separation_time(im, x, y, 25);
  CHECK(close.s >= 1);
  if (close.censored == Censor::none) CHECK(static_cast<double>(y - x) * std::pow(im.lambda_hat(), close.s) <= 1 + 1e-6);

  // Two points outside every recorded element cannot be decided.
  real gap = -1;
  for (real t = run.base.p - run.base.delta0 + 1e-5L; t < run.base.p + run.base.delta0; t += 1e-5L)
    if (!im.element_of(t) && !im.element_of(t + 1e-9L)) {
      gap = t;
      break;
    }
  REQUIRE(gap >= -0.5);
  CHECK(separation_time(im, gap, gap + 1e-9L, 25).censored == Censor::remnant);
}

TEST_CASE("weak element raises an expansion failure") {
  LsvMap lsv(0.5);
  TowerRun run;
  run.base.ambient = Ambient::circle;
  run.base.p = 0;
  run.base.delta0 = 0.01;
  PartitionElement e;
  e.u[0] = Arc{0.001L, 0.002L, Ambient::circle};
  e.u[1] = e.u[2] = e.u[3] = e.u[0];
  e.r = 1;
  run.elements.push_back(e);
  e.u[0] = Arc{0, 0.0005L, Ambient::circle};
  e.u[1] = e.u[2] = e.u[3] = e.u[0];
  run.elements.push_back(e);
  InducedMap im(lsv, run);
  try {
    verify_expansion(im);
    FAIL("expected ExpansionFailure");
  } catch (const ExpansionFailure& f) {
    CHECK(f.element() == 1);
  }
  CHECK_FALSE(verify_markov(im).pass());
}

TEST_CASE("LSV return map") {
  LsvMap lsv(0.5);
  TowerRun run = build(lsv, 400, 1000);
  REQUIRE(run.elements.size() > 10);
  InducedMap im(lsv, run);
  MarkovReport mk = verify_markov(im);
  CHECK(mk.pass());
  ExpansionReport ex = verify_expansion(im);
  CHECK(ex.lambda_hat > 1);
  CHECK(ex.chain_rule_error < 1e-9);
  DistortionReport a = verify_distortion(im, 1000, 3);
  DistortionReport b = verify_distortion(im, 2000, 3);
  CHECK(std::isfinite(a.b_tilde));
  CHECK(a.b_tilde > 0);
  CHECK(b.b_tilde == doctest::Approx(a.b_tilde).epsilon(0.1));
  CHECK(std::isfinite(a.k_hat));
  CHECK(a.max_pair_dist_scaled <= 1 + 1e-6);
  CHECK(a.form_consistent);
}

TEST_CASE("Gauss return map") {
  auto g = make_interval_map(ModelSpec{"gauss"});
  g->set_lambda(default_lambda(ModelSpec{"gauss"}));
  TowerRun run = build(*g, 30, 1000);
  REQUIRE(!run.elements.empty());
  InducedMap im(*g, run);
  CHECK(verify_markov(im).pass());
  CHECK(verify_expansion(im).lambda_hat > 1);
}

TEST_CASE_FIXTURE(Fixture, "element table and manifest") {
  InducedMap im(d, run);
  std::ostringstream csv;
  write_element_csv(csv, im);
  CHECK(csv.str().find("index,lo,hi,R,min_slope,max_slope,distortion_lip") != std::string::npos);
  CHECK(csv.str().find("# seed=1") != std::string::npos);
  std::ostringstream js;
  write_induced_manifest(js, im, verify_markov(im), verify_expansion(im), verify_distortion(im, 100, 1));
  CHECK(js.str().find("\"b_tilde\": 0.0") != std::string::npos);
}
