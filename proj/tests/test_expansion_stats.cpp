#include <cmath>

#include "doctest.h"
#include "ergolab/errors.hpp"
#include "ergolab/expansion_stats.hpp"

using namespace ergolab;

namespace {
ExpansionConfig base_config(const MapModel& m, std::size_t horizon) {
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

const double kGolden = (std::sqrt(5.0) - 1) / 2;
}  // namespace

TEST_CASE("expansion and recurrence times on the doubling map") {
  auto m = make_model({"doubling"});
  ExpansionConfig c = base_config(*m, 1000);
  for (double x : {0.1, 0.3, 0.77}) {
    CHECK(expansion_time(*m, c, pt(x), 1) == std::optional<std::size_t>(1));
    CHECK(recurrence_time(*m, c, pt(x), 1) == std::optional<std::size_t>(1));
  }
}

TEST_CASE("LSV orbit near the indifferent point expands late") {
  ModelSpec spec{"lsv"};
  spec.alpha = 0.5;
  spec.lambda = 0.35;
  auto m = make_model(spec);
  ExpansionConfig c = base_config(*m, 100000);
  auto e = expansion_time(*m, c, pt(1e-4), 3);
  REQUIRE(e.has_value());
  CHECK(*e > 50);

  auto h = hyperbolic_times(*m, c, pt(1e-4), 3);
  OrbitRecord o = compute_orbit(*m, c, pt(1e-4), 3);
  std::size_t escape = 0;
  while (o.points[escape][0] < 0.5) ++escape;
  REQUIRE(!h.times.empty());
  CHECK(h.times.front() >= escape);
}

TEST_CASE("Gauss fixed point") {
  ModelSpec spec{"gauss"};
  spec.lambda = 0.96;
  auto m = make_model(spec);
  CHECK(std::log(1 / (kGolden * kGolden)) >= m->lambda() / 2);
  // Short horizon: the floating-point orbit stays at the unstable fixed point.
  ExpansionConfig c = base_config(*m, 30);
  CHECK(expansion_time(*m, c, pt(kGolden)) == std::optional<std::size_t>(1));
  CHECK(recurrence_time(*m, c, pt(kGolden)) == std::optional<std::size_t>(1));
  auto h = hyperbolic_times(*m, c, pt(kGolden));
  CHECK(h.times.size() == 30);
  CHECK(h.density == 1.0);
}

TEST_CASE("Gauss orbit passing close to the singular point") {
  auto m = make_model({"gauss"});
  ExpansionConfig c = base_config(*m, 2000);
  c.delta_rec = 0.1;
  c.eps_rec = 0.05;
  Point x = pt(1 / (1 + 1e-6));
  OrbitRecord o = compute_orbit(*m, c, x, 0);
  CHECK(o.recurrence_sum[2] / 2 > 2 * c.eps_rec);
  auto r = recurrence_time(o, c);
  CHECK_FALSE((r.has_value() && *r < 2));
}

TEST_CASE("orbit record prefix sums are consistent") {
  auto m = make_model({"gauss"});
  ExpansionConfig c = base_config(*m, 500);
  OrbitRecord o = compute_orbit(*m, c, pt(0.3141), 0);
  for (std::size_t j = 0; j < o.horizon(); ++j) {
    CHECK(o.expansion_sum[j + 1] - o.expansion_sum[j] == doctest::Approx(o.log_expansion[j]).epsilon(1e-9));
    double term = -std::log(dist_delta(*m, o.points[j], c.delta_rec));
    CHECK(o.recurrence_sum[j + 1] - o.recurrence_sum[j] == doctest::Approx(term).epsilon(1e-9));
  }
}

TEST_CASE("hyperbolic-time detector agrees with the direct oracle") {
  std::vector<ModelSpec> specs = {{"doubling"}, {"lsv"}, {"gauss"}};
  specs[1].alpha = 0.5;
  for (const auto& spec : specs) {
    auto m = make_model(spec);
    ExpansionConfig c = base_config(*m, 300);
    Rng rng = make_rng(5, 1, 0);
    for (int i = 0; i < 40; ++i) {
      OrbitRecord o = compute_orbit(*m, c, m->sample(rng), i);
      auto fast = hyperbolic_times(o, c);
      auto slow = hyperbolic_times_oracle(*m, o, c);
      CHECK(fast.times == slow.times);
    }
  }
}

TEST_CASE("every time is hyperbolic for the doubling map") {
  auto m = make_model({"doubling"});
  ExpansionConfig c = base_config(*m, 200);
  c.sigma = std::pow(2.0, -0.25);
  auto h = hyperbolic_times(*m, c, pt(0.123), 9);
  CHECK(h.times.size() == 200);
}

TEST_CASE("gamma fraction") {
  auto d = make_model({"doubling"});
  GammaSeries gd = gamma_fraction(*d, base_config(*d, 1000), 1000, 1);
  for (const auto& p : gd.fraction.points) CHECK(p.value == 0.0);
  CHECK(gd.fraction.size() == 1000);

  ModelSpec spec{"lsv"};
  spec.alpha = 0.5;
  auto l = make_model(spec);
  ExpansionConfig c = base_config(*l, 1000);
  GammaSeries g = gamma_fraction(*l, c, 2000, 4, 2);
  CHECK(g.fraction.points.front().value > g.fraction.points.back().value);
  for (std::size_t k = 1; k < g.fraction.size(); ++k)
    CHECK(g.fraction.points[k].value <= g.fraction.points[k - 1].value);
  CHECK(g.fraction.points[99].value > 0);

  // Thread count does not change the result.
  GammaSeries g1 = gamma_fraction(*l, c, 2000, 4, 1);
  for (std::size_t k = 0; k < g.fraction.size(); ++k) CHECK(g.fraction.points[k].value == g1.fraction.points[k].value);
}

TEST_CASE("Gamma_n membership matches the definition point by point") {
  ModelSpec spec{"lsv"};
  spec.alpha = 0.5;
  auto l = make_model(spec);
  ExpansionConfig c = base_config(*l, 1000);
  const std::size_t sample = 300;
  GammaSeries g = gamma_fraction(*l, c, sample, 8);
  // Recount from the individual orbits with the same sub-seeds.
  std::vector<std::size_t> count(c.horizon + 1, 0);
  for (std::size_t i = 0; i < sample; ++i) {
    Rng rng = make_rng(8, 0x6a11, i);
    Point x = l->sample(rng);
    OrbitRecord o = compute_orbit(*l, c, x, substream(8, 0x6a11 + 1, i));
    auto e = expansion_time(o, c);
    auto r = recurrence_time(o, c);
    for (std::size_t n = 1; n <= c.horizon; ++n)
      if (!e || !r || *e > n || *r > n) ++count[n];
  }
  for (std::size_t n = 1; n <= c.horizon; ++n)
    CHECK(g.fraction.points[n - 1].value == doctest::Approx(double(count[n]) / sample));
}

TEST_CASE("theta density") {
  auto d = make_interval_map({"doubling"});
  ExpansionConfig cd = base_config(*d, 1000);
  IntervalSet base = IntervalSet::of(Arc::circle(0.2, 0.3));
  CHECK(theta_density(*d, cd, base, 100, 1000, 2) == 1.0);

  ModelSpec spec{"lsv"};
  spec.alpha = 0.5;
  auto l = make_interval_map(spec);
  ExpansionConfig cl = base_config(*l, 1000);
  double theta = theta_density(*l, cl, IntervalSet::of(Arc::circle(0.55, 0.65)), 1000, 1000, 2);
  CHECK(theta > 0);

  CHECK_THROWS_AS(theta_density(*l, cl, IntervalSet(Ambient::circle), 100, 1000, 2), NumericalError);
  // Every sampled point lies in Gamma_n when n is tiny and the threshold unreachable.
  ExpansionConfig strict = cl;
  strict.expansion_threshold = 2.0;
  CHECK_THROWS_AS(theta_density(*l, strict, base, 10, 1000, 2), NumericalError);
}

TEST_CASE("config validation names the violated constraint") {
  auto g = make_model({"gauss"});
  ExpansionConfig c = base_config(*g, 1000);
  CHECK_NOTHROW(c.validate(*g));
  c.b = 0.2;  // above 1/(4 beta) = 1/8
  try {
    c.validate(*g);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.constraint() == "b_exponent_bound");
  }
  c = base_config(*g, 1000);
  c.sigma = 1.0;
  CHECK_THROWS_AS(c.validate(*g), ConfigError);
}

TEST_CASE("default configuration") {
  auto g = make_model({"gauss"});
  ExpansionConfig c = default_expansion_config(*g, 1000, 3);
  CHECK(c.delta_rec > 0);
  CHECK(c.delta_rec <= 0.1);
  CHECK(c.eps_rec == doctest::Approx(g->lambda() / 20));
  CHECK_NOTHROW(c.validate(*g));
}

TEST_CASE("Viana strip orbits have decaying Gamma_n") {
  auto v = make_model({"viana"});
  ExpansionConfig c = base_config(*v, 1000);
  GammaSeries g = gamma_fraction(*v, c, 500, 3);
  CHECK(g.fraction.points.back().value <= g.fraction.points.front().value);
}
