#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ergolab/decay_lab.hpp"
#include "ergolab/expansion_stats.hpp"

using namespace ergolab;

namespace {
StatSeries synthetic(double (*f)(double), int n_lo, int n_hi) {
  StatSeries s;
  for (int n = n_lo; n <= n_hi; ++n) s.add(n, f(n), 0);
  return s;
}

struct DiagRun {
  TowerRun run;
  DecayDiagnostics diag;
};

DiagRun doubling_diagnostics(double delta0) {
  DoublingMap d;
  ExpansionConfig c = default_expansion_config(d, 1000, 3);
  c.sigma = std::pow(2.0, -0.25);
  TowerConfig cfg;
  cfg.n_max = 60;
  cfg.seeds = 4000;
  cfg.r0 = 12;
  cfg.delta0 = delta0;
  cfg.exact_view = false;
  DiagRun out;
  out.run = run_tower(d, c, cfg);
  std::vector<double> gamma_leb(cfg.n_max + 1, 0.0);
  gamma_leb[0] = 1;
  DiagnosticsConfig dc;
  dc.theta = 1;
  out.diag = decay_diagnostics(out.run, gamma_leb, dc);
  return out;
}
}  // namespace

TEST_CASE("polynomial tail fit recovers the exponent") {
  StatSeries s = synthetic([](double n) { return 7 / (n * n); }, 10, 1000);
  TailFit f = tail_fit(s, TailFamily::polynomial);
  CHECK(f.rate == doctest::Approx(2.0).epsilon(0.005));
  CHECK(f.amplitude == doctest::Approx(7.0).epsilon(1e-6));
  CHECK(f.r2 > 0.9999);
  CHECK(f.rate_lo <= f.rate);
  CHECK(f.rate <= f.rate_hi);
  CHECK(f.points == 991);
  CHECK(best_tail_fit(s).family == TailFamily::polynomial);

  TailFit window = tail_fit(s, TailFamily::polynomial, 100, 200);
  CHECK(window.points == 101);
  CHECK(window.n_lo == 100);
  CHECK(window.n_hi == 200);
}

TEST_CASE("exponential tail fit recovers the ratio") {
  StatSeries s = synthetic([](double n) { return std::pow(0.5, n); }, 1, 40);
  TailFit f = tail_fit(s, TailFamily::exponential);
  CHECK(f.rate == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(f.r2 > 0.9999);
  TailFit best = best_tail_fit(s);
  CHECK(best.family == TailFamily::exponential);
  CHECK(best.r2 - tail_fit(s, TailFamily::polynomial).r2 >= 0.01);
}

TEST_CASE("stretched exponential tail fit") {
  StatSeries s = synthetic([](double n) { return 3 * std::exp(-0.7 * std::sqrt(n)); }, 1, 400);
  TailFit f = tail_fit(s, TailFamily::stretched);
  CHECK(f.rate == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(f.amplitude == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(best_tail_fit(s).family == TailFamily::stretched);
}

TEST_CASE("too few points to fit") {
  StatSeries s = synthetic([](double n) { return 1 / n; }, 1, 9);
  CHECK_THROWS_AS(tail_fit(s, TailFamily::polynomial), NotFittable);
  StatSeries zeros = synthetic([](double) { return 0.0; }, 1, 50);
  CHECK_THROWS_AS(tail_fit(zeros, TailFamily::exponential), NotFittable);
  CHECK(tail_family_from_string("stretched") == TailFamily::stretched);
  CHECK(std::string(to_string(TailFamily::exponential)) == "exponential");
  CHECK_THROWS(tail_family_from_string("gaussian"));
}

TEST_CASE("dyadic oracle and quadrature agree") {
  for (std::size_t n = 0; n <= 10; ++n) {
    const double exact = std::ldexp(1.0, -static_cast<int>(n)) / 12;
    CHECK(dyadic_correlation_oracle(n) == doctest::Approx(exact).epsilon(1e-12));
    CHECK(dyadic_correlation_quadrature(n) == doctest::Approx(exact).epsilon(1e-6));
  }
}

TEST_CASE("doubling correlations") {
  DoublingMap d;
  Observable id = [](const Point& p) { return p[0]; };
  CorrelationConfig cfg;
  cfg.n_max = 6;
  cfg.sample = 100000;
  cfg.seed = 5;
  CorrelationResult r = correlation(d, id, id, cfg);
  REQUIRE(r.signed_c.size() == 7);
  CHECK(r.signed_c[0] == doctest::Approx(1.0 / 12).epsilon(0.02));
  CHECK(r.mean_phi == doctest::Approx(0.5).epsilon(0.01));
  for (std::size_t n = 1; n <= 6; ++n) {
    const double err = r.c.points[n].error;
    CHECK(err > 0);
    CHECK(std::fabs(r.signed_c[n] - dyadic_correlation_oracle(n)) < 4 * err);
  }

  // cos(2 pi x) has no correlation with its doubling image.
  Observable cosine = [](const Point& p) { return std::cos(2 * M_PI * p[0]); };
  CorrelationResult z = correlation(d, cosine, cosine, cfg);
  CHECK(z.signed_c[0] == doctest::Approx(0.5).epsilon(0.02));
  for (std::size_t n = 1; n <= 6; ++n) CHECK(std::fabs(z.signed_c[n]) < 4 * z.c.points[n].error + 1e-4);

  CorrelationResult again = correlation(d, id, id, cfg);
  CHECK(again.signed_c == r.signed_c);
  cfg.threads = 3;
  CHECK(correlation(d, id, id, cfg).signed_c == r.signed_c);
}

TEST_CASE("CLT on the doubling map") {
  DoublingMap d;
  CltConfig cfg;
  cfg.n = 200;
  cfg.sample = 4000;
  cfg.gk_sample = 50000;
  cfg.gk_lags = 30;
  CltReport r = clt_check(d, [](const Point& p) { return p[0] - 0.5; }, cfg);
  CHECK_FALSE(r.coboundary);
  CHECK(r.sigma2 == doctest::Approx(0.25).epsilon(0.1));
  CHECK(r.gk_terms >= 2);
  CHECK(r.ks < 0.05);

  CltReport flat = clt_check(d, [](const Point&) { return 1.0; }, cfg);
  CHECK(flat.coboundary);
}

TEST_CASE("KS distance") {
  CHECK(ks_distance_normal({0.0}, 1) == doctest::Approx(0.5));
  CHECK(ks_distance_normal({-10, 10}, 1) == doctest::Approx(0.5));
}

TEST_CASE("Gauss Lyapunov exponent") {
  const double exact = M_PI * M_PI / (6 * std::log(2.0));
  CHECK(gauss_lyapunov_quadrature() == doctest::Approx(exact).epsilon(1e-7));
  auto g = make_interval_map(ModelSpec{"gauss"});
  Observable lg = [&](const Point& p) { return std::log(g->deriv_norm_inv(p)); };
  BirkhoffResult b = birkhoff_average(*g, lg, 100, 5000, 100, 2);
  CHECK(b.orbits == 100);
  CHECK(b.mean == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("diagnostics on the doubling tower") {
  DiagRun full = doubling_diagnostics(0.01);
  const DecayDiagnostics& d = full.diag;
  REQUIRE(d.rows.size() == 60);
  CHECK(d.e_count == 0);
  CHECK(d.f_count == 0);
  CHECK(d.b1_c1_ok());
  CHECK(std::isfinite(d.c2_hat));
  for (const auto& row : d.rows) {
    CHECK(row.leb_a + row.leb_b == doctest::Approx(row.leb_delta).epsilon(1e-12));
    if (row.c2 >= 0) CHECK(row.leb_delta <= d.c2_hat * d.rows[row.n].leb_delta * (1 + 1e-12));
  }

  DiagRun half = doubling_diagnostics(0.005);
  CHECK(half.diag.a0_hat < d.a0_hat);
  CHECK(half.diag.b1_hat < d.b1_hat);
  CHECK(half.diag.c1_hat < d.c1_hat);

  std::ostringstream csv;
  write_diagnostics_csv(csv, d, {{"model", "doubling"}, {"seed", "1"}});
  CHECK(csv.str().find("# seed=1") != std::string::npos);
  CHECK(csv.str().find("n,leb_A,leb_B,leb_Delta") != std::string::npos);

  StatSeries tail = return_tail_series(full.run);
  REQUIRE(tail.size() > 0);
  for (std::size_t i = 1; i < tail.size(); ++i) CHECK(tail.points[i].value <= tail.points[i - 1].value);

  CHECK_THROWS_AS(decay_diagnostics(full.run, std::vector<double>(10, 0.0), DiagnosticsConfig{1.8, 1, 200}),
                  IncompleteHistory);
}
