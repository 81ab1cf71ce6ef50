// Acceptance run: one PASS/FAIL line per criterion.  Exits nonzero only when
// a criterion could not be evaluated at all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ergolab/decay_lab.hpp"
#include "ergolab/expansion_stats.hpp"
#include "ergolab/induced_map.hpp"
#include "ergolab/io.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/preballs.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/tower_builder.hpp"

using namespace ergolab;

namespace {

constexpr std::uint64_t kSeed = 20240601;
constexpr std::uint64_t kOracleTag = 0x0ac1;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Line {
  int id;
  bool pass;
  std::string detail;
  bool gating = true;
};

std::vector<Line> lines;
std::ostream* report = nullptr;

void emit(int id, bool pass, const std::string& detail, bool gating = true) {
  lines.push_back({id, pass, detail, gating});
  std::ostringstream os;
  os << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << (gating ? "" : " (non-gating)") << "  " << detail;
  std::cout << os.str() << std::endl;
  if (report) *report << os.str() << '\n' << std::flush;
}

struct Model {
  std::unique_ptr<IntervalMap> map;
  ExpansionConfig expansion;
};

Model model(const std::string& name, double alpha = 0.5, std::size_t horizon = 1000) {
  ModelSpec spec;
  spec.name = name;
  spec.alpha = alpha;
  Model m{make_interval_map(spec), {}};
  m.expansion = default_expansion_config(*m.map, horizon, kSeed);
  if (name == "doubling") m.expansion.sigma = std::pow(2.0, -0.25);
  return m;
}

TowerConfig tower_config(std::size_t r0, std::size_t n_max, std::size_t seeds, double delta0 = 0.01) {
  TowerConfig c;
  c.delta0 = delta0;
  c.delta1 = 0.05;
  c.r0 = r0;
  c.n_max = n_max;
  c.seeds = seeds;
  c.seed = kSeed;
  return c;
}

// Largest |Leb(Delta_0) - sum_{j<=n} Leb(R=j) - Leb(Delta_n)| over n.
double conservation_gap(const TowerRun& run) {
  const double base = run.base_measure();
  double returned = 0, worst = 0;
  for (const StepRecord& s : run.steps) {
    returned += s.exact_r_eq_n;
    worst = std::max(worst, std::fabs(base - returned - s.exact_delta));
  }
  return worst;
}

std::size_t collar_failures(const TowerRun& run) {
  std::size_t bad = 0;
  for (const CollarReport& r : run.collar) bad += !r.pass;
  for (const StepRecord& s : run.steps) bad += s.collar_violations + s.exact_collar_failures;
  return bad;
}

struct Named {
  std::string name;
  TowerRun run;
};

std::vector<Named> tower_runs;  // every run built here, for the collar criterion

DecayDiagnostics diagnostics(const Model& m, const TowerRun& run, const GammaSeries* gamma) {
  const std::size_t n_max = run.config.n_max;
  ExpansionConfig c = m.expansion;
  c.horizon = std::max(c.horizon, n_max);
  GammaSeries local;
  if (!gamma || gamma->fraction.size() < n_max) {
    local = gamma_fraction(*m.map, c, 10000, kSeed, threads());
    gamma = &local;
  }
  std::vector<double> gl(n_max + 1, 1.0);
  for (std::size_t n = 1; n <= n_max; ++n) gl[n] = gamma->fraction.points[n - 1].value;
  const IntervalSet base = IntervalSet::of(Arc::ball(run.base.ambient, run.base.p, run.base.delta0));
  DiagnosticsConfig dc;
  dc.theta = theta_density(*m.map, c, base, n_max, 2000, kSeed, threads());
  return decay_diagnostics(run, gl, dc);
}

// ------------------------------------------------------------------ criteria

TowerRun doubling_run;

void criterion_1() {
  Model m = model("doubling");
  const auto t0 = Clock::now();
  doubling_run = run_tower(*m.map, m.expansion, tower_config(12, 60, 20000), 1);
  InducedMap im(*m.map, doubling_run, 101, 1);
  MarkovReport mk = verify_markov(im, 1e-9);
  double log_lambda = -1;
  try {
    log_lambda = verify_expansion(im).log_lambda_hat;
  } catch (const ExpansionFailure&) {
  }
  DistortionReport dr = verify_distortion(im, 2000, kSeed);
  const double secs = seconds_since(t0);
  tower_runs.push_back({"doubling", doubling_run});

  const double left = doubling_run.steps.back().exact_delta / doubling_run.base_measure();
  const double sampled_left = doubling_run.sampled_delta(60) / doubling_run.base_measure();
  const bool pass = doubling_run.base.p == 0 && left < 1e-3 && mk.pass() && log_lambda >= std::log(2.0) &&
                    dr.b_tilde == 0.0 && secs < 60;
  emit(1, pass,
       "p=" + num(static_cast<double>(doubling_run.base.p)) + " unpartitioned fraction " + num(left) + " recorded, " +
           num(sampled_left) + " sampled (need < 1e-3); markov " + std::to_string(mk.passed) + "/" + std::to_string(mk.elements) +
           "; lambda_hat 2^" + num(log_lambda / std::log(2.0)) + "; B_tilde " + num(dr.b_tilde) + "; " +
           num(secs, 3) + " s");
}

void criterion_2() {
  double worst = conservation_gap(doubling_run);
  std::string detail = "doubling " + num(worst, 2);
  struct Case {
    std::string name;
    double alpha;
    std::size_t r0, n_max;
  };
  for (const Case& c : {Case{"lsv", 0.3, 12, 200}, Case{"lsv", 0.5, 12, 200}, Case{"lsv", 0.8, 12, 200},
                        Case{"gauss", 0.5, 3, 60}}) {
    Model m = model(c.name, c.alpha);
    TowerRun run = run_tower(*m.map, m.expansion, tower_config(c.r0, c.n_max, 2000), threads());
    const double gap = conservation_gap(run);
    worst = std::max(worst, gap);
    const std::string label = c.name == "lsv" ? "lsv(" + num(c.alpha) + ")" : c.name;
    detail += "; " + label + " " + num(gap, 2);
    tower_runs.push_back({label, std::move(run)});
  }
  emit(2, worst <= 1e-12, "max conservation gap over all steps: " + detail);
}

void criterion_3() {
  std::string detail;
  std::size_t total = 0;
  struct Case {
    std::string name;
    double alpha;
  };
  for (const Case& c : {Case{"doubling", 0.5}, Case{"lsv", 0.3}, Case{"lsv", 0.5}, Case{"lsv", 0.8},
                        Case{"gauss", 0.5}}) {
    Model m = model(c.name, c.alpha);
    std::vector<std::size_t> mismatches(1000, 0);
    std::vector<char> singular(1000, 0);
    parallel_chunks(1000, 25, threads(), [&](const ChunkRange& cr) {
      for (std::size_t i = cr.begin; i < cr.end; ++i) {
        Rng rng = make_rng(kSeed, kOracleTag, i);
        const Point x = m.map->sample(rng);
        try {
          OrbitRecord orbit = compute_orbit(*m.map, m.expansion, x, substream(kSeed, kOracleTag + 1, i));
          const auto fast = hyperbolic_times(orbit, m.expansion).times;
          const auto slow = hyperbolic_times_oracle(*m.map, orbit, m.expansion).times;
          std::vector<std::size_t> diff;
          std::set_symmetric_difference(fast.begin(), fast.end(), slow.begin(), slow.end(), std::back_inserter(diff));
          mismatches[i] = diff.size();
        } catch (const SingularPoint&) {
          singular[i] = 1;
        }
      }
    });
    std::size_t bad = 0, skipped = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
      bad += mismatches[i];
      skipped += singular[i];
    }
    total += bad;
    detail += (detail.empty() ? "" : "; ") + (c.name == "lsv" ? "lsv(" + num(c.alpha) + ")" : c.name) + " " +
              std::to_string(bad) + (skipped ? " (" + std::to_string(skipped) + " singular)" : "");
  }
  emit(3, total == 0, "discrepancies over 1000 points x horizon 1000: " + detail);
}

GammaSeries lsv_gamma;
TowerRun lsv_run;

void criterion_4() {
  const auto t0 = Clock::now();
  Model g = model("lsv", 0.5, 10000);
  lsv_gamma = gamma_fraction(*g.map, g.expansion, 100000, kSeed, threads());
  Model m = model("lsv", 0.5);
  lsv_run = run_tower(*m.map, m.expansion, tower_config(12, 2000, 20000), threads());
  const double secs = seconds_since(t0);
  tower_runs.push_back({"lsv(0.5) n_max 2000", lsv_run});

  std::string detail;
  bool pass = secs < 15 * 60;
  try {
    const TailFit fg = tail_fit(lsv_gamma.fraction, TailFamily::polynomial, 50, 2000);
    const TailFit fr = tail_fit(return_tail_series(lsv_run), TailFamily::polynomial, 50, 2000);
    pass = pass && fg.rate >= 1.5 && fg.rate <= 2.5 && fr.rate >= fg.rate - 0.5;
    detail = "gamma_Gamma " + num(fg.rate) + " (need [1.5, 2.5], R^2 " + num(fg.r2, 3) + "); gamma_R " + num(fr.rate) +
             " (R^2 " + num(fr.r2, 3) + ", need >= gamma_Gamma - 0.5)";
  } catch (const NotFittable& e) {
    pass = false;
    detail = e.what();
  }
  emit(4, pass, detail + "; " + num(secs, 3) + " s");
}

void criterion_5() {
  // Target first, from the digit expansion, cross-checked by quadrature.
  std::vector<double> target(11);
  double quad_gap = 0;
  for (std::size_t n = 0; n <= 10; ++n) {
    target[n] = dyadic_correlation_oracle(n);
    quad_gap = std::max(quad_gap, std::fabs(dyadic_correlation_quadrature(n) - target[n]) / target[n]);
  }
  DoublingMap d;
  CorrelationConfig cfg;
  cfg.n_max = 10;
  cfg.sample = 1000000;
  cfg.seed = kSeed;
  cfg.threads = threads();
  const Observable id = [](const Point& p) { return p[0]; };
  CorrelationResult r = correlation(d, id, id, cfg);
  double worst_z = 0;
  for (std::size_t n = 1; n <= 10; ++n)
    worst_z = std::max(worst_z, std::fabs(r.signed_c[n] - target[n]) / r.c.points[n].error);
  emit(5, worst_z <= 3 && quad_gap < 1e-6,
       "max |C_n - 2^-n/12| / stderr over n=1..10: " + num(worst_z, 3) + "; oracle vs quadrature " + num(quad_gap, 2));
}

void criterion_6() {
  LsvMap lsv(0.5);
  CorrelationConfig cfg;
  cfg.n_max = 300;
  cfg.sample = 100000;
  cfg.seed = kSeed;
  cfg.threads = threads();
  const Observable id = [](const Point& p) { return p[0]; };
  CorrelationResult r = correlation(lsv, id, id, cfg);
  try {
    const TailFit f = tail_fit(r.c, TailFamily::polynomial, 10, 300);
    emit(6, f.rate >= 0.5 && f.rate <= 1.5,
         "exponent " + num(f.rate) + " [" + num(f.rate_lo) + ", " + num(f.rate_hi) + "], R^2 " + num(f.r2, 3));
  } catch (const NotFittable& e) {
    emit(6, false, e.what());
  }
}

void criterion_7() {
  // sigma^2 = C_0 + 2 sum C_n with C_n from the dyadic oracle (centring does not change covariances).
  double target = dyadic_correlation_oracle(0);
  for (std::size_t n = 1; n <= 60; ++n) target += 2 * dyadic_correlation_oracle(n);
  DoublingMap d;
  CltConfig cfg;
  cfg.n = 2000;
  cfg.sample = 20000;
  cfg.seed = kSeed;
  cfg.threads = threads();
  CltReport r = clt_check(d, [](const Point& p) { return p[0] - 0.5; }, cfg);
  const double rel = std::fabs(r.sigma2 - target) / target;
  emit(7, rel <= 0.1 && r.ks < 0.05 && !r.coboundary,
       "sigma^2 " + num(r.sigma2) + " vs " + num(target) + " (rel " + num(rel, 2) + "); KS " + num(r.ks, 3));
}

void criterion_8() {
  std::size_t bad = 0;
  std::string names;
  for (const Named& t : tower_runs) {
    const std::size_t f = collar_failures(t.run);
    bad += f;
    if (f) names += " " + t.name;
  }
  Model m = model("lsv", 0.5);
  TowerConfig cfg = tower_config(12, 400, 4000);
  const BaseGeometry g = make_base_geometry(*m.map, cfg.delta0, cfg.delta1);
  cfg.eps = 10 * collar_epsilon_bound(g, m.expansion.sigma);
  cfg.allow_eps_above_bound = true;
  TowerRun control = run_tower(*m.map, m.expansion, cfg, threads());
  const std::size_t control_violations = collar_failures(control);
  emit(8, bad == 0 && control_violations > 0,
       std::to_string(tower_runs.size()) + " runs below the bound: " + std::to_string(bad) + " violations" + names +
           "; negative control eps=" + num(control.eps, 3) + " (10x bound): " + std::to_string(control_violations) +
           " violations (need >= 1)");
}

void criterion_9() {
  struct Case {
    std::string name;
    const TowerRun* run;
    std::size_t r0, n_max, seeds;
  };
  Model gm = model("gauss");
  TowerRun gauss_run = run_tower(*gm.map, gm.expansion, tower_config(3, 60, 20000), threads());
  const std::vector<Case> cases{{"doubling", &doubling_run, 12, 60, 20000},
                                {"lsv(0.5)", &lsv_run, 12, 2000, 20000},
                                {"gauss", &gauss_run, 3, 60, 20000}};
  bool pass = true;
  std::string detail;
  for (const Case& c : cases) {
    Model m = model(c.name == "lsv(0.5)" ? "lsv" : c.name, 0.5);
    const GammaSeries* gamma = c.name == "lsv(0.5)" ? &lsv_gamma : nullptr;
    const DecayDiagnostics full = diagnostics(m, *c.run, gamma);
    bool c2_ok = std::isfinite(full.c2_hat) && full.c2_hat > 0;
    for (std::size_t i = 0; i + 1 < full.rows.size(); ++i)
      if (full.rows[i].c2 >= 0 && full.rows[i].leb_delta > full.c2_hat * full.rows[i + 1].leb_delta * (1 + 1e-12))
        c2_ok = false;

    TowerConfig half = tower_config(c.r0, c.n_max, c.seeds, c.run->config.delta0 / 2);
    half.exact_view = false;
    const TowerRun rerun = run_tower(*m.map, m.expansion, half, threads());
    const DecayDiagnostics h = diagnostics(m, rerun, gamma);
    const bool dec = h.a0_hat < full.a0_hat && h.b1_hat < full.b1_hat && h.c1_hat < full.c1_hat;
    const bool ok = full.b1_c1_ok() && c2_ok && dec;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + c.name + (ok ? " ok" : " FAIL") + " [b1+c1 " +
              num(full.b1_hat + full.c1_hat, 3) + ", c2 " + num(full.c2_hat, 4) + ", a0 " + num(full.a0_hat, 3) +
              "->" + num(h.a0_hat, 3) + ", b1 " + num(full.b1_hat, 3) + "->" + num(h.b1_hat, 3) + ", c1 " +
              num(full.c1_hat, 3) + "->" + num(h.c1_hat, 3) + "]";
    tower_runs.push_back({c.name + " delta0/2", rerun});
  }
  tower_runs.push_back({"gauss", std::move(gauss_run)});
  emit(9, pass, detail);
}

void criterion_10() {
  const double exact = std::numbers::pi * std::numbers::pi / (6 * std::numbers::ln2);
  const double quad = gauss_lyapunov_quadrature();
  auto g = make_interval_map(ModelSpec{"gauss"});
  const Observable log_slope = [&](const Point& p) { return std::log(g->deriv_norm_inv(p)); };
  const BirkhoffResult b = birkhoff_average(*g, log_slope, 1000, 10000, 1000, kSeed, threads());
  const double rel = std::fabs(b.mean - quad) / quad;
  emit(10, std::fabs(quad - exact) < 1e-6 && rel <= 0.01,
       "Birkhoff " + num(b.mean, 6) + " +/- " + num(b.stderr, 2) + " vs quadrature " + num(quad, 8) + " (rel " +
           num(rel, 2) + ")");
}

void criterion_11() {
  ModelSpec spec;
  spec.name = "viana";
  auto v = make_model(spec);
  const ExpansionConfig c = default_expansion_config(*v, 1000, kSeed);
  const GammaSeries g = gamma_fraction(*v, c, 10000, kSeed, threads());
  bool monotone = true;
  for (std::size_t i = 1; i < g.fraction.size(); ++i)
    monotone = monotone && g.fraction.points[i].value <= g.fraction.points[i - 1].value;
  try {
    const TailFit f = tail_fit(g.fraction, TailFamily::stretched);
    emit(11, monotone && f.r2 >= 0.9,
         std::string("non-increasing ") + (monotone ? "yes" : "no") + "; stretched fit c " + num(f.rate) + ", R^2 " +
             num(f.r2, 3) + " over " + std::to_string(f.points) + " points",
         false);
  } catch (const NotFittable& e) {
    emit(11, false, std::string("non-increasing ") + (monotone ? "yes" : "no") + "; " + e.what(), false);
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::ofstream file;
  if (argc > 1) {
    file.open(argv[1]);
    report = &file;
  }
  const std::vector<std::function<void()>> steps{criterion_1, criterion_2, criterion_3, criterion_4,
                                                 criterion_5, criterion_6, criterion_7, criterion_8,
                                                 criterion_9, criterion_10, criterion_11};
  int errors = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto t0 = Clock::now();
    try {
      steps[i]();
    } catch (const std::exception& e) {
      ++errors;
      emit(static_cast<int>(i + 1), false, std::string("not evaluated: ") + e.what());
    }
    std::cerr << "  [criterion " << i + 1 << " took " << num(seconds_since(t0), 3) << " s]\n";
  }
  std::size_t passed = 0, gating = 0;
  for (const Line& l : lines)
    if (l.gating) {
      ++gating;
      passed += l.pass;
    }
  std::cout << passed << "/" << gating << " gating criteria pass\n";
  if (report) *report << passed << "/" << gating << " gating criteria pass\n";
  return errors == 0 ? 0 : 1;
}
