#include "ergolab/decay_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ergolab/io.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

namespace {

constexpr std::uint64_t kCorrTag = 0xc022;
constexpr std::uint64_t kCltTag = 0xc170;
constexpr std::uint64_t kBirkhoffTag = 0xb14c;

// Orbit of a Lebesgue-random start; a start whose orbit hits the singular
// set is redrawn from the same generator.
void sample_orbit(const MapModel& m, std::uint64_t seed, std::uint64_t tag, std::size_t i, std::size_t len,
                  std::vector<Point>& out) {
  Rng rng = make_rng(seed, tag, i);
  for (std::uint64_t attempt = 0;; ++attempt) {
    const Point x = m.sample(rng);
    try {
      m.trajectory(x, len, substream(seed, tag + 1, i) + attempt, out);
      return;
    } catch (const SingularPoint&) {
      if (attempt > 1000) throw;
    }
  }
}

// Two-sided 97.5% Student-t quantile (Cornish-Fisher expansion around 1.96).
double t975(double df) {
  const double z = 1.959963984540054;
  const double z3 = z * z * z, z5 = z3 * z * z, z7 = z5 * z * z;
  return z + (z3 + z) / (4 * df) + (5 * z5 + 16 * z3 + 3 * z) / (96 * df * df) +
         (3 * z7 + 19 * z5 + 17 * z3 - 15 * z) / (384 * df * df * df);
}

double normal_cdf(double x, double var) { return 0.5 * std::erfc(-x / std::sqrt(2 * var)); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double mu = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / (v.size() - 1) / v.size());
}

}  // namespace

// ---------------------------------------------------------------- tail fits

const char* to_string(TailFamily f) {
  switch (f) {
    case TailFamily::polynomial: return "polynomial";
    case TailFamily::exponential: return "exponential";
    case TailFamily::stretched: return "stretched";
  }
  return "?";
}

TailFamily tail_family_from_string(const std::string& s) {
  if (s == "polynomial") return TailFamily::polynomial;
  if (s == "exponential") return TailFamily::exponential;
  if (s == "stretched") return TailFamily::stretched;
  throw ConfigError("tail_family", "unknown family '" + s + "' (polynomial, exponential, stretched)");
}

TailFit tail_fit(const StatSeries& s, TailFamily family, double n_lo, double n_hi) {
  std::vector<double> xs, ys;
  for (const auto& p : s.points) {
    if (p.n < n_lo || p.n > n_hi || !(p.value > 0) || !(p.n > 0)) continue;
    switch (family) {
      case TailFamily::polynomial: xs.push_back(std::log(p.n)); break;
      case TailFamily::exponential: xs.push_back(p.n); break;
      case TailFamily::stretched: xs.push_back(std::sqrt(p.n)); break;
    }
    ys.push_back(std::log(p.value));
  }
  const std::size_t k = xs.size();
  if (k < 10) throw NotFittable("tail_fit: " + std::to_string(k) + " positive points in window, need 10");
  const double mx = mean_of(xs), my = mean_of(ys);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0)) throw NotFittable("tail_fit: window has a single abscissa");
  TailFit f;
  f.family = family;
  f.points = k;
  f.slope = sxy / sxx;
  const double icpt = my - f.slope * mx;
  const double sse = std::max(0.0, syy - f.slope * sxy);
  f.r2 = syy > 0 ? 1 - sse / syy : 1;
  f.slope_stderr = std::sqrt(sse / (k - 2) / sxx);
  f.n_lo = std::max(n_lo, s.points.front().n);
  f.n_hi = std::min(n_hi, s.points.back().n);
  f.amplitude = std::exp(icpt);
  const double half = t975(static_cast<double>(k - 2)) * f.slope_stderr;
  switch (family) {
    case TailFamily::polynomial:
    case TailFamily::stretched:
      f.rate = -f.slope;
      f.rate_lo = -f.slope - half;
      f.rate_hi = -f.slope + half;
      break;
    case TailFamily::exponential:
      f.rate = std::exp(f.slope);
      f.rate_lo = std::exp(f.slope - half);
      f.rate_hi = std::exp(f.slope + half);
      break;
  }
  return f;
}

TailFit best_tail_fit(const StatSeries& s, double n_lo, double n_hi) {
  TailFit best = tail_fit(s, TailFamily::polynomial, n_lo, n_hi);
  for (TailFamily f : {TailFamily::exponential, TailFamily::stretched}) {
    TailFit t = tail_fit(s, f, n_lo, n_hi);
    if (t.r2 > best.r2) best = t;
  }
  return best;
}

// ------------------------------------------------------------- correlations

CorrelationResult correlation(const MapModel& m, const Observable& phi, const Observable& psi,
                              const CorrelationConfig& cfg) {
  if (cfg.batches < 2 || cfg.sample < cfg.batches)
    throw ConfigError("correlation_batches", "need at least 2 batches and one point per batch");
  const std::size_t L = cfg.n_max + 1;
  struct Acc {
    std::vector<double> phi, prod;
    double psi = 0;
    std::size_t count = 0;
  };
  std::vector<Acc> acc(cfg.batches, Acc{std::vector<double>(L, 0.0), std::vector<double>(L, 0.0), 0.0, 0});
  parallel_chunks(cfg.batches, 1, cfg.threads, [&](const ChunkRange& r) {
    std::vector<Point> orbit;
    for (std::size_t b = r.begin; b < r.end; ++b) {
      Acc& a = acc[b];
      const std::size_t lo = b * cfg.sample / cfg.batches, hi = (b + 1) * cfg.sample / cfg.batches;
      for (std::size_t i = lo; i < hi; ++i) {
        sample_orbit(m, cfg.seed, kCorrTag, i, cfg.burn_in + cfg.n_max, orbit);
        const double p0 = psi(orbit[cfg.burn_in]);
        a.psi += p0;
        for (std::size_t n = 0; n < L; ++n) {
          const double v = phi(orbit[cfg.burn_in + n]);
          a.phi[n] += v;
          a.prod[n] += v * p0;
        }
        ++a.count;
      }
    }
  });
  auto cov = [&](const std::vector<double>& sphi, const std::vector<double>& sprod, double spsi, double cnt,
                 std::size_t n) { return sprod[n] / cnt - (sphi[n] / cnt) * (spsi / cnt); };

  CorrelationResult res;
  res.c.model = m.name();
  res.c.seed = cfg.seed;
  Acc tot{std::vector<double>(L, 0.0), std::vector<double>(L, 0.0), 0.0, 0};
  for (const Acc& a : acc) {
    for (std::size_t n = 0; n < L; ++n) {
      tot.phi[n] += a.phi[n];
      tot.prod[n] += a.prod[n];
    }
    tot.psi += a.psi;
    tot.count += a.count;
  }
  res.batch_c.assign(cfg.batches, std::vector<double>(L, 0.0));
  for (std::size_t b = 0; b < cfg.batches; ++b)
    for (std::size_t n = 0; n < L; ++n)
      res.batch_c[b][n] = cov(acc[b].phi, acc[b].prod, acc[b].psi, static_cast<double>(acc[b].count), n);
  res.mean_phi = tot.phi[0] / tot.count;
  res.mean_psi = tot.psi / tot.count;
  res.signed_c.resize(L);
  std::vector<double> col(cfg.batches);
  for (std::size_t n = 0; n < L; ++n) {
    res.signed_c[n] = cov(tot.phi, tot.prod, tot.psi, static_cast<double>(tot.count), n);
    for (std::size_t b = 0; b < cfg.batches; ++b) col[b] = res.batch_c[b][n];
    res.c.add(static_cast<double>(n), std::fabs(res.signed_c[n]), stderr_of(col));
  }
  // Three consecutive sign flips among significant lags.
  int flips = 0;
  for (std::size_t n = 2; n < L; ++n) {
    const bool sig = std::fabs(res.signed_c[n]) > 3 * res.c.points[n].error &&
                     std::fabs(res.signed_c[n - 1]) > 3 * res.c.points[n - 1].error;
    flips = sig && (res.signed_c[n] > 0) != (res.signed_c[n - 1] > 0) ? flips + 1 : 0;
    if (flips >= 3) res.oscillation = true;
  }
  return res;
}

double dyadic_correlation_oracle(std::size_t n, std::size_t digits) {
  // x = sum b_i 2^{-i} with independent fair digits; 2^n x mod 1 = sum b_{i+n} 2^{-i}.
  // Cov = sum_i sum_j 2^{-i} 2^{-j} Cov(b_i, b_{j+n}) = sum_{i>n} 2^{-i} 2^{-(i-n)} / 4.
  long double s = 0;
  for (std::size_t i = n + digits; i > n; --i) s += std::ldexp(0.25L, static_cast<int>(n) - 2 * static_cast<int>(i));
  return static_cast<double>(s);
}

double dyadic_correlation_quadrature(std::size_t n, std::size_t points) {
  long double s = 0;
  const long double h = 1.0L / points;
  for (std::size_t i = 0; i < points; ++i) {
    const long double x = (i + 0.5L) * h;
    long double y = std::ldexp(x, static_cast<int>(n));
    y -= std::floor(y);
    s += x * y;
  }
  return static_cast<double>(s * h - 0.25L);
}

// -------------------------------------------------------------------- CLT

double ks_distance_normal(std::vector<double> values, double var) {
  if (values.empty() || !(var > 0)) return 1;
  std::sort(values.begin(), values.end());
  const double N = static_cast<double>(values.size());
  double d = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double F = normal_cdf(values[i], var);
    d = std::max({d, (i + 1) / N - F, F - i / N});
  }
  return d;
}

CltReport clt_check(const MapModel& m, const Observable& phi, const CltConfig& cfg) {
  CltReport r;
  CorrelationConfig cc;
  cc.n_max = cfg.gk_lags;
  cc.sample = cfg.gk_sample;
  cc.burn_in = cfg.burn_in;
  cc.batches = cfg.batches;
  cc.seed = cfg.seed;
  cc.threads = cfg.threads;
  CorrelationResult c = correlation(m, phi, phi, cc);
  // Keep lags until the first one lost in noise.
  std::size_t K = 1;
  while (K <= cfg.gk_lags && std::fabs(c.signed_c[K]) >= 2 * c.c.points[K].error) ++K;
  r.gk_terms = K;
  r.sigma2 = c.signed_c[0];
  for (std::size_t k = 1; k < K; ++k) r.sigma2 += 2 * c.signed_c[k];
  std::vector<double> per_batch(cfg.batches);
  for (std::size_t b = 0; b < cfg.batches; ++b) {
    double s = c.batch_c[b][0];
    for (std::size_t k = 1; k < K; ++k) s += 2 * c.batch_c[b][k];
    per_batch[b] = s;
  }
  r.sigma2_stderr = stderr_of(per_batch);
  r.coboundary = !(r.sigma2 > 1e-12) || r.sigma2 < 3 * r.sigma2_stderr;

  std::vector<double> sums(cfg.sample);
  parallel_chunks(cfg.sample, 256, cfg.threads, [&](const ChunkRange& ch) {
    std::vector<Point> orbit;
    for (std::size_t i = ch.begin; i < ch.end; ++i) {
      sample_orbit(m, cfg.seed, kCltTag, i, cfg.burn_in + cfg.n, orbit);
      double s = 0;
      for (std::size_t j = 0; j < cfg.n; ++j) s += phi(orbit[cfg.burn_in + j]);
      sums[i] = s;
    }
  });
  r.mean = mean_of(sums) / static_cast<double>(cfg.n);
  const double rn = std::sqrt(static_cast<double>(cfg.n));
  for (double& s : sums) s = (s - r.mean * static_cast<double>(cfg.n)) / rn;
  double ss = 0;
  for (double s : sums) ss += s * s;
  r.empirical_var = ss / static_cast<double>(sums.size() - 1);
  if (!r.coboundary) r.ks = ks_distance_normal(std::move(sums), r.sigma2);
  return r;
}

// -------------------------------------------------------------- Birkhoff

BirkhoffResult birkhoff_average(const MapModel& m, const Observable& g, std::size_t orbits, std::size_t steps,
                                std::size_t burn_in, std::uint64_t seed, unsigned threads) {
  std::vector<double> means(orbits);
  parallel_chunks(orbits, 16, threads, [&](const ChunkRange& ch) {
    std::vector<Point> orbit;
    for (std::size_t i = ch.begin; i < ch.end; ++i) {
      sample_orbit(m, seed, kBirkhoffTag, i, burn_in + steps, orbit);
      double s = 0;
      for (std::size_t j = 0; j < steps; ++j) s += g(orbit[burn_in + j]);
      means[i] = s / static_cast<double>(steps);
    }
  });
  return BirkhoffResult{mean_of(means), stderr_of(means), orbits, steps};
}

double gauss_lyapunov_quadrature() {
  // x = e^{-t}: integrand 2 t e^{-t} / ((1 + e^{-t}) ln 2) on [0, 80].
  const int intervals = 200000;
  const double T = 80, h = T / intervals;
  auto f = [](double t) { return 2 * t * std::exp(-t) / ((1 + std::exp(-t)) * std::log(2.0)); };
  double s = f(0) + f(T);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
  return s * h / 3;
}

// -------------------------------------------------------------- diagnostics

const char* to_string(DescentCase c) {
  switch (c) {
    case DescentCase::none: return "-";
    case DescentCase::exponential: return "I";
    case DescentCase::gamma: return "II";
    case DescentCase::floor: return "III";
  }
  return "?";
}

DecayDiagnostics decay_diagnostics(const TowerRun& run, const std::vector<double>& gamma_leb,
                                   const DiagnosticsConfig& cfg) {
  if (run.steps.size() < 2) throw IncompleteHistory("decay_diagnostics: tower run has no steps");
  const std::size_t n_max = run.steps.size() - 1;
  if (gamma_leb.size() <= n_max)
    throw IncompleteHistory("decay_diagnostics: Leb(Gamma_n) needed for n = 0.." + std::to_string(n_max) + ", got " +
                            std::to_string(gamma_leb.size()) + " values");
  if (!(cfg.theta > 0 && cfg.theta <= 1)) throw ConfigError("theta_range", "theta must lie in (0, 1]");
  if (!(cfg.gamma > 0)) throw ConfigError("gamma_positive", "gamma must be > 0");

  DecayDiagnostics d;
  d.theta = cfg.theta;
  d.gamma = cfg.gamma;
  d.alpha = std::pow(cfg.theta / 12, cfg.gamma + 1);
  const double w = run.base_measure() / static_cast<double>(run.seed_count());
  const auto& st = run.steps;
  const std::size_t r0 = run.config.r0;
  const double big = static_cast<double>(cfg.min_count);

  d.a1_hat = std::numeric_limits<double>::infinity();
  std::size_t e_running = 0;
  double media = 0;
  d.rows.resize(n_max);
  for (std::size_t n = 1; n <= n_max; ++n) {
    DiagnosticRow& row = d.rows[n - 1];
    const StepRecord &cur = st[n], &prev = st[n - 1];
    row.n = n;
    row.leb_a = cur.in_a * w;
    row.leb_b = cur.in_b * w;
    row.leb_delta = cur.alive * w;
    row.leb_gamma = gamma_leb[n];
    if (cur.in_a >= big) row.a_ratio = static_cast<double>(cur.in_b) / cur.in_a;
    if (prev.in_b >= big) row.a1 = static_cast<double>(cur.b_to_a) / prev.in_b;
    if (prev.in_a >= big) {
      row.b1 = static_cast<double>(cur.a_to_b) / prev.in_a;
      row.c1 = static_cast<double>(cur.a_to_r) / prev.in_a;
      row.h = static_cast<double>(cur.a_prev_hyp) / prev.in_a;
    }
    if (n < n_max && st[n + 1].alive >= big) row.c2 = static_cast<double>(cur.alive) / st[n + 1].alive;
    if (row.h >= 0) media += row.h;
    row.media = media;
    row.in_e = row.h >= 0 && row.h < d.alpha;
    e_running += row.in_e;
    row.in_f = static_cast<double>(e_running) / n > 1 - cfg.theta / 12;
    d.e_count += row.in_e;
    d.f_count += row.in_f;
    if (n > r0) {
      d.a0_hat = std::max(d.a0_hat, row.a_ratio);
      if (row.a1 >= 0) d.a1_hat = std::min(d.a1_hat, row.a1);
      d.b1_hat = std::max(d.b1_hat, row.b1);
      d.c1_hat = std::max(d.c1_hat, row.c1);
    }
    d.c2_hat = std::max(d.c2_hat, row.c2);
  }
  if (!std::isfinite(d.a1_hat)) d.a1_hat = 0;
  const double eta = 1 - d.b1_hat - d.c1_hat;
  if (d.a1_hat > 0 && eta > 0) {
    d.a0_formula = ((1 + d.a1_hat) * d.b1_hat + d.c1_hat) / (d.a1_hat * eta);
    if (d.a0_formula > 0) d.c2_formula = (1 + 1 / d.a0_formula) / eta;
  }

  // Descent chains.
  auto leb_a = [&](std::size_t k) { return st[k].in_a * w; };
  for (std::size_t n = 1; n <= n_max; ++n) {
    DiagnosticRow& row = d.rows[n - 1];
    if (!row.in_f || !(row.leb_a > 0) || row.leb_a < 2 * row.leb_gamma) continue;
    ++d.descents;
    std::size_t cur = n, depth = 0;
    DescentCase result = DescentCase::none;
    while (result == DescentCase::none) {
      std::size_t k = 0;
      for (std::size_t j = cur - 1; j >= 1; --j)
        if (leb_a(j) > 0 &&
            leb_a(cur) / leb_a(j) < std::pow(static_cast<double>(j) / static_cast<double>(cur), cfg.gamma)) {
          k = j;
          break;
        }
      if (k == 0) break;
      ++depth;
      if (k <= r0)
        result = DescentCase::floor;
      else if (!d.rows[k - 1].in_f)
        result = DescentCase::exponential;
      else if (leb_a(k) < 2 * gamma_leb[k])
        result = DescentCase::gamma;
      else
        cur = k;
    }
    row.descent = result;
    row.descent_depth = depth;
    if (result == DescentCase::none)
      ++d.descent_failures;
    else
      ++d.cases[static_cast<int>(result)];
  }
  return d;
}

void write_diagnostics_csv(std::ostream& out, const DecayDiagnostics& d, const std::map<std::string, std::string>& meta) {
  auto m = meta;
  m["a0_hat"] = fmt_real(d.a0_hat);
  m["a1_hat"] = fmt_real(d.a1_hat);
  m["b1_hat"] = fmt_real(d.b1_hat);
  m["c1_hat"] = fmt_real(d.c1_hat);
  m["c2_hat"] = fmt_real(d.c2_hat);
  m["alpha"] = fmt_real(d.alpha);
  m["theta"] = fmt_real(d.theta);
  m["gamma"] = fmt_real(d.gamma);
  write_header(out, m);
  out << "n,leb_A,leb_B,leb_Delta,h_n,in_E_n,in_F,a_ratio,a1,b1,c1,c2,media,leb_Gamma,descent,descent_depth\n";
  for (const auto& r : d.rows) {
    out << r.n << ',' << fmt_real(r.leb_a) << ',' << fmt_real(r.leb_b) << ',' << fmt_real(r.leb_delta) << ','
        << fmt_real(r.h) << ',' << (r.in_e ? 1 : 0) << ',' << (r.in_f ? 1 : 0) << ',' << fmt_real(r.a_ratio) << ','
        << fmt_real(r.a1) << ',' << fmt_real(r.b1) << ',' << fmt_real(r.c1) << ',' << fmt_real(r.c2) << ','
        << fmt_real(r.media) << ',' << fmt_real(r.leb_gamma) << ',' << to_string(r.descent) << ','
        << r.descent_depth << '\n';
  }
}

void write_correlation_csv(std::ostream& out, const CorrelationResult& c, const std::map<std::string, std::string>& meta) {
  auto m = meta;
  m["oscillation"] = c.oscillation ? "1" : "0";
  write_series_csv(out, c.c, "c_n", m);
}

StatSeries return_tail_series(const TowerRun& run) {
  StatSeries s;
  s.model = run.model;
  s.seed = run.config.seed;
  for (std::size_t n = 1; n < run.steps.size(); ++n) {
    const double v = run.sampled_delta(n);
    if (v > 0) s.add(static_cast<double>(n), v, run.sampled_delta_stderr(n));
  }
  return s;
}

}  // namespace ergolab
