#include "ergolab/expansion_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ergolab/errors.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

namespace {

constexpr std::uint64_t kGammaTag = 0x6a11;
constexpr std::uint64_t kThetaTag = 0x7e7a;
constexpr std::uint64_t kPilotTag = 0x9110;
constexpr std::size_t kChunk = 256;

double b_upper_bound(const MapModel& m) {
  double beta = m.nondegeneracy().beta;
  return beta > 0 ? std::min(0.5, 1.0 / (4 * beta)) : 0.5;
}

// Censoring rule shared by E and R: the last failure at `last_fail` leaves a
// certificate window [last_fail + 1, horizon]; a window inside the final
// tenth of the horizon is not trusted.
std::optional<std::size_t> certify(std::size_t last_fail, std::size_t horizon) {
  if (last_fail > 0 && 10 * last_fail > 9 * horizon) return std::nullopt;
  return last_fail + 1;
}

void check_off_singular(const MapModel& m, const Point& p) {
  if (m.has_singular_set() && m.dist_singular(p) == 0.0) throw SingularPoint(m.name() + ": orbit hits the singular set");
}

struct PointTimes {
  std::optional<std::size_t> e, r;
  bool singular = false;
};

// E and R straight from the orbit points without keeping per-step arrays.
PointTimes stream_times(const MapModel& m, const ExpansionConfig& c, const std::vector<Point>& pts) {
  const std::size_t n = pts.size() - 1;
  const double thr = c.threshold();
  const bool has_s = m.has_singular_set();
  double se = 0, sr = 0;
  std::size_t fail_e = 0, fail_r = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const Point& p = pts[j];
    if (has_s) {
      double d = m.dist_singular(p);
      if (d == 0.0) return {std::nullopt, std::nullopt, true};
      if (d <= c.delta_rec) sr -= std::log(d);
    }
    se += std::log(m.deriv_norm_inv(p));
    const double len = static_cast<double>(j + 1);
    if (se < thr * len) fail_e = j + 1;
    if (sr > 2 * c.eps_rec * len) fail_r = j + 1;
  }
  return {certify(fail_e, n), certify(fail_r, n), false};
}

std::vector<Point> orbit_points(const MapModel& m, const Point& x, std::size_t n, std::uint64_t stream) {
  std::vector<Point> pts;
  m.trajectory(x, n, stream, pts);
  return pts;
}

}  // namespace

void ExpansionConfig::validate(const MapModel& m) const {
  if (!(lambda > 0)) throw ConfigError("lambda_positive", "lambda must be > 0");
  if (!(expansion_threshold >= 0) || expansion_threshold >= lambda)
    throw ConfigError("expansion_threshold_range", "threshold must lie in (0, lambda); 0 selects lambda/2");
  if (!(sigma > 0 && sigma < 1)) throw ConfigError("sigma_range", "sigma must lie in (0,1)");
  if (!(eps_rec > 0)) throw ConfigError("eps_rec_positive", "eps_rec must be > 0");
  if (!(delta_rec > 0)) throw ConfigError("delta_rec_positive", "delta_rec must be > 0");
  if (!(delta_hyp > 0)) throw ConfigError("delta_hyp_positive", "delta_hyp must be > 0");
  double bmax = b_upper_bound(m);
  if (!(b > 0 && b < bmax))
    throw ConfigError("b_exponent_bound", "b must satisfy 0 < b < min(1/2, 1/(4 beta)) = " + std::to_string(bmax));
  if (horizon < 1000) throw ConfigError("horizon_min", "horizon must be at least 1000");
}

ExpansionConfig default_expansion_config(const MapModel& m, std::size_t horizon, std::uint64_t seed) {
  ExpansionConfig c;
  c.lambda = m.lambda();
  c.sigma = std::exp(-c.lambda / 4);
  c.eps_rec = c.lambda / 20;
  c.b = 0.5 * b_upper_bound(m);
  c.horizon = horizon;
  c.delta_rec = calibrate_delta_rec(m, c, 1000, seed);
  c.delta_hyp = c.delta_rec;
  return c;
}

double calibrate_delta_rec(const MapModel& m, ExpansionConfig c, std::size_t pilot, std::uint64_t seed,
                           double quantile) {
  if (!m.has_singular_set()) return 0.1;
  std::vector<std::vector<Point>> orbits;
  for (std::size_t i = 0; i < pilot; ++i) {
    Rng rng = make_rng(seed, kPilotTag, i);
    Point x = m.sample(rng);
    try {
      orbits.push_back(orbit_points(m, x, c.horizon, substream(seed, kPilotTag + 1, i)));
    } catch (const SingularPoint&) {
    }
  }
  for (double delta = 0.1; delta > 1e-12; delta /= 2) {
    c.delta_rec = delta;
    std::size_t ok = 0;
    for (const auto& pts : orbits) {
      PointTimes t = stream_times(m, c, pts);
      if (!t.singular && t.r) ++ok;
    }
    if (static_cast<double>(ok) >= quantile * static_cast<double>(pilot)) return delta;
  }
  throw NumericalError("no delta_rec down to 1e-12 certifies slow recurrence on the pilot sample");
}

OrbitRecord compute_orbit(const MapModel& m, const ExpansionConfig& c, const Point& x, std::uint64_t stream) {
  OrbitRecord o;
  o.points = orbit_points(m, x, c.horizon, stream);
  const std::size_t n = o.points.size() - 1;
  o.log_expansion.resize(n);
  o.log_dist_hyp.resize(n);
  o.expansion_sum.assign(n + 1, 0.0);
  o.recurrence_sum.assign(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const Point& p = o.points[j];
    check_off_singular(m, p);
    o.log_expansion[j] = std::log(m.deriv_norm_inv(p));
    o.log_dist_hyp[j] = std::log(dist_delta(m, p, c.delta_hyp));
    o.expansion_sum[j + 1] = o.expansion_sum[j] + o.log_expansion[j];
    o.recurrence_sum[j + 1] = o.recurrence_sum[j] - std::log(dist_delta(m, p, c.delta_rec));
  }
  return o;
}

std::optional<std::size_t> expansion_time(const OrbitRecord& orbit, const ExpansionConfig& c) {
  const std::size_t n = orbit.horizon();
  std::size_t fail = 0;
  for (std::size_t k = 1; k <= n; ++k)
    if (orbit.expansion_sum[k] < c.threshold() * static_cast<double>(k)) fail = k;
  return certify(fail, n);
}

std::optional<std::size_t> recurrence_time(const OrbitRecord& orbit, const ExpansionConfig& c) {
  const std::size_t n = orbit.horizon();
  std::size_t fail = 0;
  for (std::size_t k = 1; k <= n; ++k)
    if (orbit.recurrence_sum[k] > 2 * c.eps_rec * static_cast<double>(k)) fail = k;
  return certify(fail, n);
}

std::optional<std::size_t> expansion_time(const MapModel& m, const ExpansionConfig& c, const Point& x,
                                          std::uint64_t stream) {
  return expansion_time(compute_orbit(m, c, x, stream), c);
}

std::optional<std::size_t> recurrence_time(const MapModel& m, const ExpansionConfig& c, const Point& x,
                                           std::uint64_t stream) {
  return recurrence_time(compute_orbit(m, c, x, stream), c);
}

GammaSeries gamma_fraction(const MapModel& m, const ExpansionConfig& c, std::size_t sample, std::uint64_t seed,
                           unsigned threads) {
  const std::size_t n = c.horizon;
  const std::size_t chunks = chunk_count(sample, kChunk);
  struct Partial {
    std::vector<std::size_t> exit_hist;  // max(E, R); slot n+1 = censored
    std::vector<std::size_t> e_hist, r_hist;
    std::size_t singular = 0;
  };
  std::vector<Partial> parts(chunks);
  parallel_chunks(sample, kChunk, threads, [&](const ChunkRange& r) {
    Partial& part = parts[r.index];
    part.exit_hist.assign(n + 2, 0);
    part.e_hist.assign(n + 2, 0);
    part.r_hist.assign(n + 2, 0);
    std::vector<Point> pts;
    for (std::size_t i = r.begin; i < r.end; ++i) {
      Rng rng = make_rng(seed, kGammaTag, i);
      Point x = m.sample(rng);
      PointTimes t;
      try {
        m.trajectory(x, n, substream(seed, kGammaTag + 1, i), pts);
        t = stream_times(m, c, pts);
      } catch (const SingularPoint&) {
        t.singular = true;
      }
      if (t.singular) ++part.singular;
      std::size_t e = t.e ? *t.e : n + 1;
      std::size_t rr = t.r ? *t.r : n + 1;
      ++part.e_hist[std::min(e, n + 1)];
      ++part.r_hist[std::min(rr, n + 1)];
      ++part.exit_hist[std::min(std::max(e, rr), n + 1)];
    }
  });

  GammaSeries g;
  g.sample = sample;
  g.expansion_hist.assign(n + 2, 0);
  g.recurrence_hist.assign(n + 2, 0);
  std::vector<std::size_t> exit_hist(n + 2, 0);
  for (const Partial& p : parts) {
    for (std::size_t k = 0; k <= n + 1; ++k) {
      exit_hist[k] += p.exit_hist[k];
      g.expansion_hist[k] += p.e_hist[k];
      g.recurrence_hist[k] += p.r_hist[k];
    }
    g.singular += p.singular;
  }
  g.censored = exit_hist[n + 1];
  g.fraction.model = m.name();
  g.fraction.seed = seed;
  const double total = static_cast<double>(sample);
  const double censored = static_cast<double>(g.censored) / total;
  // x is in Gamma_k exactly when max(E, R) > k.
  std::size_t above = sample;
  for (std::size_t k = 0; k <= n; ++k) {
    above -= exit_hist[k];
    if (k == 0) continue;
    double f = static_cast<double>(above) / total;
    g.fraction.add(static_cast<double>(k), f, std::sqrt(f * (1 - f) / total));
    g.censored_fraction.push_back(censored);
  }
  return g;
}

std::vector<std::size_t> hyperbolic_times_from_terms(const std::vector<double>& log_expansion,
                                                     const std::vector<double>& log_dist, double sigma, double b) {
  std::vector<std::size_t> times;
  const std::size_t n = log_expansion.size();
  const double log_sigma = std::log(sigma);
  const double rate = -b * log_sigma;  // > 0
  // Product family: P_m = sum_{l<m} (log|Df(x_l)| + log sigma) must be a
  // running maximum at m.  Distance family: min_{j<m} (log d_j - rate*j)
  // must be at least -rate*m.
  double p = 0, p_max = 0;
  double dist_min = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m <= n; ++m) {
    const std::size_t j = m - 1;
    p += log_expansion[j] + log_sigma;
    dist_min = std::min(dist_min, log_dist[j] - rate * static_cast<double>(j));
    if (p >= p_max && dist_min >= -rate * static_cast<double>(m)) times.push_back(m);
    p_max = std::max(p_max, p);
  }
  return times;
}

HyperbolicTimeRecord hyperbolic_times(const OrbitRecord& orbit, const ExpansionConfig& c) {
  HyperbolicTimeRecord rec;
  rec.x = orbit.points.front();
  const std::size_t n = orbit.horizon();
  rec.times = hyperbolic_times_from_terms(orbit.log_expansion, orbit.log_dist_hyp, c.sigma, c.b);
  rec.density = n == 0 ? 0.0 : static_cast<double>(rec.times.size()) / static_cast<double>(n);
  return rec;
}

HyperbolicTimeRecord hyperbolic_times(const MapModel& m, const ExpansionConfig& c, const Point& x,
                                      std::uint64_t stream) {
  return hyperbolic_times(compute_orbit(m, c, x, stream), c);
}

HyperbolicTimeRecord hyperbolic_times_oracle(const MapModel& m, const OrbitRecord& orbit, const ExpansionConfig& c) {
  HyperbolicTimeRecord rec;
  rec.x = orbit.points.front();
  const std::size_t n = orbit.horizon();
  std::vector<double> inv_norm(n), dist(n);
  for (std::size_t j = 0; j < n; ++j) {
    inv_norm[j] = 1.0 / m.deriv_norm_inv(orbit.points[j]);
    dist[j] = dist_delta(m, orbit.points[j], c.delta_hyp);
  }
  for (std::size_t t = 1; t <= n; ++t) {
    bool ok = true;
    double log_prod = 0;
    for (std::size_t k = 1; k <= t && ok; ++k) {
      log_prod += std::log(inv_norm[t - k]);
      const double kk = static_cast<double>(k);
      ok = log_prod <= kk * std::log(c.sigma) && std::log(dist[t - k]) >= c.b * kk * std::log(c.sigma);
    }
    if (ok) rec.times.push_back(t);
  }
  rec.density = n == 0 ? 0.0 : static_cast<double>(rec.times.size()) / static_cast<double>(n);
  return rec;
}

double theta_density(const IntervalMap& m, const ExpansionConfig& c, const IntervalSet& base, std::size_t n,
                     std::size_t sample, std::uint64_t seed, unsigned threads) {
  if (base.empty()) throw NumericalError("theta_density: base set is empty");
  ExpansionConfig cc = c;
  cc.horizon = std::max(c.horizon, n);
  const std::size_t chunks = chunk_count(sample, kChunk);
  std::vector<double> sums(chunks, 0.0);
  std::vector<std::size_t> kept(chunks, 0);
  parallel_chunks(sample, kChunk, threads, [&](const ChunkRange& r) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      Rng rng = make_rng(seed, kThetaTag, i);
      Point x = pt(static_cast<double>(base.quantile(uniform01(rng))));
      OrbitRecord o;
      try {
        o = compute_orbit(m, cc, x, substream(seed, kThetaTag + 1, i));
      } catch (const SingularPoint&) {
        continue;
      }
      auto e = expansion_time(o, cc);
      auto rt = recurrence_time(o, cc);
      if (!e || !rt || *e > n || *rt > n) continue;
      HyperbolicTimeRecord h = hyperbolic_times(o, cc);
      auto upto = std::upper_bound(h.times.begin(), h.times.end(), n) - h.times.begin();
      sums[r.index] += static_cast<double>(upto) / static_cast<double>(n);
      ++kept[r.index];
    }
  });
  double total = 0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < chunks; ++k) {
    total += sums[k];
    count += kept[k];
  }
  if (count == 0) throw NumericalError("theta_density: every sampled point lies in Gamma_n");
  return total / static_cast<double>(count);
}

}  // namespace ergolab
