#pragma once
// Orbit statistics: expansion time, recurrence time, the exceptional sets
// Gamma_n, and (sigma, delta)-hyperbolic times.

#include <cstdint>
#include <optional>
#include <vector>

#include "ergolab/interval_geometry.hpp"
#include "ergolab/map_models.hpp"
#include "ergolab/stat_series.hpp"

namespace ergolab {

struct ExpansionConfig {
  double lambda = 0;               // rate in the non-uniform expansion condition
  double expansion_threshold = 0;  // running-average threshold; 0 selects lambda/2
  double eps_rec = 0;              // slow-recurrence tolerance
  double delta_rec = 0.1;          // truncation radius for the recurrence sums
  double sigma = 0;                // backward contraction base
  double delta_hyp = 0.1;          // truncation radius for hyperbolic times
  double b = 0.25;                 // distance exponent for hyperbolic times
  std::size_t horizon = 1000;

  double threshold() const { return expansion_threshold > 0 ? expansion_threshold : lambda / 2; }
  // Throws ConfigError naming the first violated relation.
  void validate(const MapModel& m) const;
};

// lambda from the model, sigma = exp(-lambda/4), eps_rec = lambda/20,
// b halfway to its upper bound, delta_rec from a pilot pre-scan.
ExpansionConfig default_expansion_config(const MapModel& m, std::size_t horizon, std::uint64_t seed);

// Largest delta in {0.1, 0.05, 0.025, ...} for which at least `quantile` of a
// pilot sample has an uncensored recurrence time.  0.1 when S is empty.
double calibrate_delta_rec(const MapModel& m, ExpansionConfig c, std::size_t pilot, std::uint64_t seed,
                           double quantile = 0.99);

struct OrbitRecord {
  std::vector<Point> points;           // f^j(x), j = 0..N
  std::vector<double> log_expansion;   // log ||Df^{-1}||^{-1} at f^j(x), j < N
  std::vector<double> log_dist_hyp;    // log dist_delta_hyp(f^j(x), S), j < N
  std::vector<double> expansion_sum;   // prefix sums of log_expansion, size N+1
  std::vector<double> recurrence_sum;  // prefix sums of -log dist_delta_rec, size N+1
  std::size_t horizon() const { return points.empty() ? 0 : points.size() - 1; }
};

// Throws SingularPoint when the orbit lands exactly on S.
OrbitRecord compute_orbit(const MapModel& m, const ExpansionConfig& c, const Point& x, std::uint64_t stream);

// Smallest N whose running average stays at or above the threshold on
// [N, horizon]; nullopt when the last failure lies in the final tenth of the
// horizon.
std::optional<std::size_t> expansion_time(const OrbitRecord& orbit, const ExpansionConfig& c);
std::optional<std::size_t> recurrence_time(const OrbitRecord& orbit, const ExpansionConfig& c);
std::optional<std::size_t> expansion_time(const MapModel& m, const ExpansionConfig& c, const Point& x,
                                          std::uint64_t stream = 0);
std::optional<std::size_t> recurrence_time(const MapModel& m, const ExpansionConfig& c, const Point& x,
                                           std::uint64_t stream = 0);

struct GammaSeries {
  StatSeries fraction;                    // n = 1..horizon
  std::vector<double> censored_fraction;  // constant over n, one entry per row
  std::vector<std::size_t> expansion_hist;   // index = E, last slot = censored
  std::vector<std::size_t> recurrence_hist;  // index = R, last slot = censored
  std::size_t sample = 0;
  std::size_t censored = 0;
  std::size_t singular = 0;  // orbits that hit S exactly; counted as censored
};

// Lebesgue-uniform Monte Carlo estimate of Leb(Gamma_n) / Leb(M).
GammaSeries gamma_fraction(const MapModel& m, const ExpansionConfig& c, std::size_t sample, std::uint64_t seed,
                           unsigned threads = 1);

struct HyperbolicTimeRecord {
  Point x{};
  std::vector<std::size_t> times;  // sorted, within [1, horizon]
  double density = 0;              // times.size() / horizon
};

// Prefix-sum detector: O(1) per candidate time.  Terms are log|f'(x_j)| and
// log dist_delta(x_j, S) for j = 0..N-1; returns the hyperbolic times in [1, N].
std::vector<std::size_t> hyperbolic_times_from_terms(const std::vector<double>& log_expansion,
                                                     const std::vector<double>& log_dist, double sigma, double b);
HyperbolicTimeRecord hyperbolic_times(const OrbitRecord& orbit, const ExpansionConfig& c);
HyperbolicTimeRecord hyperbolic_times(const MapModel& m, const ExpansionConfig& c, const Point& x,
                                      std::uint64_t stream = 0);
// Direct check of both inequality families for every k <= n: O(n^2).
// Recomputes every derivative and distance from the stored points.
HyperbolicTimeRecord hyperbolic_times_oracle(const MapModel& m, const OrbitRecord& orbit, const ExpansionConfig& c);

// Average over sampled points of base outside Gamma_n of the fraction of
// times j in [1, n] that are hyperbolic.  Throws NumericalError when every
// sampled point lies in Gamma_n.
double theta_density(const IntervalMap& m, const ExpansionConfig& c, const IntervalSet& base, std::size_t n,
                     std::size_t sample, std::uint64_t seed, unsigned threads = 1);

}  // namespace ergolab
