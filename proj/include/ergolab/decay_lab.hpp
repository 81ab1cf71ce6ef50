#pragma once
// Tail fits, correlation estimates and the ratio diagnostics of a tower run.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ergolab/errors.hpp"
#include "ergolab/map_models.hpp"
#include "ergolab/stat_series.hpp"
#include "ergolab/tower_builder.hpp"

namespace ergolab {

// ---------------------------------------------------------------- tail fits

enum class TailFamily { polynomial, exponential, stretched };

const char* to_string(TailFamily f);
TailFamily tail_family_from_string(const std::string& s);

class NotFittable : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct TailFit {
  TailFamily family = TailFamily::polynomial;
  // value ~ amplitude * n^{-rate}, amplitude * rate^n, or amplitude * e^{-rate sqrt n}.
  double amplitude = 0;
  double rate = 0;
  double rate_lo = 0;  // 95% interval
  double rate_hi = 0;
  double slope = 0;  // of the linearized regression
  double slope_stderr = 0;
  double r2 = 0;
  double n_lo = 0;
  double n_hi = 0;
  std::size_t points = 0;
};

// Least squares on the linearizing transform over points with value > 0 in
// [n_lo, n_hi].  Throws NotFittable with fewer than 10 such points.
TailFit tail_fit(const StatSeries& s, TailFamily family, double n_lo = 0,
                 double n_hi = std::numeric_limits<double>::infinity());

// Family with the largest R^2 over the same window.
TailFit best_tail_fit(const StatSeries& s, double n_lo = 0, double n_hi = std::numeric_limits<double>::infinity());

// ------------------------------------------------------------- correlations

using Observable = std::function<double(const Point&)>;

struct CorrelationConfig {
  std::size_t n_max = 10;
  std::size_t sample = 100000;
  std::size_t burn_in = 1000;
  std::size_t batches = 32;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct CorrelationResult {
  StatSeries c;       // |C_n| for n = 0..n_max with batch-means standard errors
  std::vector<double> signed_c;
  std::vector<std::vector<double>> batch_c;  // signed, [batch][n]
  double mean_phi = 0;
  double mean_psi = 0;
  bool oscillation = false;  // sign pattern suggesting periodic behaviour
};

CorrelationResult correlation(const MapModel& m, const Observable& phi, const Observable& psi,
                              const CorrelationConfig& cfg);

// Cov(x, 2^n x mod 1) under Lebesgue from the binary digits of x: only the
// digits beyond position n are shared, giving sum_{i>n} 2^{n-2i}/4.
double dyadic_correlation_oracle(std::size_t n, std::size_t digits = 64);
// Midpoint quadrature of the same covariance on `points` cells; a power of
// two keeps every sample symmetric inside its sawtooth tooth.
double dyadic_correlation_quadrature(std::size_t n, std::size_t points = std::size_t{1} << 20);

// -------------------------------------------------------------------- CLT

struct CltConfig {
  std::size_t n = 2000;
  std::size_t sample = 20000;
  std::size_t burn_in = 1000;
  std::size_t gk_lags = 60;          // correlation lags estimated for Green-Kubo
  std::size_t gk_sample = 200000;
  std::size_t batches = 32;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct CltReport {
  double sigma2 = 0;         // Green-Kubo
  double sigma2_stderr = 0;  // batch means over the truncated sum
  std::size_t gk_terms = 0;  // lags kept (C_0 included)
  double empirical_var = 0;  // sample variance of S_n / sqrt(n)
  double mean = 0;
  double ks = 1;             // sup |F_emp - Normal(0, sigma2)|
  bool coboundary = false;   // sigma2 ~ 0; no KS test
};

CltReport clt_check(const MapModel& m, const Observable& phi, const CltConfig& cfg);

// Kolmogorov-Smirnov distance of a sample to Normal(0, var).
double ks_distance_normal(std::vector<double> values, double var);

// -------------------------------------------------------------- Birkhoff

struct BirkhoffResult {
  double mean = 0;
  double stderr = 0;  // across orbits
  std::size_t orbits = 0;
  std::size_t steps = 0;
};

BirkhoffResult birkhoff_average(const MapModel& m, const Observable& g, std::size_t orbits, std::size_t steps,
                                std::size_t burn_in, std::uint64_t seed, unsigned threads = 1);

// int_0^1 -2 log x / ((1+x) ln 2) dx, by Simpson in t = -log x.
double gauss_lyapunov_quadrature();

// -------------------------------------------------------------- diagnostics

class IncompleteHistory : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

enum class DescentCase { none, exponential, gamma, floor };  // -, (I), (II), (III)
const char* to_string(DescentCase c);

struct DiagnosticsConfig {
  double gamma = 1.8;
  double theta = 0;           // hyperbolic-time density; required
  std::size_t min_count = 200;  // seeds needed in a denominator for a ratio to count
};

struct DiagnosticRow {
  std::size_t n = 0;
  double leb_a = 0, leb_b = 0, leb_delta = 0;
  double a_ratio = -1;  // Leb(B_n)/Leb(A_n); -1 when below min_count
  double a1 = -1;       // Leb(B_{n-1} & A_n)/Leb(B_{n-1})
  double b1 = -1;       // Leb(A_{n-1} & B_n)/Leb(A_{n-1})
  double c1 = -1;       // Leb(A_{n-1} & {R=n})/Leb(A_{n-1})
  double c2 = -1;       // Leb(Delta_n)/Leb(Delta_{n+1})
  double h = -1;        // Leb(A_{n-1} & H_n)/Leb(A_{n-1})
  double media = 0;     // sum_{j<=n} h_j
  bool in_e = false;    // n in E_n (h_n < alpha)
  bool in_f = false;
  double leb_gamma = 0;
  DescentCase descent = DescentCase::none;
  std::size_t descent_depth = 0;
};

struct DecayDiagnostics {
  std::vector<DiagnosticRow> rows;  // n = 1..n_max
  double a0_hat = 0, a1_hat = 0, b1_hat = 0, c1_hat = 0;  // over n > R0
  double c2_hat = 0;                                        // over every n with a ratio
  double a0_formula = 0;  // ((1+a1)b1+c1)/(a1(1-b1-c1)) from the measured a1, b1, c1
  double c2_formula = 0;  // (1+1/a0)/(1-b1-c1)
  double alpha = 0;       // (theta/12)^{gamma+1}
  double theta = 0;
  double gamma = 0;
  std::size_t e_count = 0;
  std::size_t f_count = 0;
  std::size_t descents = 0;           // n in F with Leb(A_n) >= 2 Leb(Gamma_n)
  std::size_t descent_failures = 0;   // no k < n with Leb(A_n)/Leb(A_k) < (k/n)^gamma
  std::size_t cases[4] = {0, 0, 0, 0};
  bool b1_c1_ok() const { return b1_hat + c1_hat < 1; }
};

// `gamma_leb[n]` is Leb(Gamma_n) for n = 0..n_max.
DecayDiagnostics decay_diagnostics(const TowerRun& run, const std::vector<double>& gamma_leb,
                                   const DiagnosticsConfig& cfg);

void write_diagnostics_csv(std::ostream& out, const DecayDiagnostics& d, const std::map<std::string, std::string>& meta);
void write_correlation_csv(std::ostream& out, const CorrelationResult& c, const std::map<std::string, std::string>& meta);

// Leb({R > n}) series from the sampled survival, n = 1..n_max, zeros dropped.
StatSeries return_tail_series(const TowerRun& run);

}  // namespace ergolab
