#pragma once
// Checks on the return map F = f^R built by the tower: Markov property,
// uniform expansion, separation times and distortion.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ergolab/errors.hpp"
#include "ergolab/map_models.hpp"
#include "ergolab/tower_builder.hpp"

namespace ergolab {

// Per-element measurements over an even grid of points of U^0.
struct ElementProfile {
  double residual_lo = 0;  // distance of f^R(lo) from the matching base endpoint
  double residual_hi = 0;
  bool monotone = true;    // derivative sign constant and nonzero over the grid
  double min_log_slope = 0;
  double max_log_slope = 0;
  double distortion_lip = 0;  // max |log DF(x) - log DF(y)| / dist(Fx, Fy) over grid pairs
  double chain_rule_error = 0;  // relative gap between exp(sum log f') and prod f'
};

struct Image {
  real y = 0;
  double log_slope = 0;  // log|(f^R)'|
  int sign = 1;
};

class InducedMap {
 public:
  // `grid` points per element, endpoints included.
  InducedMap(const IntervalMap& m, const TowerRun& run, std::size_t grid = 101, unsigned threads = 1);

  const IntervalMap& map() const { return *map_; }
  const TowerRun& run() const { return *run_; }
  const std::vector<ElementProfile>& profiles() const { return profiles_; }
  Arc base() const;
  double log_lambda_hat() const { return log_lambda_hat_; }
  double lambda_hat() const;
  std::size_t weakest_element() const { return weakest_; }

  // Element whose closed U^0 contains x, if any.
  std::optional<std::size_t> element_of(real x) const;
  Image apply(std::size_t element, real x) const;

 private:
  struct Piece {
    real lo, hi;
    std::size_t index;
  };
  const IntervalMap* map_;
  const TowerRun* run_;
  std::vector<Piece> pieces_;
  std::vector<ElementProfile> profiles_;
  double log_lambda_hat_ = 0;
  std::size_t weakest_ = 0;
};

struct MarkovReport {
  double tolerance = 1e-9;
  std::size_t elements = 0;
  std::size_t passed = 0;
  double max_residual = 0;
  std::vector<std::size_t> failures;
  bool pass() const { return failures.empty(); }
};

MarkovReport verify_markov(const InducedMap& im, double tolerance = 1e-9);

class ExpansionFailure : public VerificationError {
 public:
  ExpansionFailure(std::size_t element, double lambda)
      : VerificationError("expansion lower bound " + std::to_string(lambda) + " <= 1 on element " +
                          std::to_string(element)),
        element_(element) {}
  std::size_t element() const { return element_; }

 private:
  std::size_t element_;
};

struct ExpansionReport {
  double lambda_hat = 0;
  double log_lambda_hat = 0;
  std::size_t element = 0;          // where the infimum is attained
  double chain_rule_error = 0;      // worst relative gap over all sampled points
};

// Throws ExpansionFailure when the measured bound is <= 1.
ExpansionReport verify_expansion(const InducedMap& im);

enum class Censor { none, remnant, precision };

struct Separation {
  std::size_t s = 0;
  Censor censored = Censor::none;
};

// Number of leading F-iterates i for which F^i(x), F^i(y) share an element
// (0 when they start in different elements); depth_max if never separated.
// Orbits are cut when both leave the recorded elements or when the
// accumulated log-derivative exceeds the run's resolution bound.
Separation separation_time(const InducedMap& im, real x, real y, std::size_t depth_max);

struct DistortionReport {
  std::size_t pairs_requested = 0;
  std::size_t pairs_tested = 0;
  std::size_t pairs_rejected = 0;  // drawn points in different elements
  std::size_t pairs_censored = 0;  // excluded from K-hat
  std::size_t pairs_unresolved = 0;  // image distance below the resolution floor, excluded from B-tilde
  double b_tilde = 0;           // over the sampled pairs and every element's grid pairs
  double b_tilde_sampled = 0;
  double k_hat = 0;             // with s(F(x), F(y))
  double k_hat_inner = 0;       // with s(x, y)
  std::size_t max_depth = 0;
  double max_pair_dist_scaled = 0;  // max dist(x,y) lambda^{s(x,y)}
  bool form_consistent = true;      // K-hat <= B-tilde diam e^{B-tilde diam}
};

DistortionReport verify_distortion(const InducedMap& im, std::size_t pair_sample, std::uint64_t seed,
                                   std::size_t depth_max = 64);

// Per-element CSV and summary manifest.
void write_element_csv(std::ostream& out, const InducedMap& im);
void write_induced_manifest(std::ostream& out, const InducedMap& im, const MarkovReport& mk,
                            const ExpansionReport& ex, const DistortionReport& dr);

}  // namespace ergolab
