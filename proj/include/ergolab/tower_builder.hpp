#pragma once
// Inductive partition of the base ball into return domains.
//
// Discovery runs over a deterministic grid of seeds in the base.  Each seed
// carries its long double branch orbit; the candidate element at time n is
// the pull-back of the base annulus copy nearest f^n(seed) along the seed's
// digits, and its acceptance (pre-ball, disjointness from earlier returns,
// containment in the epsilon-fattened A set) is decided exactly in lifted
// coordinates.  Accepted elements whose return derivative stays below the
// resolution bound are recorded with their full geometry; the return-time
// tail is estimated from seed survival.

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ergolab/errors.hpp"
#include "ergolab/expansion_stats.hpp"
#include "ergolab/interval_geometry.hpp"
#include "ergolab/map_models.hpp"
#include "ergolab/preballs.hpp"

namespace ergolab {

class InconsistentState : public VerificationError {
 public:
  using VerificationError::VerificationError;
};

struct RingSystem {
  double delta0 = 0;
  double sigma = 0;
  std::size_t k_ring = 0;

  // Truncates where the ring width drops below tau.
  static RingSystem make(double delta0, double sigma, double tau = 1e-12);
  // delta0 (1 + sigma^{k/2}): inner radius of ring k, outer radius of ring k+1.
  double boundary(std::size_t k) const;
  // Radius r with ring_index(d) >= j exactly when d < r; delta0 when j > k_ring.
  double inner_threshold(std::size_t j) const;
};

// Ring containing a point at distance `dist` from p; boundary points go to
// the inner ring.  Throws std::domain_error outside delta0 < dist <= 2 delta0.
std::size_t ring_index(const RingSystem& rs, double dist);

// C0^{-1} sigma^{N0/2} delta0 (sigma^{-1/2} - 1).
double collar_epsilon_bound(const BaseGeometry& g, double sigma);

struct TowerConfig {
  double delta0 = 0.01;
  double delta1 = 0.05;
  double eps = -1;  // negative: half the collar bound
  bool epsilon_zero = false;
  bool allow_eps_above_bound = false;  // negative controls only
  std::size_t r0 = 12;
  std::size_t n_max = 60;
  std::size_t seeds = 20000;
  std::uint64_t seed = 1;
  bool strict_base = false;
  double resolution_log = 31 * 0.6931471805599453;  // record elements with log|(f^R)'| below this
  bool exact_view = true;
};

struct PartitionElement {
  std::array<Arc, 4> u;  // U^0 .. U^3
  std::size_t r = 0;
  std::size_t n_hyp = 0;
  std::size_t extra = 0;  // r - n_hyp
  int copy = 0;           // lift of the base copy at time r
  std::vector<int> digits;
  double log_derivative = 0;  // log|(f^r)'| at the pull-back of p
};

struct StepRecord {
  std::size_t n = 0;
  // Seed counts at time n.
  std::size_t alive = 0;
  std::size_t in_a = 0;
  std::size_t in_b = 0;
  std::size_t returned = 0;  // R = n
  std::size_t lost = 0;      // orbits that left the branch domains (Gauss truncation)
  // Transitions from time n-1.
  std::size_t a_to_a = 0, a_to_b = 0, a_to_r = 0;
  std::size_t b_to_a = 0, b_to_b = 0, b_to_r = 0;
  std::size_t a_prev_hyp = 0;  // seeds in A_{n-1} for which n is a hyperbolic time
  std::size_t collar_violations = 0;  // seen by the discovery engine
  std::size_t unresolved_returns = 0;
  // Exact bookkeeping over the recorded elements.
  double exact_delta = 0;
  double exact_r_eq_n = 0;
  std::size_t elements_cumulative = 0;
  double exact_a = 0;
  double exact_b = 0;
  double exact_a_eps = 0;
  std::size_t exact_collar_failures = 0;
};

struct CollarReport {
  std::size_t n = 0;
  bool pass = true;
  std::vector<std::size_t> offending;  // indices into the run's element table
  double overlap = 0;
};

struct TowerRun {
  std::string model;
  std::map<std::string, double> model_parameters;
  TowerConfig config;
  ExpansionConfig expansion;
  BaseGeometry base;
  RingSystem rings;
  double eps = 0;
  double eps_bound = 0;
  std::vector<PartitionElement> elements;  // sorted by (r, lo)
  std::vector<StepRecord> steps;           // index n = 0..n_max
  std::vector<CollarReport> collar;        // exact checks, one per step n > r0
  std::size_t overlaps = 0;                // recorded U^0 pairs that intersect

  double base_measure() const { return static_cast<double>(2 * base.delta0); }
  // Seed-survival estimate of Leb(R > n) and its standard error.
  double sampled_delta(std::size_t n) const;
  double sampled_delta_stderr(std::size_t n) const;
  double sampled_a(std::size_t n) const;
  double sampled_b(std::size_t n) const;
  double sampled_r_eq(std::size_t n) const;
  std::size_t seed_count() const { return config.seeds; }
};

// Piece of the collar counter: t_n = expiry - n while positive.
struct CollarPiece {
  real lo = 0;
  real hi = 0;
  std::size_t expiry = 0;
};

// Exact state built from the recorded elements.
struct TowerState {
  std::size_t n = 0;
  IntervalSet delta;
  IntervalSet a;
  IntervalSet b;
  IntervalSet a_eps;
  std::vector<CollarPiece> collar;            // sorted, disjoint, inside [0,1]
  std::vector<std::size_t> finished;          // element indices with r <= n
  std::vector<double> r_measure;              // measure of the union of U^0 with r = k, k = 0..n

  std::vector<std::pair<IntervalSet, int>> t_levels() const;
};

TowerState initial_state(const TowerRun& run);
// Applies the recorded elements with r = st.n + 1.  Throws InconsistentState
// when an invariant fails.
TowerState tower_step(const IntervalMap& m, const TowerRun& run, const TowerState& st);
// Every U^1 of an element with r = next.n against {t_{n-1} > 1} of `prev`.
CollarReport collar_check(const TowerRun& run, const TowerState& prev, const TowerState& next);

TowerRun run_tower(const IntervalMap& m, const ExpansionConfig& c, const TowerConfig& cfg, unsigned threads = 1);

// Manifest (JSON) and per-step CSV.
void write_tower_manifest(std::ostream& out, const TowerRun& run);
TowerRun read_tower_manifest(std::istream& in);
void write_tower_csv(std::ostream& out, const TowerRun& run);

}  // namespace ergolab
