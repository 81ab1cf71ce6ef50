#pragma once
// Hyperbolic pre-balls, the uniform cover time N_eps, the dense pre-image
// base point and the return-to-base construction.

#include <cstdint>
#include <vector>

#include "ergolab/errors.hpp"
#include "ergolab/expansion_stats.hpp"
#include "ergolab/interval_geometry.hpp"
#include "ergolab/map_models.hpp"

namespace ergolab {

// Raised when B(f^n(x), delta1) cannot be pulled back injectively along one
// branch sequence.  feasible_radius() is the supremum of admissible radii.
class RadiusTooLarge : public NumericalError {
 public:
  RadiusTooLarge(double feasible, const std::string& what) : NumericalError(what), feasible_(feasible) {}
  double feasible_radius() const { return feasible_; }

 private:
  double feasible_;
};

struct PreballOptions {
  double kappa = 0;         // containment rate; 0 selects sigma^{-1/2}
  std::size_t sample = 100;  // image points, endpoints included
  std::uint64_t stream = 0;  // refill stream for the long double orbit
};

struct PreballReport {
  real center = 0;
  real shadow = 0;  // pull-back of f^n(x) along the digits
  std::size_t n = 0;
  Arc preball;      // lifted around `shadow` on the circle
  double delta1 = 0;
  std::vector<double> contraction;  // [k-1]: max dist(f^{n-k}y, f^{n-k}z) / dist(f^n y, f^n z)
  std::size_t contraction_violations = 0;
  double distortion = 1;  // D1 over the sample
  double log_expansion_min = 0;
  double log_expansion_max = 0;
  double kappa = 0;
  double containment_radius = 0;  // kappa^{-n}
  bool contained = false;
  double endpoint_residual = 0;
  bool chained_residual = false;  // per-step residual, used when |(f^n)'| > 2^31
  bool monotone = false;

  bool passes() const {
    return contraction_violations == 0 && contained && monotone && endpoint_residual <= 1e-9;
  }
};

// Pulls B(f^n(x), delta1) back along the branch digits of x and checks the
// four pre-ball properties on a sample.  Throws std::invalid_argument when n
// is not a hyperbolic time of the long double orbit, RadiusTooLarge when the
// ball does not fit one branch sequence.
PreballReport preball(const IntervalMap& m, const ExpansionConfig& c, real x, std::size_t n, double delta1,
                      const PreballOptions& opt = {});

// min over sampled points x and hyperbolic times n of |(f^n)'(x)|^{1/n},
// floored at sigma^{-1/2}.
double estimate_kappa(const MapModel& m, const ExpansionConfig& c, std::size_t sample, std::uint64_t seed,
                      unsigned threads = 1);

struct CoverTimeReport {
  double kappa = 0;
  std::size_t n_prime = 0;               // smallest n with kappa^{-n} <= eps/10
  std::size_t n_prime_rate_reading = 0;  // ceil(log(10/eps) / kappa), kappa read as a rate
  std::size_t n_eps = 0;
  double uncovered = 0;  // sampled measure of M minus the union of H_j, j in [n_prime, n_eps]
  std::size_t sample = 0;
};

// Throws NotFound when the horizon is exhausted first.
CoverTimeReport uniform_cover_time(const MapModel& m, const ExpansionConfig& c, double eps, std::size_t sample,
                                   std::uint64_t seed, unsigned threads = 1, double kappa = 0);

struct TreeNode {
  real x = 0;            // reduced to the ambient space
  std::size_t level = 0;  // f^level(x) = p
  int parent = -1;
  int branch = -1;       // branch of x
  real v_lo = 0, v_hi = 0;  // pull-back of B(p, 2 sqrt(delta0)) around x; lifted, lo < hi
};

struct PreimageTree {
  real p = 0;
  std::vector<TreeNode> nodes;  // sorted by level
  std::size_t depth = 0;
  double max_gap_distance = 0;  // sup over M of the distance to the tree
};

// Pre-image tree of p up to `depth`, thinned to one node per cell of width
// delta_target/8 and pruned below distance delta_target/5 from S.  Each node
// carries the pull-back of B(p, ball_radius).
PreimageTree preimage_tree(const IntervalMap& m, real p, std::size_t depth, double delta_target,
                           real ball_radius = 0);

struct BasePoint {
  real p = 0;
  std::size_t n0 = 0;
  double density = 0;  // achieved sup distance to the tree
};

// Candidates are branch fixed points at distance >= delta_target/5 from S,
// ordered by distance to S (largest first) and then by position.  Throws
// NotFound when no candidate is delta_target-dense within depth 60.
BasePoint dense_preimage_base(const IntervalMap& m, double delta_target);

struct BaseGeometry {
  Ambient ambient = Ambient::circle;
  real p = 0;
  std::size_t n0 = 0;
  double delta0 = 0;
  double delta1 = 0;
  double c0 = 1;  // sup of max(|(f^m)'|, 1/|(f^m)'|) over tree components, 1 <= m <= n0
  double d0 = 1;  // sup distortion of f^m over the same components
  PreimageTree tree;

  // i = 0..3: delta0, 2 delta0, sqrt(delta0), 2 sqrt(delta0).
  double radius(int i) const;
  Arc ball(int i) const;
};

// Builds the base with a (delta1/3)-dense tree.  With `strict` the relation
// sqrt(delta0) <= delta1/4 is enforced (ConfigError "base_radius_ratio").
BaseGeometry make_base_geometry(const IntervalMap& m, double delta0, double delta1, bool strict = false);

struct ReturnToBase {
  Arc v;
  std::size_t steps = 0;
  real tree_point = 0;
  double distortion = 1;
  double endpoint_residual = 0;
};

// Smallest-level tree component V inside `b` with f^steps(V) = B(p, 2 sqrt(delta0));
// ties go to the tree point nearest the centre of b.  Throws NotFound.
ReturnToBase return_to_base(const IntervalMap& m, const BaseGeometry& g, const Arc& b, std::size_t sample = 64);

}  // namespace ergolab
