#pragma once
// Finite unions of closed arcs on the circle R/Z or closed intervals in [0,1].
//
// Sets are identified mod 0: endpoints closer than kGeomTol are merged and
// zero-length pieces vanish.  Positions use `real` (long double) so that
// pull-backs of depth ~30 along expanding branches keep 1e-9 image accuracy.

#include <stdexcept>
#include <string>
#include <vector>

namespace ergolab {

using real = long double;

inline constexpr real kGeomTol = 1e-12L;

enum class Ambient { circle, interval };

const char* to_string(Ambient a);

class AmbientMismatch : public std::invalid_argument {
 public:
  AmbientMismatch() : std::invalid_argument("interval sets live on different ambient spaces") {}
};

// One connected piece.  On the circle `lo` is in [0,1) and `hi` lies in
// (lo, lo+1], so an arc through 0 has hi > 1.  On the interval 0 <= lo < hi <= 1.
struct Arc {
  real lo = 0;
  real hi = 0;
  Ambient ambient = Ambient::interval;

  real length() const { return hi - lo; }
  bool contains(real x) const;

  // Arc running counter-clockwise from a to b (positions taken mod 1).
  static Arc circle(real a, real b);
  static Arc interval(real a, real b);
  // Closed ball of radius r around c, clipped to [0,1] for the interval.
  static Arc ball(Ambient amb, real c, real r);
};

real wrap01(real x);
// min(|x-y|, 1-|x-y|) after reducing both positions mod 1.
real circle_dist(real x, real y);
real ambient_dist(Ambient amb, real x, real y);

class IntervalSet {
 public:
  explicit IntervalSet(Ambient amb = Ambient::interval) : amb_(amb) {}
  IntervalSet(Ambient amb, const std::vector<Arc>& arcs);

  static IntervalSet full(Ambient amb);
  static IntervalSet of(const Arc& a);

  Ambient ambient() const { return amb_; }
  bool empty() const { return pieces_.empty(); }
  real measure() const;
  bool contains(real x) const;
  // True when every point of `a` lies in the set, up to kGeomTol at the ends.
  bool covers(const Arc& a) const;
  // Point at measure-fraction u in [0,1] along the sorted pieces; maps a
  // uniform u to a Lebesgue-uniform point of the set.
  real quantile(real u) const;

  // Canonical connected components; on the circle a piece touching both 0
  // and 1 is reported once as an arc through 0.
  std::vector<Arc> arcs() const;
  // Sorted pieces inside [0,1]; a circle arc through 0 appears split in two.
  const std::vector<std::pair<real, real>>& pieces() const { return pieces_; }

  IntervalSet unite(const IntervalSet& o) const;
  IntervalSet intersect(const IntervalSet& o) const;
  IntervalSet subtract(const IntervalSet& o) const;
  IntervalSet complement() const;
  IntervalSet fatten(real r) const;

  bool operator==(const IntervalSet& o) const { return amb_ == o.amb_ && pieces_ == o.pieces_; }

  // Builds from raw pieces inside [0,1] and canonicalizes.
  static IntervalSet from_pieces(Ambient amb, std::vector<std::pair<real, real>> raw);

 private:
  void add_arc(const Arc& a);
  void canonicalize();
  void require_same(const IntervalSet& o) const;

  Ambient amb_;
  std::vector<std::pair<real, real>> pieces_;
};

std::string describe(const IntervalSet& s);

}  // namespace ergolab
