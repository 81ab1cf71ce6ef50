#include "ergolab/interval_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ergolab {

const char* to_string(Ambient a) { return a == Ambient::circle ? "circle" : "interval"; }

real wrap01(real x) {
  real y = x - std::floor(x);
  if (y >= 1) y -= 1;
  return y;
}

real circle_dist(real x, real y) {
  real d = std::fabs(wrap01(x) - wrap01(y));
  return std::min(d, 1 - d);
}

real ambient_dist(Ambient amb, real x, real y) {
  return amb == Ambient::circle ? circle_dist(x, y) : std::fabs(x - y);
}

bool Arc::contains(real x) const {
  if (ambient == Ambient::interval) return x >= lo && x <= hi;
  real y = wrap01(x);
  if (y < lo) y += 1;
  return y <= hi;
}

Arc Arc::circle(real a, real b) {
  real lo = wrap01(a);
  real hi = wrap01(b);
  if (hi <= lo) hi += 1;
  return Arc{lo, hi, Ambient::circle};
}

Arc Arc::interval(real a, real b) {
  if (!(a < b)) throw std::invalid_argument("interval arc needs lo < hi");
  return Arc{std::max<real>(a, 0), std::min<real>(b, 1), Ambient::interval};
}

Arc Arc::ball(Ambient amb, real c, real r) {
  if (!(r > 0)) throw std::invalid_argument("ball radius must be positive");
  if (amb == Ambient::interval) return Arc::interval(c - r, c + r);
  if (2 * r >= 1) return Arc{0, 1, Ambient::circle};
  real lo = wrap01(c - r);
  return Arc{lo, lo + 2 * r, Ambient::circle};
}

IntervalSet::IntervalSet(Ambient amb, const std::vector<Arc>& arcs) : amb_(amb) {
  for (const Arc& a : arcs) {
    if (a.ambient != amb) throw AmbientMismatch();
    add_arc(a);
  }
  canonicalize();
}

IntervalSet IntervalSet::full(Ambient amb) { return from_pieces(amb, {{0, 1}}); }

IntervalSet IntervalSet::of(const Arc& a) { return IntervalSet(a.ambient, {a}); }

IntervalSet IntervalSet::from_pieces(Ambient amb, std::vector<std::pair<real, real>> raw) {
  IntervalSet s(amb);
  s.pieces_ = std::move(raw);
  s.canonicalize();
  return s;
}

void IntervalSet::add_arc(const Arc& a) {
  if (!(a.hi > a.lo)) return;
  if (amb_ == Ambient::interval) {
    pieces_.emplace_back(std::max<real>(a.lo, 0), std::min<real>(a.hi, 1));
    return;
  }
  if (a.hi - a.lo >= 1) {
    pieces_.emplace_back(0, 1);
    return;
  }
  real lo = wrap01(a.lo);
  real hi = lo + (a.hi - a.lo);
  if (hi <= 1) {
    pieces_.emplace_back(lo, hi);
  } else {
    pieces_.emplace_back(lo, 1);
    pieces_.emplace_back(0, hi - 1);
  }
}

void IntervalSet::canonicalize() {
  for (auto& p : pieces_) {
    p.first = std::max<real>(p.first, 0);
    p.second = std::min<real>(p.second, 1);
  }
  if (!std::is_sorted(pieces_.begin(), pieces_.end())) std::sort(pieces_.begin(), pieces_.end());
  std::vector<std::pair<real, real>> out;
  out.reserve(pieces_.size());
  for (const auto& p : pieces_) {
    if (!(p.second > p.first)) continue;
    if (!out.empty() && p.first <= out.back().second + kGeomTol) {
      out.back().second = std::max(out.back().second, p.second);
    } else {
      out.push_back(p);
    }
  }
  // Snap pieces that reach within tolerance of the ends of [0,1].
  if (!out.empty()) {
    if (out.front().first <= kGeomTol) out.front().first = 0;
    if (out.back().second >= 1 - kGeomTol) out.back().second = 1;
  }
  pieces_ = std::move(out);
}

void IntervalSet::require_same(const IntervalSet& o) const {
  if (amb_ != o.amb_) throw AmbientMismatch();
}

real IntervalSet::measure() const {
  real m = 0;
  for (const auto& p : pieces_) m += p.second - p.first;
  return m;
}

bool IntervalSet::contains(real x) const {
  real y = amb_ == Ambient::circle ? wrap01(x) : x;
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), std::make_pair(y, real(2)));
  if (it == pieces_.begin()) return false;
  --it;
  return y >= it->first && y <= it->second;
}

real IntervalSet::quantile(real u) const {
  if (pieces_.empty()) throw std::domain_error("quantile of an empty set");
  real target = std::clamp(u, real(0), real(1)) * measure();
  for (const auto& [lo, hi] : pieces_) {
    if (target <= hi - lo) return lo + target;
    target -= hi - lo;
  }
  return pieces_.back().second;
}

bool IntervalSet::covers(const Arc& a) const {
  if (a.ambient != amb_) throw AmbientMismatch();
  IntervalSet tmp = IntervalSet::of(a);
  for (const auto& q : tmp.pieces_) {
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), std::make_pair(q.first + kGeomTol, real(2)));
    if (it == pieces_.begin()) return false;
    --it;
    if (!(it->first <= q.first + kGeomTol && it->second >= q.second - kGeomTol)) return false;
  }
  return true;
}

std::vector<Arc> IntervalSet::arcs() const {
  std::vector<Arc> out;
  for (const auto& p : pieces_) out.push_back(Arc{p.first, p.second, amb_});
  if (amb_ == Ambient::circle && out.size() >= 2 && out.front().lo == 0 && out.back().hi == 1) {
    Arc merged{out.back().lo, 1 + out.front().hi, Ambient::circle};
    out.erase(out.begin());
    out.back() = merged;
    std::sort(out.begin(), out.end(), [](const Arc& x, const Arc& y) { return x.lo < y.lo; });
  }
  return out;
}

IntervalSet IntervalSet::unite(const IntervalSet& o) const {
  require_same(o);
  std::vector<std::pair<real, real>> raw = pieces_;
  raw.insert(raw.end(), o.pieces_.begin(), o.pieces_.end());
  return from_pieces(amb_, std::move(raw));
}

IntervalSet IntervalSet::intersect(const IntervalSet& o) const {
  require_same(o);
  std::vector<std::pair<real, real>> raw;
  std::size_t i = 0, j = 0;
  while (i < pieces_.size() && j < o.pieces_.size()) {
    real lo = std::max(pieces_[i].first, o.pieces_[j].first);
    real hi = std::min(pieces_[i].second, o.pieces_[j].second);
    if (hi > lo) raw.emplace_back(lo, hi);
    if (pieces_[i].second < o.pieces_[j].second) {
      ++i;
    } else {
      ++j;
    }
  }
  return from_pieces(amb_, std::move(raw));
}

IntervalSet IntervalSet::complement() const {
  std::vector<std::pair<real, real>> raw;
  real cursor = 0;
  for (const auto& p : pieces_) {
    if (p.first > cursor) raw.emplace_back(cursor, p.first);
    cursor = std::max(cursor, p.second);
  }
  if (cursor < 1) raw.emplace_back(cursor, 1);
  return from_pieces(amb_, std::move(raw));
}

IntervalSet IntervalSet::subtract(const IntervalSet& o) const {
  require_same(o);
  return intersect(o.complement());
}

IntervalSet IntervalSet::fatten(real r) const {
  if (r < 0) throw std::invalid_argument("fatten radius must be non-negative");
  IntervalSet out(amb_);
  for (const auto& p : pieces_) out.add_arc(Arc{p.first - r, p.second + r, amb_});
  out.canonicalize();
  return out;
}

std::string describe(const IntervalSet& s) {
  std::ostringstream os;
  os << to_string(s.ambient()) << "{";
  bool first = true;
  char buf[96];
  for (const Arc& a : s.arcs()) {
    std::snprintf(buf, sizeof buf, "%s[%.15Lg,%.15Lg]", first ? "" : ",", a.lo, a.hi);
    os << buf;
    first = false;
  }
  os << "}";
  return os.str();
}

}  // namespace ergolab
