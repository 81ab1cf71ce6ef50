#include "ergolab/tower_builder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <sstream>

#include "ergolab/io.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/rng.hpp"
#include "json.hpp"

namespace ergolab {

namespace {

constexpr std::uint64_t kSeedTag = 0x70e1;
constexpr int kCopyOffset = 2;
constexpr int kCopySlots = 5;
constexpr std::size_t kSeedChunk = 128;

Arc lifted_arc(Ambient amb, real lo, real hi) {
  if (lo > hi) std::swap(lo, hi);
  if (amb == Ambient::interval) return Arc::interval(lo, hi);
  real l = wrap01(lo);
  return Arc{l, l + (hi - lo), Ambient::circle};
}

enum Label : unsigned char { kA, kT1, kT2, kHole };

// Piecewise-constant labels on [lo, hi]; starts[i] begins segment i.
class Painter {
 public:
  Painter(real lo, real hi) : lo_(lo), hi_(hi), starts_{lo}, labels_{kA} {}

  void paint(real a, real b, Label l) {
    a = std::max(a, lo_);
    b = std::min(b, hi_);
    if (!(b > a)) return;
    std::vector<real> s;
    std::vector<Label> lab;
    for (std::size_t i = 0; i < starts_.size(); ++i) {
      real s0 = starts_[i];
      real s1 = i + 1 < starts_.size() ? starts_[i + 1] : hi_;
      Label old = labels_[i];
      auto push = [&](real x0, real x1, Label v) {
        if (!(x1 > x0)) return;
        if (!lab.empty() && lab.back() == v) return;
        s.push_back(x0);
        lab.push_back(v);
      };
      if (s1 <= a || s0 >= b) {
        push(s0, s1, old);
        continue;
      }
      Label nv = old == kHole ? kHole : l;
      push(s0, std::max(s0, a), old);
      push(std::max(s0, a), std::min(s1, b), nv);
      push(std::min(s1, b), s1, old);
    }
    starts_ = std::move(s);
    labels_ = std::move(lab);
  }

  std::size_t size() const { return starts_.size(); }
  real start(std::size_t i) const { return starts_[i]; }
  real end(std::size_t i) const { return i + 1 < starts_.size() ? starts_[i + 1] : hi_; }
  Label label(std::size_t i) const { return labels_[i]; }
  real lo() const { return lo_; }
  real hi() const { return hi_; }

 private:
  real lo_, hi_;
  std::vector<real> starts_;
  std::vector<Label> labels_;
};

struct Shared {
  const IntervalMap& m;
  const ExpansionConfig& c;
  const TowerConfig& cfg;
  const BaseGeometry& base;
  const RingSystem& rings;
  double eps;
  bool circle;
  real p;
  real d0, r1, r2, r3;
  double d1;
};

enum MemoBits : unsigned char { kEvaluated = 1, kAccepted = 2, kViolation = 4, kResolved = 8 };

class SeedChain {
 public:
  SeedChain(const Shared& g, const BranchOrbit& o, std::vector<PartitionElement>& found)
      : g_(g), o_(o), found_(found), memo_(o.digits.size() + 1, std::array<unsigned char, kCopySlots>{}) {
    const std::size_t n = o.digits.size();
    orient_.assign(n + 1, 1);
    for (std::size_t j = 0; j < n; ++j) orient_[j + 1] = orient_[j] * g.m.orientation(o.digits[j]);
  }

  // Flags for the element at time n whose image is the base annulus copy p + k.
  unsigned char status(std::size_t n, int k) {
    const int slot = k + kCopyOffset;
    if (slot < 0 || slot >= kCopySlots) throw NumericalError("tower: base copy index out of range");
    unsigned char& v = memo_[n][slot];
    if (!(v & kEvaluated)) v = evaluate(n, k);
    return v;
  }

 private:
  // Positions at times 0..n of the point y at time n, pulled back along the digits.
  std::vector<real> chain(real y, std::size_t n) const {
    std::vector<real> v(n + 1);
    v[n] = y;
    for (std::size_t j = n; j-- > 0;) v[j] = g_.m.inverse(o_.digits[j], v[j + 1]);
    return v;
  }

  real pull(real y, std::size_t from, std::size_t to) const {
    for (std::size_t j = from; j-- > to;) y = g_.m.inverse(o_.digits[j], y);
    return y;
  }

  // Orientation of the pull-back from time `from` down to `to`.
  int orientation(std::size_t from, std::size_t to) const { return orient_[from] * orient_[to]; }

  // Time-n coordinate whose pull-back to time h equals y; clamped to [lo, hi].
  real to_window(real y, std::size_t n, std::size_t h, real lo, real hi, real img_lo, real img_hi) const {
    const int o = orientation(n, h);
    if (y <= img_lo) return o > 0 ? lo : hi;
    if (y >= img_hi) return o > 0 ? hi : lo;
    real a = lo, b = hi;
    for (int it = 0; it < 80 && b - a > 0; ++it) {
      real mid = a + (b - a) / 2;
      if (mid <= a || mid >= b) break;
      real v = pull(mid, n, h);
      bool below = o > 0 ? v < y : v > y;
      if (below) a = mid;
      else b = mid;
    }
    return a + (b - a) / 2;
  }

  bool hyperbolic_preball(std::size_t n, real centre, const std::vector<real>& wl, const std::vector<real>& wr,
                          std::size_t& m_found, double& centre_log_derivative) const {
    const real offsets[5] = {0, -g_.d0, g_.d0, -g_.r2, g_.r2};
    const std::size_t m_lo = n > g_.base.n0 + 1 ? n - g_.base.n0 : 1;
    bool ok = false;
    for (int qi = 0; qi < 5; ++qi) {
      std::vector<real> q = chain(centre + offsets[qi], n);
      std::vector<double> le(n), ld(n, 0.0);
      double sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        le[j] = std::log(static_cast<double>(g_.m.slope(q[j])));
        sum += le[j];
        if (g_.m.has_singular_set()) ld[j] = std::log(dist_delta(g_.m, pt(static_cast<double>(q[j])), g_.c.delta_hyp));
      }
      if (qi == 0) centre_log_derivative = sum;
      std::vector<std::size_t> times = hyperbolic_times_from_terms(le, ld, g_.c.sigma, g_.c.b);
      std::vector<char> flag(n + 1, 0);
      for (std::size_t t : times) flag[t] = 1;
      for (std::size_t mm = n; mm >= m_lo && !ok; --mm) {
        if (flag[mm] && std::fabs(wl[mm] - q[mm]) <= g_.d1 && std::fabs(wr[mm] - q[mm]) <= g_.d1 &&
            (g_.circle || (q[mm] - g_.d1 >= 0 && q[mm] + g_.d1 <= 1))) {
          m_found = mm;
          ok = true;
        }
      }
      if (ok) break;
    }
    return ok;
  }

  unsigned char evaluate(std::size_t n, int k) {
    const real centre = g_.p + k;
    std::vector<real> wl = chain(centre - g_.r3, n);
    std::vector<real> wr = chain(centre + g_.r3, n);

    // The candidate must lie inside one copy of the base ball at time 0.
    const real a0 = std::min(wl[0], wr[0]), b0 = std::max(wl[0], wr[0]);
    const long k0 = g_.circle ? std::lround(static_cast<double>((a0 + b0) / 2 - g_.p)) : 0;
    const real base_lo = g_.p + k0 - g_.d0, base_hi = g_.p + k0 + g_.d0;
    if (a0 < base_lo || b0 > base_hi) return kEvaluated;

    std::size_t m_found = 0;
    double log_der = 0;
    if (!hyperbolic_preball(n, centre, wl, wr, m_found, log_der)) return kEvaluated;

    const real wlo = centre - g_.r3, whi = centre + g_.r3;
    const real flo = wlo - g_.eps, fhi = whi + g_.eps;
    std::vector<real> fl = chain(flo, n), fr = chain(fhi, n);
    Painter paint(flo, fhi);

    auto paint_region = [&](std::size_t h, real y0, real y1, Label l, real ilo, real ihi) -> bool {
      if (!(y1 > ilo && y0 < ihi)) return true;
      real u0 = to_window(y0, n, h, flo, fhi, ilo, ihi);
      real u1 = to_window(y1, n, h, flo, fhi, ilo, ihi);
      if (u0 > u1) std::swap(u0, u1);
      if (l == kHole && u1 > wlo && u0 < whi) return false;
      paint.paint(u0, u1, l);
      return true;
    };

    // Points outside the base at time 0.
    {
      real ilo = std::min(fl[0], fr[0]), ihi = std::max(fl[0], fr[0]);
      paint_region(0, ilo - 1, base_lo, kHole, ilo, ihi);
      paint_region(0, base_hi, ihi + 1, kHole, ilo, ihi);
    }

    for (std::size_t h = g_.cfg.r0 + 1; h < n; ++h) {
      const real ilo = std::min(fl[h], fr[h]), ihi = std::max(fl[h], fr[h]);
      long kmin = 0, kmax = 0;
      if (g_.circle) {
        kmin = static_cast<long>(std::ceil(static_cast<double>(ilo - g_.p - g_.r1)));
        kmax = static_cast<long>(std::floor(static_cast<double>(ihi - g_.p + g_.r1)));
      }
      for (long kk = kmin; kk <= kmax; ++kk) {
        const real cc = g_.p + kk;
        if (!(ihi > cc - g_.r1 && ilo < cc + g_.r1)) continue;
        if (!(status(h, static_cast<int>(kk)) & kAccepted)) continue;
        const real t1 = g_.rings.inner_threshold(n - h);      // t_{n-1} >= 1 inside
        const real t2 = g_.rings.inner_threshold(n - h + 1);  // t_{n-1} >= 2 inside
        if (!paint_region(h, cc - g_.d0, cc + g_.d0, kHole, ilo, ihi)) return kEvaluated;
        for (int side : {-1, 1}) {
          auto seg = [&](real r_in, real r_out, Label l) {
            if (!(r_out > r_in)) return;
            real y0 = side > 0 ? cc + r_in : cc - r_out;
            real y1 = side > 0 ? cc + r_out : cc - r_in;
            paint_region(h, y0, y1, l, ilo, ihi);
          };
          seg(g_.d0, t2, kT2);
          seg(std::max<real>(t2, g_.d0), t1, kT1);
          seg(std::max<real>(t1, g_.d0), g_.r1, kA);
        }
      }
    }

    // Every non-A run meeting the candidate must be within eps of an A end.
    const std::size_t segs = paint.size();
    std::size_t i = 0;
    while (i < segs) {
      if (paint.label(i) == kA) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < segs && paint.label(j + 1) != kA) ++j;
      const real s0 = paint.start(i), s1 = paint.end(j);
      const real u0 = std::max(s0, wlo), u1 = std::min(s1, whi);
      if (u1 > u0) {
        for (std::size_t q = i; q <= j; ++q)
          if (paint.label(q) == kHole && std::min(paint.end(q), whi) > std::max(paint.start(q), wlo)) return kEvaluated;
        const bool left = s0 > paint.lo();
        const bool right = s1 < paint.hi();
        const real e = static_cast<real>(g_.eps);
        bool ok = (left && u1 < s0 + e) || (right && u0 > s1 - e) || (left && right && s1 - s0 < 2 * e);
        if (!ok) return kEvaluated;
      }
      i = j + 1;
    }

    unsigned char flags = kEvaluated | kAccepted;
    for (std::size_t q = 0; q < segs; ++q) {
      if (paint.label(q) != kT2) continue;
      if (std::min(paint.end(q), centre + g_.r1) > std::max(paint.start(q), centre - g_.r1)) flags |= kViolation;
    }
    auto log_slope_at = [&](real y) {
      std::vector<real> q = chain(y, n);
      double sum = 0;
      for (std::size_t j = 0; j < n; ++j) sum += std::log(static_cast<double>(g_.m.slope(q[j])));
      return sum;
    };
    // The endpoint images are only trustworthy at 1e-9 while the derivative
    // there stays below the resolution bound.
    if (log_der <= g_.cfg.resolution_log && log_slope_at(centre - g_.d0) <= g_.cfg.resolution_log &&
        log_slope_at(centre + g_.d0) <= g_.cfg.resolution_log) {
      flags |= kResolved;
      PartitionElement e;
      const Ambient amb = g_.base.ambient;
      const real radii[3] = {g_.d0, g_.r1, g_.r2};
      for (int u = 0; u < 3; ++u)
        e.u[u] = lifted_arc(amb, pull(centre - radii[u], n, 0), pull(centre + radii[u], n, 0));
      e.u[3] = lifted_arc(amb, a0, b0);
      e.r = n;
      e.n_hyp = m_found;
      e.extra = n - m_found;
      e.copy = k;
      e.digits.assign(o_.digits.begin(), o_.digits.begin() + static_cast<long>(n));
      e.log_derivative = log_der;
      found_.push_back(std::move(e));
    }
    return flags;
  }

  const Shared& g_;
  const BranchOrbit& o_;
  std::vector<PartitionElement>& found_;
  std::vector<std::array<unsigned char, kCopySlots>> memo_;
  std::vector<int> orient_;
};

BranchOrbit seed_orbit(const IntervalMap& m, real x0, std::size_t n, std::uint64_t stream) {
  try {
    return m.branch_orbit(x0, n, stream);
  } catch (const SingularPoint&) {
    BranchOrbit o;
    real x = x0;
    o.x.push_back(x);
    for (std::size_t j = 0; j < n; ++j) {
      int b = m.branch_of(x);
      if (b < 0 || b >= m.branch_count()) break;
      real y = m.forward(x);
      if (!std::isfinite(static_cast<double>(y))) break;
      o.digits.push_back(b);
      o.x.push_back(y);
      x = y;
      if (m.ambient() == Ambient::interval && (x <= 0 || x >= 1)) break;
    }
    return o;
  }
}

void add_counts(StepRecord& into, const StepRecord& from) {
  into.alive += from.alive;
  into.in_a += from.in_a;
  into.in_b += from.in_b;
  into.returned += from.returned;
  into.lost += from.lost;
  into.a_to_a += from.a_to_a;
  into.a_to_b += from.a_to_b;
  into.a_to_r += from.a_to_r;
  into.b_to_a += from.b_to_a;
  into.b_to_b += from.b_to_b;
  into.b_to_r += from.b_to_r;
  into.a_prev_hyp += from.a_prev_hyp;
  into.collar_violations += from.collar_violations;
  into.unresolved_returns += from.unresolved_returns;
}

real u0_key(const PartitionElement& e) { return e.u[0].lo; }

std::vector<PartitionElement> dedupe(std::vector<PartitionElement> v, Ambient amb) {
  std::sort(v.begin(), v.end(), [](const PartitionElement& a, const PartitionElement& b) {
    if (a.r != b.r) return a.r < b.r;
    return u0_key(a) < u0_key(b);
  });
  std::vector<PartitionElement> out;
  for (auto& e : v) {
    if (!out.empty() && out.back().r == e.r && ambient_dist(amb, u0_key(out.back()), u0_key(e)) < 1e-13L) continue;
    out.push_back(std::move(e));
  }
  // The same element may be reported once just below 1 and once just above 0.
  if (amb == Ambient::circle) {
    std::vector<PartitionElement> kept;
    std::size_t group = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i == 0 || out[i].r != out[i - 1].r) group = kept.size();
      if (kept.size() > group && circle_dist(u0_key(kept[group]), u0_key(out[i])) < 1e-13L) continue;
      kept.push_back(std::move(out[i]));
    }
    out = std::move(kept);
  }
  return out;
}

void push_pieces(Ambient amb, real lo, real hi, std::size_t key, std::vector<CollarPiece>& out) {
  if (lo > hi) std::swap(lo, hi);
  if (!(hi > lo)) return;
  if (amb == Ambient::interval) {
    out.push_back({std::max<real>(lo, 0), std::min<real>(hi, 1), key});
    return;
  }
  real l = wrap01(lo), h = l + (hi - lo);
  if (h <= 1) {
    out.push_back({l, h, key});
  } else {
    out.push_back({l, 1, key});
    out.push_back({0, h - 1, key});
  }
}

// Time-0 pieces of the ring annuli of element e, keyed by ring index.  Rings
// narrower than the geometry tolerance join the innermost kept ring's
// remainder, which is assigned to ring k_ring.
void element_rings(const IntervalMap& m, const TowerRun& run, const PartitionElement& e, std::size_t offset,
                   std::vector<CollarPiece>& out) {
  const Ambient amb = run.base.ambient;
  const real centre = run.base.p + e.copy;
  auto pull = [&](real y) {
    for (std::size_t j = e.r; j-- > 0;) y = m.inverse(e.digits[j], y);
    return y;
  };
  const real d0 = static_cast<real>(run.base.delta0);
  real prev_l = pull(centre - 2 * d0);
  real prev_r = pull(centre + 2 * d0);
  const real inner_l = pull(centre - d0);
  const real inner_r = pull(centre + d0);
  for (std::size_t s = 1; s <= run.rings.k_ring; ++s) {
    bool last = s == run.rings.k_ring;
    real l = inner_l, r = inner_r;
    if (!last) {
      const real rad = static_cast<real>(run.rings.boundary(s));
      l = pull(centre - rad);
      r = pull(centre + rad);
      if (std::fabs(l - inner_l) < 1e-13L || std::fabs(r - inner_r) < 1e-13L) {
        last = true;
        l = inner_l;
        r = inner_r;
      }
    }
    const std::size_t key = offset + (last ? run.rings.k_ring : s);
    push_pieces(amb, prev_l, l, key, out);
    push_pieces(amb, prev_r, r, key, out);
    prev_l = l;
    prev_r = r;
    if (last) break;
  }
}

// Removes the sorted disjoint `holes` from the sorted collar pieces.
std::vector<CollarPiece> cut(const std::vector<CollarPiece>& v, const std::vector<std::pair<real, real>>& holes) {
  std::vector<CollarPiece> out;
  out.reserve(v.size());
  std::size_t h = 0;
  for (const CollarPiece& c : v) {
    real lo = c.lo;
    while (h < holes.size() && holes[h].second <= lo) ++h;
    for (std::size_t q = h; q < holes.size() && holes[q].first < c.hi; ++q) {
      if (holes[q].first > lo) out.push_back({lo, holes[q].first, c.expiry});
      lo = std::max(lo, holes[q].second);
    }
    if (c.hi > lo) out.push_back({lo, c.hi, c.expiry});
  }
  return out;
}

IntervalSet collar_set(Ambient amb, const std::vector<CollarPiece>& v, std::size_t above) {
  std::vector<std::pair<real, real>> raw;
  raw.reserve(v.size());
  for (const CollarPiece& c : v)
    if (c.expiry > above) raw.emplace_back(c.lo, c.hi);
  return IntervalSet::from_pieces(amb, std::move(raw));
}

double exact_a_eps_widening(const IntervalMap& m, real z, std::size_t steps, double eps) {
  double log_d = 0;
  real x = z;
  for (std::size_t j = 0; j < steps; ++j) {
    log_d += std::log(static_cast<double>(m.slope(x)));
    if (eps * std::exp(-log_d) < 1e-13) return 0;
    x = m.forward(x);
  }
  return eps * std::exp(-log_d);
}

std::string fmt_long(real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.21Lg", v);
  return buf;
}

real parse_long(const nlohmann::json& j) { return std::strtold(j.get<std::string>().c_str(), nullptr); }

}  // namespace

RingSystem RingSystem::make(double delta0, double sigma, double tau) {
  if (!(delta0 > 0) || !(sigma > 0 && sigma < 1)) throw std::invalid_argument("RingSystem: need delta0 > 0, 0 < sigma < 1");
  RingSystem rs;
  rs.delta0 = delta0;
  rs.sigma = sigma;
  // Width of ring k: delta0 sigma^{k/2} (sigma^{-1/2} - 1).
  const double w1 = delta0 * (1 / std::sqrt(sigma) - 1);
  std::size_t k = 1;
  while (w1 * std::pow(sigma, k / 2.0) >= tau) ++k;
  rs.k_ring = k;
  return rs;
}

double RingSystem::boundary(std::size_t k) const { return delta0 * (1 + std::pow(sigma, k / 2.0)); }

double RingSystem::inner_threshold(std::size_t j) const {
  if (j == 0) return 2 * delta0;
  if (j > k_ring) return delta0;
  return boundary(j - 1);
}

std::size_t ring_index(const RingSystem& rs, double dist) {
  if (!(dist > rs.delta0 && dist <= 2 * rs.delta0))
    throw std::domain_error("ring_index: distance outside (delta0, 2 delta0]");
  const double u = dist / rs.delta0 - 1;
  const double v = 2 * std::log(u) / std::log(rs.sigma);
  std::size_t k = static_cast<std::size_t>(std::floor(std::max(0.0, v))) + 1;
  return std::min(k, rs.k_ring);
}

double collar_epsilon_bound(const BaseGeometry& g, double sigma) {
  return std::pow(sigma, g.n0 / 2.0) * g.delta0 * (1 / std::sqrt(sigma) - 1) / g.c0;
}

double TowerRun::sampled_delta(std::size_t n) const {
  return base_measure() * static_cast<double>(steps.at(n).alive) / static_cast<double>(config.seeds);
}

double TowerRun::sampled_delta_stderr(std::size_t n) const {
  const double f = static_cast<double>(steps.at(n).alive) / static_cast<double>(config.seeds);
  return base_measure() * std::sqrt(f * (1 - f) / static_cast<double>(config.seeds));
}

double TowerRun::sampled_a(std::size_t n) const {
  return base_measure() * static_cast<double>(steps.at(n).in_a) / static_cast<double>(config.seeds);
}

double TowerRun::sampled_b(std::size_t n) const {
  return base_measure() * static_cast<double>(steps.at(n).in_b) / static_cast<double>(config.seeds);
}

double TowerRun::sampled_r_eq(std::size_t n) const {
  return base_measure() * static_cast<double>(steps.at(n).returned) / static_cast<double>(config.seeds);
}

std::vector<std::pair<IntervalSet, int>> TowerState::t_levels() const {
  std::map<std::size_t, std::vector<std::pair<real, real>>> by_key;
  for (const CollarPiece& c : collar)
    if (c.expiry > n) by_key[c.expiry].emplace_back(c.lo, c.hi);
  std::vector<std::pair<IntervalSet, int>> out;
  for (auto& [key, raw] : by_key) {
    IntervalSet s = IntervalSet::from_pieces(delta.ambient(), std::move(raw));
    if (!s.empty()) out.emplace_back(std::move(s), static_cast<int>(key - n));
  }
  return out;
}

TowerState initial_state(const TowerRun& run) {
  TowerState st;
  st.n = 0;
  st.delta = IntervalSet::of(run.base.ball(0));
  st.a = st.delta;
  st.a_eps = st.delta;
  st.b = IntervalSet(run.base.ambient);
  st.r_measure.push_back(0);
  return st;
}

TowerState tower_step(const IntervalMap& m, const TowerRun& run, const TowerState& st) {
  TowerState next;
  next.n = st.n + 1;
  const std::size_t n = next.n;
  const Ambient amb = run.base.ambient;
  next.finished = st.finished;
  next.r_measure = st.r_measure;

  auto first = std::lower_bound(run.elements.begin(), run.elements.end(), n,
                                [](const PartitionElement& e, std::size_t r) { return e.r < r; });
  IntervalSet u0(amb), u1(amb);
  std::vector<std::size_t> fresh;
  for (auto it = first; it != run.elements.end() && it->r == n; ++it) {
    const std::size_t idx = static_cast<std::size_t>(it - run.elements.begin());
    fresh.push_back(idx);
    next.finished.push_back(idx);
    u0 = u0.unite(IntervalSet::of(it->u[0]));
    u1 = u1.unite(IntervalSet::of(it->u[1]));
  }
  next.delta = fresh.empty() ? st.delta : st.delta.subtract(u0);
  next.r_measure.push_back(static_cast<double>(u0.measure()));

  double total = static_cast<double>(next.delta.measure());
  for (double v : next.r_measure) total += v;
  const double base = static_cast<double>(IntervalSet::of(run.base.ball(0)).measure());
  if (std::fabs(total - base) > 1e-12) {
    std::ostringstream msg;
    msg << "conservation failed at n=" << n << ": measure(Delta_0)=" << fmt_real(base)
        << " but measure(Delta_n)+sum measure(R=k)=" << fmt_real(total) << " (diff " << fmt_real(total - base)
        << ")";
    throw InconsistentState(msg.str());
  }

  std::vector<CollarPiece> kept;
  kept.reserve(st.collar.size());
  for (const CollarPiece& c : st.collar)
    if (c.expiry > n) kept.push_back(c);
  if (!fresh.empty()) {
    kept = cut(kept, u1.pieces());
    std::vector<CollarPiece> added;
    for (std::size_t idx : fresh) element_rings(m, run, run.elements[idx], n, added);
    std::sort(added.begin(), added.end(), [](const CollarPiece& x, const CollarPiece& y) { return x.lo < y.lo; });
    next.collar.reserve(kept.size() + added.size());
    std::merge(kept.begin(), kept.end(), added.begin(), added.end(), std::back_inserter(next.collar),
               [](const CollarPiece& x, const CollarPiece& y) { return x.lo < y.lo; });
  } else {
    next.collar = std::move(kept);
  }

  IntervalSet b = collar_set(amb, next.collar, n);
  next.b = b.intersect(next.delta);
  if (next.b.measure() + 1e-12L < b.measure()) {
    std::ostringstream msg;
    msg << "B_n leaves Delta_n at n=" << n << ": " << describe(b.subtract(next.delta));
    throw InconsistentState(msg.str());
  }
  next.a = next.delta.subtract(next.b);

  if (run.eps == 0 || next.b.empty()) {
    next.a_eps = next.a;
  } else {
    std::vector<std::pair<real, real>> widen;
    const real probe = 10 * kGeomTol;
    for (const auto& [lo, hi] : next.b.pieces()) {
      for (int side : {-1, 1}) {
        real z = side < 0 ? lo : hi;
        real outside = z + side * probe;
        if (amb == Ambient::interval && (outside < 0 || outside > 1)) continue;
        if (!next.a.contains(amb == Ambient::circle ? wrap01(outside) : outside)) continue;
        double w = exact_a_eps_widening(m, z, n + 1, run.eps);
        if (w <= 1e-13) continue;
        real a0 = side < 0 ? z : z - w, a1 = side < 0 ? z + w : z;
        if (amb == Ambient::interval) {
          a0 = std::max<real>(a0, 0);
          a1 = std::min<real>(a1, 1);
        }
        for (const auto& q : IntervalSet::of(lifted_arc(amb, a0, a1)).pieces()) widen.push_back(q);
      }
    }
    next.a_eps = next.a.unite(IntervalSet::from_pieces(amb, std::move(widen)).intersect(next.b));
  }
  return next;
}

CollarReport collar_check(const TowerRun& run, const TowerState& prev, const TowerState& next) {
  CollarReport rep;
  rep.n = next.n;
  if (next.n <= run.config.r0) return rep;
  // t_{n-1} = expiry - (n-1) > 1
  IntervalSet hot = collar_set(run.base.ambient, prev.collar, next.n);
  if (hot.empty()) return rep;
  for (std::size_t idx : next.finished) {
    const PartitionElement& e = run.elements[idx];
    if (e.r != next.n) continue;
    double ov = static_cast<double>(IntervalSet::of(e.u[1]).intersect(hot).measure());
    if (ov > static_cast<double>(kGeomTol)) {
      rep.pass = false;
      rep.offending.push_back(idx);
      rep.overlap += ov;
    }
  }
  return rep;
}

TowerRun run_tower(const IntervalMap& m, const ExpansionConfig& c, const TowerConfig& cfg, unsigned threads) {
  if (cfg.seeds == 0) throw ConfigError("seeds_positive", "seeds must be > 0");
  c.validate(m);
  TowerRun run;
  run.model = m.name();
  run.model_parameters = m.parameters();
  run.config = cfg;
  run.expansion = c;
  run.base = make_base_geometry(m, cfg.delta0, cfg.delta1, cfg.strict_base);
  run.rings = RingSystem::make(cfg.delta0, c.sigma);
  run.eps_bound = collar_epsilon_bound(run.base, c.sigma);
  if (cfg.epsilon_zero) {
    run.eps = 0;
  } else {
    run.eps = cfg.eps < 0 ? 0.5 * run.eps_bound : cfg.eps;
    if (!(run.eps < run.eps_bound) && !cfg.allow_eps_above_bound) {
      throw ConfigError("collar_epsilon_bound",
                        "eps=" + fmt_real(run.eps) + " must be below " + fmt_real(run.eps_bound));
    }
  }

  const std::size_t n_max = cfg.n_max;
  const bool circle = m.ambient() == Ambient::circle;
  Shared g{m,
           c,
           cfg,
           run.base,
           run.rings,
           run.eps,
           circle,
           run.base.p,
           static_cast<real>(run.base.delta0),
           static_cast<real>(run.base.radius(1)),
           static_cast<real>(run.base.radius(2)),
           static_cast<real>(run.base.radius(3)),
           cfg.delta1};

  const std::size_t chunks = chunk_count(cfg.seeds, kSeedChunk);
  std::vector<std::vector<StepRecord>> partial(chunks);
  std::vector<std::vector<PartitionElement>> found(chunks);

  parallel_chunks(cfg.seeds, kSeedChunk, threads, [&](const ChunkRange& cr) {
    std::vector<StepRecord> rec(n_max + 1);
    std::vector<PartitionElement>& elems = found[cr.index];
    for (std::size_t i = cr.begin; i < cr.end; ++i) {
      real x0 = g.p - g.d0 + 2 * g.d0 * (static_cast<real>(i) + 0.5L) / static_cast<real>(cfg.seeds);
      if (circle) x0 = wrap01(x0);
      BranchOrbit o = seed_orbit(m, x0, n_max, substream(cfg.seed, kSeedTag, i));
      const std::size_t len = o.digits.size();
      std::vector<double> le(len), ld(len, 0.0);
      for (std::size_t j = 0; j < len; ++j) {
        le[j] = std::log(static_cast<double>(m.slope(o.x[j])));
        if (m.has_singular_set()) ld[j] = std::log(dist_delta(m, pt(static_cast<double>(o.x[j])), c.delta_hyp));
      }
      std::vector<char> hyp(n_max + 1, 0);
      for (std::size_t t : hyperbolic_times_from_terms(le, ld, c.sigma, c.b)) hyp[t] = 1;

      SeedChain chain(g, o, elems);
      std::size_t expiry = 0;  // t_n = expiry - n
      rec[0].alive++;
      rec[0].in_a++;
      for (std::size_t n = 1; n <= n_max; ++n) {
        const bool was_b = expiry > n - 1;
        bool returned = false;
        if (n > cfg.r0 && n <= len) {
          const real x = o.x[n];
          const long k = circle ? std::lround(static_cast<double>(x - g.p)) : 0;
          const real d = std::fabs(x - g.p - k);
          if (d <= g.r1) {
            unsigned char s = chain.status(n, static_cast<int>(k));
            if (s & kAccepted) {
              if (s & kViolation) rec[n].collar_violations++;
              if (d <= g.d0) {
                returned = true;
                if (!(s & kResolved)) rec[n].unresolved_returns++;
              } else {
                expiry = n + ring_index(run.rings, static_cast<double>(d));
              }
            }
          }
        }
        if (n > len) rec[n].lost++;
        if (!was_b && hyp[n]) rec[n].a_prev_hyp++;
        if (returned) {
          rec[n].returned++;
          (was_b ? rec[n].b_to_r : rec[n].a_to_r)++;
          break;
        }
        const bool is_b = expiry > n;
        rec[n].alive++;
        (is_b ? rec[n].in_b : rec[n].in_a)++;
        if (was_b) (is_b ? rec[n].b_to_b : rec[n].b_to_a)++;
        else (is_b ? rec[n].a_to_b : rec[n].a_to_a)++;
      }
    }
    partial[cr.index] = std::move(rec);
  });

  run.steps.assign(n_max + 1, StepRecord{});
  for (std::size_t n = 0; n <= n_max; ++n) {
    run.steps[n].n = n;
    for (const auto& p : partial) add_counts(run.steps[n], p[n]);
  }
  std::vector<PartitionElement> all;
  for (auto& f : found)
    for (auto& e : f) all.push_back(std::move(e));
  run.elements = dedupe(std::move(all), run.base.ambient);

  // Pairwise disjointness of the recorded U^0.
  {
    std::vector<std::pair<real, real>> pieces;
    for (const auto& e : run.elements) {
      real lo = e.u[0].lo, hi = e.u[0].hi;
      if (hi > 1) {
        pieces.emplace_back(lo, 1);
        pieces.emplace_back(0, hi - 1);
      } else {
        pieces.emplace_back(lo, hi);
      }
    }
    std::sort(pieces.begin(), pieces.end());
    for (std::size_t i = 1; i < pieces.size(); ++i)
      if (pieces[i].first < pieces[i - 1].second - kGeomTol) ++run.overlaps;
    if (run.overlaps > 0)
      throw InconsistentState("recorded U^0 overlap in " + std::to_string(run.overlaps) + " adjacent pairs");
  }

  TowerState st = initial_state(run);
  const double base = run.base_measure();
  run.steps[0].exact_delta = base;
  run.steps[0].exact_a = base;
  run.steps[0].exact_a_eps = base;
  for (std::size_t n = 1; n <= n_max; ++n) {
    StepRecord& r = run.steps[n];
    if (cfg.exact_view) {
      TowerState nx = tower_step(m, run, st);
      if (n > cfg.r0) {
        CollarReport cr = collar_check(run, st, nx);
        r.exact_collar_failures = cr.offending.size();
        run.collar.push_back(std::move(cr));
      }
      st = std::move(nx);
      r.exact_delta = static_cast<double>(st.delta.measure());
      r.exact_r_eq_n = st.r_measure.back();
      r.elements_cumulative = st.finished.size();
      r.exact_a = static_cast<double>(st.a.measure());
      r.exact_b = static_cast<double>(st.b.measure());
      r.exact_a_eps = static_cast<double>(st.a_eps.measure());
    } else {
      std::size_t count = 0;
      for (const auto& e : run.elements) count += e.r <= n;
      r.elements_cumulative = count;
    }
  }
  return run;
}

void write_tower_manifest(std::ostream& out, const TowerRun& run) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["kind"] = "tower";
  j["model"] = run.model;
  j["model_parameters"] = run.model_parameters;
  const TowerConfig& c = run.config;
  j["config"] = {{"delta0", c.delta0},
                 {"delta1", c.delta1},
                 {"eps", run.eps},
                 {"eps_bound", run.eps_bound},
                 {"epsilon_mode", c.epsilon_zero ? "zero" : "fatten"},
                 {"allow_eps_above_bound", c.allow_eps_above_bound},
                 {"r0", c.r0},
                 {"n_max", c.n_max},
                 {"seeds", c.seeds},
                 {"seed", c.seed},
                 {"strict_base", c.strict_base},
                 {"resolution_log", c.resolution_log},
                 {"exact_view", c.exact_view}};
  const ExpansionConfig& e = run.expansion;
  j["expansion"] = {{"lambda", e.lambda},       {"expansion_threshold", e.expansion_threshold},
                    {"eps_rec", e.eps_rec},     {"delta_rec", e.delta_rec},
                    {"sigma", e.sigma},         {"delta_hyp", e.delta_hyp},
                    {"b", e.b},                 {"horizon", e.horizon}};
  j["base"] = {{"p", fmt_long(run.base.p)}, {"n0", run.base.n0}, {"c0", run.base.c0}, {"d0", run.base.d0}};
  j["k_ring"] = run.rings.k_ring;
  j["overlaps"] = run.overlaps;
  ordered_json steps = ordered_json::array();
  for (const StepRecord& s : run.steps) {
    steps.push_back({{"n", s.n},
                     {"alive", s.alive},
                     {"in_a", s.in_a},
                     {"in_b", s.in_b},
                     {"returned", s.returned},
                     {"lost", s.lost},
                     {"a_to_a", s.a_to_a},
                     {"a_to_b", s.a_to_b},
                     {"a_to_r", s.a_to_r},
                     {"b_to_a", s.b_to_a},
                     {"b_to_b", s.b_to_b},
                     {"b_to_r", s.b_to_r},
                     {"a_prev_hyp", s.a_prev_hyp},
                     {"collar_violations", s.collar_violations},
                     {"unresolved_returns", s.unresolved_returns},
                     {"exact_delta", s.exact_delta},
                     {"exact_r_eq_n", s.exact_r_eq_n},
                     {"elements_cumulative", s.elements_cumulative},
                     {"exact_a", s.exact_a},
                     {"exact_b", s.exact_b},
                     {"exact_a_eps", s.exact_a_eps},
                     {"exact_collar_failures", s.exact_collar_failures}});
  }
  j["steps"] = std::move(steps);
  ordered_json elems = ordered_json::array();
  for (const PartitionElement& el : run.elements) {
    ordered_json u = ordered_json::array();
    for (const Arc& a : el.u) u.push_back({fmt_long(a.lo), fmt_long(a.hi)});
    elems.push_back({{"lo", static_cast<double>(el.u[0].lo)},
                     {"hi", static_cast<double>(el.u[0].hi)},
                     {"R", el.r},
                     {"n_hyp", el.n_hyp},
                     {"m", el.extra},
                     {"copy", el.copy},
                     {"log_derivative", el.log_derivative},
                     {"u", std::move(u)},
                     {"digits", el.digits}});
  }
  j["elements"] = std::move(elems);
  out << j.dump(1) << "\n";
}

TowerRun read_tower_manifest(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw VerificationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("kind").get<std::string>() != "tower") throw VerificationError("manifest kind is not 'tower'");
    TowerRun run;
    run.model = j.at("model").get<std::string>();
    run.model_parameters = j.at("model_parameters").get<std::map<std::string, double>>();
    const auto& c = j.at("config");
    run.config.delta0 = c.at("delta0").get<double>();
    run.config.delta1 = c.at("delta1").get<double>();
    run.eps = c.at("eps").get<double>();
    run.config.eps = run.eps;
    run.eps_bound = c.at("eps_bound").get<double>();
    run.config.epsilon_zero = c.at("epsilon_mode").get<std::string>() == "zero";
    run.config.allow_eps_above_bound = c.at("allow_eps_above_bound").get<bool>();
    run.config.r0 = c.at("r0").get<std::size_t>();
    run.config.n_max = c.at("n_max").get<std::size_t>();
    run.config.seeds = c.at("seeds").get<std::size_t>();
    run.config.seed = c.at("seed").get<std::uint64_t>();
    run.config.strict_base = c.at("strict_base").get<bool>();
    run.config.resolution_log = c.at("resolution_log").get<double>();
    run.config.exact_view = c.at("exact_view").get<bool>();
    const auto& e = j.at("expansion");
    run.expansion.lambda = e.at("lambda").get<double>();
    run.expansion.expansion_threshold = e.at("expansion_threshold").get<double>();
    run.expansion.eps_rec = e.at("eps_rec").get<double>();
    run.expansion.delta_rec = e.at("delta_rec").get<double>();
    run.expansion.sigma = e.at("sigma").get<double>();
    run.expansion.delta_hyp = e.at("delta_hyp").get<double>();
    run.expansion.b = e.at("b").get<double>();
    run.expansion.horizon = e.at("horizon").get<std::size_t>();
    const auto& b = j.at("base");
    run.base.ambient = run.model == "gauss" ? Ambient::interval : Ambient::circle;
    run.base.p = parse_long(b.at("p"));
    run.base.n0 = b.at("n0").get<std::size_t>();
    run.base.c0 = b.at("c0").get<double>();
    run.base.d0 = b.at("d0").get<double>();
    run.base.delta0 = run.config.delta0;
    run.base.delta1 = run.config.delta1;
    run.rings = RingSystem::make(run.config.delta0, run.expansion.sigma);
    if (run.rings.k_ring != j.at("k_ring").get<std::size_t>()) throw VerificationError("manifest k_ring mismatch");
    run.overlaps = j.at("overlaps").get<std::size_t>();
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.n = s.at("n").get<std::size_t>();
      r.alive = s.at("alive").get<std::size_t>();
      r.in_a = s.at("in_a").get<std::size_t>();
      r.in_b = s.at("in_b").get<std::size_t>();
      r.returned = s.at("returned").get<std::size_t>();
      r.lost = s.at("lost").get<std::size_t>();
      r.a_to_a = s.at("a_to_a").get<std::size_t>();
      r.a_to_b = s.at("a_to_b").get<std::size_t>();
      r.a_to_r = s.at("a_to_r").get<std::size_t>();
      r.b_to_a = s.at("b_to_a").get<std::size_t>();
      r.b_to_b = s.at("b_to_b").get<std::size_t>();
      r.b_to_r = s.at("b_to_r").get<std::size_t>();
      r.a_prev_hyp = s.at("a_prev_hyp").get<std::size_t>();
      r.collar_violations = s.at("collar_violations").get<std::size_t>();
      r.unresolved_returns = s.at("unresolved_returns").get<std::size_t>();
      r.exact_delta = s.at("exact_delta").get<double>();
      r.exact_r_eq_n = s.at("exact_r_eq_n").get<double>();
      r.elements_cumulative = s.at("elements_cumulative").get<std::size_t>();
      r.exact_a = s.at("exact_a").get<double>();
      r.exact_b = s.at("exact_b").get<double>();
      r.exact_a_eps = s.at("exact_a_eps").get<double>();
      r.exact_collar_failures = s.at("exact_collar_failures").get<std::size_t>();
      run.steps.push_back(r);
    }
    for (const auto& el : j.at("elements")) {
      PartitionElement p;
      const auto& u = el.at("u");
      if (u.size() != 4) throw VerificationError("element needs four nested arcs");
      for (std::size_t i = 0; i < 4; ++i) {
        real lo = parse_long(u[i].at(0)), hi = parse_long(u[i].at(1));
        if (!(hi > lo)) throw VerificationError("element arc with hi <= lo");
        p.u[i] = Arc{lo, hi, run.base.ambient};
      }
      p.r = el.at("R").get<std::size_t>();
      p.n_hyp = el.at("n_hyp").get<std::size_t>();
      p.extra = el.at("m").get<std::size_t>();
      p.copy = el.at("copy").get<int>();
      p.log_derivative = el.at("log_derivative").get<double>();
      p.digits = el.at("digits").get<std::vector<int>>();
      if (p.digits.size() != p.r) throw VerificationError("element digit count differs from R");
      run.elements.push_back(std::move(p));
    }
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw VerificationError(std::string("manifest field error: ") + e.what());
  }
}

void write_tower_csv(std::ostream& out, const TowerRun& run) {
  std::map<std::string, std::string> meta{{"model", run.model},
                                          {"seed", std::to_string(run.config.seed)},
                                          {"seeds", std::to_string(run.config.seeds)},
                                          {"delta0", fmt_real(run.config.delta0)},
                                          {"eps", fmt_real(run.eps)},
                                          {"r0", std::to_string(run.config.r0)},
                                          {"n_max", std::to_string(run.config.n_max)}};
  write_header(out, meta);
  out << "n,leb_delta_n,leb_R_eq_n,elements_cumulative,leb_delta_n_stderr,exact_delta_n,exact_R_eq_n,leb_A_n,leb_B_n\n";
  for (const StepRecord& s : run.steps) {
    out << s.n << ',' << fmt_real(run.sampled_delta(s.n)) << ',' << fmt_real(run.sampled_r_eq(s.n)) << ','
        << s.elements_cumulative << ',' << fmt_real(run.sampled_delta_stderr(s.n)) << ',' << fmt_real(s.exact_delta)
        << ',' << fmt_real(s.exact_r_eq_n) << ',' << fmt_real(run.sampled_a(s.n)) << ','
        << fmt_real(run.sampled_b(s.n)) << '\n';
  }
}

}  // namespace ergolab
