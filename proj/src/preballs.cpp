#include "ergolab/preballs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ergolab/parallel.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

namespace {

constexpr std::uint64_t kKappaTag = 0x4a77;
constexpr std::uint64_t kCoverTag = 0xc0e5;
constexpr std::size_t kChunk = 256;
constexpr std::size_t kMaxTreeNodes = std::size_t{1} << 22;
constexpr std::size_t kMaxBaseDepth = 60;
// Above this |(f^n)'| the forward image of a long double endpoint is no
// longer accurate to 1e-9.
const double kResolvableLogExpansion = 31 * std::log(2.0);

real reduce(const IntervalMap& m, real x) { return m.ambient() == Ambient::circle ? wrap01(x) : x; }

real image_dist(const IntervalMap& m, real a, real b) { return ambient_dist(m.ambient(), a, b); }

// Pulls the lifted interval [lo, hi] back through branch b.
std::pair<real, real> pull(const IntervalMap& m, int b, real lo, real hi) {
  real a = m.inverse(b, lo), c = m.inverse(b, hi);
  return a < c ? std::pair{a, c} : std::pair{c, a};
}

// Branch digits from the root down to node `idx`.
std::vector<int> path_to(const PreimageTree& t, std::size_t idx) {
  std::vector<int> digits;
  for (int i = static_cast<int>(idx); t.nodes[i].parent >= 0; i = t.nodes[i].parent) digits.push_back(t.nodes[i].branch);
  std::reverse(digits.begin(), digits.end());
  return digits;
}

// Sum of log|f'| along the pull-back of w through `digits` (root first).
double pulled_log_slope(const IntervalMap& m, const std::vector<int>& digits, real w) {
  double sum = 0;
  for (int b : digits) {
    w = m.inverse(b, w);
    sum += std::log(static_cast<double>(m.slope(reduce(m, w))));
  }
  return sum;
}

double sup_distance(Ambient amb, std::vector<real> xs) {
  if (xs.empty()) return std::numeric_limits<double>::infinity();
  std::sort(xs.begin(), xs.end());
  real worst = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) worst = std::max(worst, (xs[i] - xs[i - 1]) / 2);
  if (amb == Ambient::circle) {
    worst = std::max(worst, (xs.front() + 1 - xs.back()) / 2);
  } else {
    worst = std::max({worst, xs.front(), 1 - xs.back()});
  }
  return static_cast<double>(worst);
}

class TreeBuilder {
 public:
  TreeBuilder(const IntervalMap& m, real p, double delta_target, real ball_radius)
      : m_(m), prune_(delta_target / 5), cell_(delta_target / 8) {
    occupied_.assign(static_cast<std::size_t>(1 / cell_) + 2, 0);
    tree_.p = p;
    TreeNode root;
    root.x = reduce(m, p);
    root.v_lo = root.x - ball_radius;
    root.v_hi = root.x + ball_radius;
    claim(root.x);
    tree_.nodes.push_back(root);
    frontier_ = {0};
  }

  bool exhausted() const { return frontier_.empty(); }

  void add_level() {
    std::vector<std::size_t> next;
    for (std::size_t idx : frontier_) {
      const TreeNode parent = tree_.nodes[idx];
      for (int b = 0; b < m_.branch_count(); ++b) {
        if (!m_.branch_range(b).contains(parent.x)) continue;
        real lifted = m_.inverse(b, parent.x);
        real z = reduce(m_, lifted);
        if (m_.has_singular_set() && m_.dist_singular(pt(static_cast<double>(z))) < prune_) continue;
        if (!claim(z)) continue;
        TreeNode child;
        child.x = z;
        child.level = parent.level + 1;
        child.parent = static_cast<int>(idx);
        child.branch = b;
        auto [lo, hi] = pull(m_, b, parent.v_lo, parent.v_hi);
        child.v_lo = lo + (z - lifted);
        child.v_hi = hi + (z - lifted);
        next.push_back(tree_.nodes.size());
        tree_.nodes.push_back(child);
        if (tree_.nodes.size() > kMaxTreeNodes) throw NotFound("pre-image tree exceeds the node budget");
      }
    }
    frontier_ = std::move(next);
    ++tree_.depth;
  }

  double density() const {
    std::vector<real> xs;
    xs.reserve(tree_.nodes.size());
    for (const auto& n : tree_.nodes) xs.push_back(n.x);
    return sup_distance(m_.ambient(), std::move(xs));
  }

  PreimageTree take() {
    tree_.max_gap_distance = density();
    return std::move(tree_);
  }

 private:
  bool claim(real z) {
    auto cell = static_cast<std::size_t>(std::clamp<real>(z / cell_, 0, occupied_.size() - 1));
    if (occupied_[cell]) return false;
    occupied_[cell] = 1;
    return true;
  }

  const IntervalMap& m_;
  double prune_;
  double cell_;
  std::vector<char> occupied_;
  PreimageTree tree_;
  std::vector<std::size_t> frontier_;
};

std::vector<real> fixed_point_candidates(const IntervalMap& m) {
  std::vector<real> out;
  const int branches = std::min(m.branch_count(), 16);
  const int grid = 256;
  for (int b = 0; b < branches; ++b) {
    Arc d = m.branch_domain(b);
    // h(x) = f(x) - x, reduced to (-1/2, 1/2] on the circle.
    auto h = [&](real x) {
      real v = m.forward(x) - x;
      if (m.ambient() == Ambient::circle) v -= std::round(v);
      return v;
    };
    real prev_x = d.lo, prev_h = h(d.lo);
    if (prev_h == 0) out.push_back(reduce(m, d.lo));
    for (int i = 1; i < grid; ++i) {
      real x = d.lo + (d.hi - d.lo) * i / grid;
      real hx = h(x);
      if (hx == 0) {
        out.push_back(x);
      } else if ((prev_h < 0) != (hx < 0) && prev_h != 0 && std::fabs(prev_h - hx) < 0.5L) {
        real lo = prev_x, hi = x;
        for (int it = 0; it < 200; ++it) {
          real mid = (lo + hi) / 2;
          ((h(mid) < 0) == (prev_h < 0) ? lo : hi) = mid;
        }
        out.push_back((lo + hi) / 2);
      }
      prev_x = x;
      prev_h = hx;
    }
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------------ pre-balls

PreballReport preball(const IntervalMap& m, const ExpansionConfig& c, real x, std::size_t n, double delta1,
                      const PreballOptions& opt) {
  if (n == 0) throw std::invalid_argument("preball: hyperbolic time must be >= 1");
  if (!(delta1 > 0)) throw std::invalid_argument("preball: delta1 must be > 0");
  const std::size_t samples = std::max<std::size_t>(opt.sample, 2);
  BranchOrbit o = m.branch_orbit(x, n, opt.stream);

  std::vector<double> log_exp(n), log_dist(n);
  for (std::size_t j = 0; j < n; ++j) {
    Point q = pt(static_cast<double>(o.x[j]));
    log_exp[j] = std::log(static_cast<double>(m.slope(o.x[j])));
    log_dist[j] = std::log(dist_delta(m, q, c.delta_hyp));
  }
  auto times = hyperbolic_times_from_terms(log_exp, log_dist, c.sigma, c.b);
  if (times.empty() || times.back() != n) throw std::invalid_argument("preball: n is not a hyperbolic time of x");

  const real y = o.x[n];
  if (m.ambient() == Ambient::circle) {
    if (delta1 >= 0.5) throw RadiusTooLarge(0.5, "preball: an arc of radius >= 1/2 wraps the circle; shrink delta1");
  } else {
    double feasible = static_cast<double>(std::min(y, 1 - y));
    if (delta1 > feasible)
      throw RadiusTooLarge(feasible, "preball: B(f^n(x), delta1) leaves the branch range; shrink delta1");
  }

  PreballReport r;
  r.center = x;
  r.n = n;
  r.delta1 = delta1;
  r.kappa = opt.kappa > 0 ? opt.kappa : std::pow(c.sigma, -0.5);
  r.containment_radius = std::pow(r.kappa, -static_cast<double>(n));

  // cur[i]: lifted position of the i-th sample point at the current time.
  std::vector<real> img(samples), cur(samples);
  for (std::size_t i = 0; i < samples; ++i)
    img[i] = y - delta1 + 2 * static_cast<real>(delta1) * static_cast<real>(i) / static_cast<real>(samples - 1);
  cur = img;
  real shadow = y;
  std::vector<double> log_slope(samples, 0.0);
  r.contraction.assign(n > 0 ? n - 1 : 0, 0.0);
  real step_residual = 0;
  const double log_sigma = std::log(c.sigma);
  for (std::size_t j = n; j-- > 0;) {
    const int b = o.digits[j];
    const real before_lo = cur.front(), before_hi = cur.back();
    for (std::size_t i = 0; i < samples; ++i) {
      cur[i] = m.inverse(b, cur[i]);
      log_slope[i] += std::log(static_cast<double>(m.slope(reduce(m, cur[i]))));
    }
    shadow = m.inverse(b, shadow);
    step_residual = std::max({step_residual, image_dist(m, m.forward(cur.front()), before_lo),
                              image_dist(m, m.forward(cur.back()), before_hi)});
    const std::size_t k = n - j;
    if (k < n) {
      // A ratio over any pair is a weighted mean of the ratios of the
      // adjacent pairs between them, so adjacent pairs attain the maximum.
      double worst = 0;
      for (std::size_t a = 0; a + 1 < samples; ++a)
        worst = std::max(worst, static_cast<double>(std::fabs(cur[a + 1] - cur[a]) / (img[a + 1] - img[a])));
      r.contraction[k - 1] = worst;
      if (std::log(worst) > 0.5 * static_cast<double>(k) * log_sigma + 1e-9) ++r.contraction_violations;
    }
  }
  r.shadow = shadow;
  const real lo = std::min(cur.front(), cur.back()), hi = std::max(cur.front(), cur.back());
  r.preball = Arc{lo, hi, m.ambient()};

  bool inc = true, dec = true;
  for (std::size_t i = 1; i < samples; ++i) {
    inc = inc && cur[i] > cur[i - 1];
    dec = dec && cur[i] < cur[i - 1];
  }
  r.monotone = inc || dec;

  auto [mn, mx] = std::minmax_element(log_slope.begin(), log_slope.end());
  r.log_expansion_min = *mn;
  r.log_expansion_max = *mx;
  r.distortion = std::exp(*mx - *mn);

  if (*mx <= kResolvableLogExpansion) {
    real a = cur.front(), b = cur.back();
    for (std::size_t j = 0; j < n; ++j) {
      a = m.forward(a);
      b = m.forward(b);
    }
    r.endpoint_residual = static_cast<double>(std::max(image_dist(m, a, img.front()), image_dist(m, b, img.back())));
  } else {
    r.chained_residual = true;
    r.endpoint_residual = static_cast<double>(step_residual);
  }
  r.contained = static_cast<double>(std::max(shadow - lo, hi - shadow)) <= r.containment_radius;
  return r;
}

double estimate_kappa(const MapModel& m, const ExpansionConfig& c, std::size_t sample, std::uint64_t seed,
                      unsigned threads) {
  const std::size_t chunks = chunk_count(sample, kChunk);
  std::vector<double> best(chunks, std::numeric_limits<double>::infinity());
  parallel_chunks(sample, kChunk, threads, [&](const ChunkRange& r) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      Rng rng = make_rng(seed, kKappaTag, i);
      Point x = m.sample(rng);
      OrbitRecord o;
      try {
        o = compute_orbit(m, c, x, substream(seed, kKappaTag + 1, i));
      } catch (const SingularPoint&) {
        continue;
      }
      for (std::size_t t : hyperbolic_times(o, c).times)
        best[r.index] = std::min(best[r.index], o.expansion_sum[t] / static_cast<double>(t));
    }
  });
  double rate = *std::min_element(best.begin(), best.end());
  if (!std::isfinite(rate)) return std::pow(c.sigma, -0.5);
  return std::max(std::pow(c.sigma, -0.5), std::exp(rate));
}

CoverTimeReport uniform_cover_time(const MapModel& m, const ExpansionConfig& c, double eps, std::size_t sample,
                                   std::uint64_t seed, unsigned threads, double kappa) {
  if (!(eps > 0 && eps < 0.1)) throw std::invalid_argument("uniform_cover_time: eps must lie in (0, 0.1)");
  if (sample == 0) throw std::invalid_argument("uniform_cover_time: empty sample");
  CoverTimeReport rep;
  rep.sample = sample;
  rep.kappa = kappa > 0 ? kappa : estimate_kappa(m, c, 200, seed, threads);
  const double target = eps / 10;
  rep.n_prime = 1;
  while (std::pow(rep.kappa, -static_cast<double>(rep.n_prime)) > target) ++rep.n_prime;
  rep.n_prime_rate_reading = static_cast<std::size_t>(std::ceil(std::log(10 / eps) / rep.kappa));
  if (rep.n_prime > c.horizon) throw NotFound("uniform_cover_time: N'_eps exceeds the horizon");

  // first[i]: first hyperbolic time >= N' of point i, horizon+1 when none.
  const std::size_t none = c.horizon + 1;
  std::vector<std::size_t> first(sample, none);
  parallel_chunks(sample, kChunk, threads, [&](const ChunkRange& r) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      Rng rng = make_rng(seed, kCoverTag, i);
      Point x = m.sample(rng);
      try {
        OrbitRecord o = compute_orbit(m, c, x, substream(seed, kCoverTag + 1, i));
        for (std::size_t t : hyperbolic_times(o, c).times) {
          if (t >= rep.n_prime) {
            first[i] = t;
            break;
          }
        }
      } catch (const SingularPoint&) {
      }
    }
  });
  std::vector<std::size_t> count(c.horizon + 2, 0);
  for (std::size_t t : first) ++count[t];
  const double threshold = std::pow(eps, m.dimension()) / 10;
  std::size_t covered = 0;
  for (std::size_t t = 0; t < rep.n_prime; ++t) covered += count[t];
  for (std::size_t t = rep.n_prime; t <= c.horizon; ++t) {
    covered += count[t];
    double uncovered = static_cast<double>(sample - covered) / static_cast<double>(sample);
    if (uncovered <= threshold) {
      rep.n_eps = t;
      rep.uncovered = uncovered;
      return rep;
    }
  }
  throw NotFound("uniform_cover_time: horizon exhausted before the uncovered measure fell below eps^d/10");
}

// ------------------------------------------------------------ base geometry

PreimageTree preimage_tree(const IntervalMap& m, real p, std::size_t depth, double delta_target, real ball_radius) {
  TreeBuilder tb(m, p, delta_target, ball_radius);
  for (std::size_t d = 0; d < depth && !tb.exhausted(); ++d) tb.add_level();
  return tb.take();
}

BasePoint dense_preimage_base(const IntervalMap& m, double delta_target) {
  if (!(delta_target > 0)) throw std::invalid_argument("dense_preimage_base: delta must be > 0");
  std::vector<real> cands;
  for (real z : fixed_point_candidates(m)) {
    if (m.has_singular_set() && m.dist_singular(pt(static_cast<double>(z))) < delta_target / 5) continue;
    cands.push_back(reduce(m, z));
  }
  auto dist_s = [&](real z) { return m.dist_singular(pt(static_cast<double>(z))); };
  std::stable_sort(cands.begin(), cands.end(), [&](real a, real b) {
    double da = dist_s(a), db = dist_s(b);
    if (da != db) return da > db;
    return a < b;
  });
  for (real p : cands) {
    TreeBuilder tb(m, p, delta_target, 0);
    for (std::size_t depth = 0; depth <= kMaxBaseDepth; ++depth) {
      double d = tb.density();
      if (d <= delta_target) return {p, depth, d};
      if (tb.exhausted() || depth == kMaxBaseDepth) break;
      tb.add_level();
    }
  }
  throw NotFound("dense_preimage_base: no candidate base point is dense within depth 60");
}

double BaseGeometry::radius(int i) const {
  switch (i) {
    case 0: return delta0;
    case 1: return 2 * delta0;
    case 2: return std::sqrt(delta0);
    case 3: return 2 * std::sqrt(delta0);
    default: throw std::out_of_range("BaseGeometry::radius: index must be 0..3");
  }
}

Arc BaseGeometry::ball(int i) const { return Arc::ball(ambient, p, radius(i)); }

BaseGeometry make_base_geometry(const IntervalMap& m, double delta0, double delta1, bool strict) {
  if (!(delta0 > 0)) throw ConfigError("delta0_positive", "delta0 must be > 0");
  if (!(delta1 > 0 && delta1 < 0.5)) throw ConfigError("delta1_range", "delta1 must lie in (0, 1/2)");
  if (strict && std::sqrt(delta0) > delta1 / 4)
    throw ConfigError("base_radius_ratio", "sqrt(delta0) must be <= delta1/4");
  BaseGeometry g;
  g.ambient = m.ambient();
  g.delta0 = delta0;
  g.delta1 = delta1;
  const double r3 = g.radius(3);
  if (m.ambient() == Ambient::circle && r3 >= 0.5) throw ConfigError("base_ball_fits", "2 sqrt(delta0) must be < 1/2");

  BasePoint bp = dense_preimage_base(m, delta1 / 3);
  g.p = bp.p;
  g.n0 = bp.n0;
  if (m.ambient() == Ambient::interval && (g.p - r3 <= 0 || g.p + r3 >= 1))
    throw ConfigError("base_ball_fits", "B(p, 2 sqrt(delta0)) must lie inside (0,1)");
  if (m.has_singular_set() && m.dist_singular(pt(static_cast<double>(g.p))) - r3 < 10 * delta0)
    throw ConfigError("base_ball_fits", "B(p, 2 sqrt(delta0)) must stay 10 delta0 away from S");
  g.tree = preimage_tree(m, g.p, g.n0, delta1 / 3, r3);

  const int probes = 9;
  for (std::size_t idx = 1; idx < g.tree.nodes.size(); ++idx) {
    std::vector<int> digits = path_to(g.tree, idx);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < probes; ++i) {
      real w = g.p - r3 + 2 * static_cast<real>(r3) * i / (probes - 1);
      double s = pulled_log_slope(m, digits, w);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    g.c0 = std::max({g.c0, std::exp(hi), std::exp(-lo)});
    g.d0 = std::max(g.d0, std::exp(hi - lo));
  }
  return g;
}

ReturnToBase return_to_base(const IntervalMap& m, const BaseGeometry& g, const Arc& b, std::size_t sample) {
  const IntervalSet target = IntervalSet::of(b);
  const real centre = reduce(m, (b.lo + b.hi) / 2);
  int best = -1;
  for (std::size_t idx = 0; idx < g.tree.nodes.size(); ++idx) {
    const TreeNode& nd = g.tree.nodes[idx];
    if (nd.level > g.n0) break;
    Arc v = m.ambient() == Ambient::circle ? Arc::circle(nd.v_lo, nd.v_hi) : Arc::interval(nd.v_lo, nd.v_hi);
    if (!target.covers(v)) continue;
    if (best >= 0) {
      const TreeNode& cur = g.tree.nodes[best];
      if (cur.level < nd.level) break;
      if (image_dist(m, nd.x, centre) >= image_dist(m, cur.x, centre)) continue;
    }
    best = static_cast<int>(idx);
  }
  if (best < 0) throw NotFound("return_to_base: no tree component fits inside the ball; the base geometry is invalid");

  const TreeNode& nd = g.tree.nodes[best];
  ReturnToBase out;
  out.steps = nd.level;
  out.tree_point = nd.x;
  out.v = Arc{nd.v_lo, nd.v_hi, m.ambient()};
  std::vector<int> digits = path_to(g.tree, best);
  const double r3 = g.radius(3);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  const std::size_t k = std::max<std::size_t>(sample, 2);
  for (std::size_t i = 0; i < k; ++i) {
    real w = g.p - r3 + 2 * static_cast<real>(r3) * static_cast<real>(i) / static_cast<real>(k - 1);
    double s = pulled_log_slope(m, digits, w);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  out.distortion = std::exp(hi - lo);
  real a = nd.v_lo, c = nd.v_hi;
  for (std::size_t j = 0; j < nd.level; ++j) {
    a = m.forward(a);
    c = m.forward(c);
  }
  const real t_lo = g.p - r3, t_hi = g.p + r3;
  real direct = std::max(image_dist(m, a, t_lo), image_dist(m, c, t_hi));
  real swapped = std::max(image_dist(m, a, t_hi), image_dist(m, c, t_lo));
  out.endpoint_residual = static_cast<double>(std::min(direct, swapped));
  return out;
}

}  // namespace ergolab
