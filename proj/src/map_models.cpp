#include "ergolab/map_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ergolab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Refills the low end of a 64-bit binary window one digit at a time.
class BitSource {
 public:
  explicit BitSource(std::uint64_t seed) : rng_(seed) {}
  std::uint64_t take(int k) {
    if (avail_ < k) {
      buf_ = rng_();
      avail_ = 64;
    }
    std::uint64_t v = buf_ & ((std::uint64_t{1} << k) - 1);
    buf_ >>= k;
    avail_ -= k;
    return v;
  }

 private:
  Rng rng_;
  std::uint64_t buf_ = 0;
  int avail_ = 0;
};

std::uint64_t to_window(double x, BitSource& bits) {
  long double scaled = std::ldexp(static_cast<long double>(x), 64);
  std::uint64_t w = scaled >= 0x1.0p64L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(scaled);
  return w | bits.take(11);
}

double from_window(std::uint64_t w) { return static_cast<double>(w >> 11) * 0x1.0p-53; }
}  // namespace

void MapModel::trajectory(const Point& x0, std::size_t n, std::uint64_t, std::vector<Point>& out) const {
  out.resize(n + 1);
  out[0] = x0;
  for (std::size_t j = 0; j < n; ++j) out[j + 1] = evaluate(out[j]);
}

double dist_delta(const MapModel& m, const Point& x, double delta) {
  if (!m.has_singular_set()) return 1.0;
  double d = m.dist_singular(x);
  return d <= delta ? d : 1.0;
}

// ---------------------------------------------------------------- IntervalMap

std::vector<real> IntervalMap::branch_preimages(real y) const {
  std::vector<real> out;
  for (int b = 0; b < branch_count(); ++b) {
    Arc r = branch_range(b);
    if (!r.contains(y)) continue;
    real x = inverse(b, y);
    if (ambient() == Ambient::circle) x = wrap01(x);
    out.push_back(x);
  }
  return out;
}

BranchOrbit IntervalMap::branch_orbit(real x0, std::size_t n, std::uint64_t) const {
  BranchOrbit o;
  o.x.resize(n + 1);
  o.digits.resize(n);
  o.x[0] = ambient() == Ambient::circle ? wrap01(x0) : x0;
  for (std::size_t j = 0; j < n; ++j) {
    int b = branch_of(o.x[j]);
    if (b < 0 || b >= branch_count()) throw SingularPoint(name() + ": orbit leaves the branch domains");
    o.digits[j] = b;
    o.x[j + 1] = forward(o.x[j]);
  }
  return o;
}

Point IntervalMap::evaluate(const Point& x) const { return pt(static_cast<double>(forward(x[0]))); }

double IntervalMap::deriv_norm_inv(const Point& x) const { return static_cast<double>(slope(x[0])); }

double IntervalMap::det_jacobian(const Point& x) const {
  return orientation(branch_of(x[0])) * deriv_norm_inv(x);
}

Point IntervalMap::sample(Rng& rng) const { return pt(uniform01(rng)); }

real IntervalMap::covered_measure() const {
  IntervalSet s(ambient());
  for (int b = 0; b < branch_count(); ++b) s = s.unite(IntervalSet::of(branch_domain(b)));
  return s.measure();
}

// -------------------------------------------------------------------- Doubling

DoublingMap::DoublingMap() { lambda_ = std::numbers::ln2; }

int DoublingMap::branch_of(real x) const { return wrap01(x) < 0.5L ? 0 : 1; }

Arc DoublingMap::branch_domain(int b) const {
  return b == 0 ? Arc{0, 0.5L, Ambient::circle} : Arc{0.5L, 1, Ambient::circle};
}

Arc DoublingMap::branch_range(int) const { return Arc{0, 1, Ambient::circle}; }

real DoublingMap::inverse(int b, real y) const { return (y + b) / 2; }

real DoublingMap::forward(real x) const { return wrap01(2 * wrap01(x)); }

double DoublingMap::dist_singular(const Point&) const { return kInf; }

void DoublingMap::trajectory(const Point& x0, std::size_t n, std::uint64_t stream, std::vector<Point>& out) const {
  BitSource bits(stream);
  std::uint64_t w = to_window(x0[0], bits);
  out.resize(n + 1);
  out[0] = x0;
  for (std::size_t j = 1; j <= n; ++j) {
    w = (w << 1) | bits.take(1);
    out[j] = pt(from_window(w));
  }
}

BranchOrbit DoublingMap::branch_orbit(real x0, std::size_t n, std::uint64_t stream) const {
  BitSource bits(stream);
  long double scaled = std::ldexp(wrap01(x0), 64);
  std::uint64_t w = scaled >= 0x1.0p64L ? ~std::uint64_t{0} : static_cast<std::uint64_t>(scaled);
  BranchOrbit o;
  o.x.resize(n + 1);
  o.digits.resize(n);
  o.x[0] = std::ldexp(static_cast<real>(w), -64);
  for (std::size_t j = 0; j < n; ++j) {
    o.digits[j] = static_cast<int>(w >> 63);
    w = (w << 1) | bits.take(1);
    o.x[j + 1] = std::ldexp(static_cast<real>(w), -64);
  }
  return o;
}

// ------------------------------------------------------------------------- LSV

LsvMap::LsvMap(double alpha) : alpha_(alpha) {
  if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("LSV alpha must lie in (0,1]");
  lambda_ = 0.35;
}

int LsvMap::branch_of(real x) const { return wrap01(x) < 0.5L ? 0 : 1; }

Arc LsvMap::branch_domain(int b) const {
  return b == 0 ? Arc{0, 0.5L, Ambient::circle} : Arc{0.5L, 1, Ambient::circle};
}

Arc LsvMap::branch_range(int) const { return Arc{0, 1, Ambient::circle}; }

real LsvMap::forward(real x) const {
  x = wrap01(x);
  if (x < 0.5L) return wrap01(x * (1 + pow_alpha(2 * x)));
  return 2 * x - 1;
}

real LsvMap::slope(real x) const {
  x = wrap01(x);
  if (x < 0.5L) return 1 + (1 + alpha_) * pow_alpha(2 * x);
  return 2;
}

real LsvMap::pow_alpha(real x) const {
  if (alpha_ == 0.5) return std::sqrt(x);
  if (alpha_ == 1.0) return x;
  return std::pow(x, static_cast<real>(alpha_));
}

real LsvMap::left_inverse(real y) const {
  // x + 2^a x^(1+a) = y is convex increasing in x and positive at x = y, so
  // Newton from x = y decreases monotonically onto the root.  A double pass
  // gets close; two or three long double steps finish.
  if (y <= 0) return 0;
  const real a = alpha_;
  const real c = pow_alpha(2);
  real x = std::min<real>(y, 0.5L);
  const double yd = static_cast<double>(y);
  if (std::isnormal(yd)) {
    const double cd = static_cast<double>(c);
    double xd = std::min(yd, 0.5);
    for (int it = 0; it < 200; ++it) {
      double xa = std::pow(xd, alpha_);
      double nx = xd - (xd + cd * xa * xd - yd) / (1 + (1 + alpha_) * cd * xa);
      if (!(nx > 0)) nx = xd / 2;
      bool done = std::fabs(nx - xd) <= 1e-15 * xd;
      xd = nx;
      if (done) break;
    }
    x = xd;
  }
  for (int it = 0; it < 200; ++it) {
    real xa = pow_alpha(x);
    real g = x + c * xa * x - y;
    real dg = 1 + (1 + a) * c * xa;
    real nx = x - g / dg;
    if (nx <= 0) nx = x / 2;
    if (std::fabs(nx - x) <= 1e-19L * std::max<real>(x, 1e-300L)) {
      x = nx;
      break;
    }
    x = nx;
  }
  return x;
}

real LsvMap::inverse(int b, real y) const {
  // Lift: F = f on [0,1/2], F(x) = 2x on [1/2,1], F(x+1) = F(x) + 2.
  real Y = y + b;
  real k = std::floor(Y / 2);
  real r = Y - 2 * k;
  real base = r < 1 ? left_inverse(r) : r / 2;
  return base + k;
}

Point LsvMap::evaluate(const Point& p) const {
  double x = p[0];
  if (x < 0.5) {
    double y = x * (1.0 + std::pow(2.0 * x, alpha_));
    return pt(y >= 1.0 ? y - 1.0 : y);
  }
  return pt(2.0 * x - 1.0);
}

double LsvMap::deriv_norm_inv(const Point& p) const {
  double x = p[0];
  return x < 0.5 ? 1.0 + (1.0 + alpha_) * std::pow(2.0 * x, alpha_) : 2.0;
}

double LsvMap::dist_singular(const Point&) const { return kInf; }

Nondegeneracy LsvMap::nondegeneracy() const { return {1.0 + (1.0 + alpha_), 0.0}; }

// ----------------------------------------------------------------------- Gauss

GaussMap::GaussMap(int k_max) : k_max_(k_max) {
  if (k_max < 1) throw std::invalid_argument("Gauss k_max must be at least 1");
  lambda_ = 2.37;
}

int GaussMap::branch_of(real x) const {
  if (!(x > 0)) throw SingularPoint("Gauss map: x = 0 lies in the singular set");
  real v = 1 / x;
  if (v >= k_max_ + 1) return k_max_;  // inside the truncated tail
  return static_cast<int>(std::floor(v)) - 1;
}

Arc GaussMap::branch_domain(int b) const {
  real k = b + 1;
  return Arc{1 / (k + 1), 1 / k, Ambient::interval};
}

Arc GaussMap::branch_range(int) const { return Arc{0, 1, Ambient::interval}; }

real GaussMap::inverse(int b, real y) const { return 1 / (static_cast<real>(b + 1) + y); }

real GaussMap::forward(real x) const {
  if (!(x > 0)) throw SingularPoint("Gauss map: x = 0 lies in the singular set");
  real v = 1 / x;
  return v - std::floor(v);
}

real GaussMap::slope(real x) const { return 1 / (x * x); }

Point GaussMap::evaluate(const Point& p) const {
  double x = p[0];
  if (!(x > 0)) throw SingularPoint("Gauss map: x = 0 lies in the singular set");
  double v = 1.0 / x;
  return pt(v - std::floor(v));
}

double GaussMap::dist_singular(const Point& p) const { return std::fabs(p[0]); }

// ----------------------------------------------------------------------- Viana

VianaMap::VianaMap(double a0, double alpha) : a0_(a0), alpha_(alpha) {
  // [-b, b] is forward invariant when a0 + alpha <= b and b^2 - b <= a0 - alpha.
  double b = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * (a0 - alpha)));
  if (!(a0 + alpha <= b) || !(alpha >= 0)) throw std::invalid_argument("Viana parameters admit no invariant strip");
  x_bound_ = b;
  lambda_ = 0.2;
}

Point VianaMap::evaluate(const Point& p) const {
  double s = p[0] * 16.0;
  s -= std::floor(s);
  double x = a0_ + alpha_ * std::sin(2 * std::numbers::pi * p[0]) - p[1] * p[1];
  return Point{s, x};
}

double VianaMap::deriv_norm_inv(const Point& p) const {
  // Smallest singular value of [[16, 0], [c, -2x]].
  double a = 16.0;
  double c = 2 * std::numbers::pi * alpha_ * std::cos(2 * std::numbers::pi * p[0]);
  double d = -2.0 * p[1];
  double fro = a * a + c * c + d * d;
  double det = std::fabs(a * d);
  double disc = std::sqrt(std::max(0.0, fro * fro - 4 * det * det));
  double smin2 = 0.5 * (fro - disc);
  // Cancellation guard: smin^2 = det^2 / smax^2.
  double smax2 = 0.5 * (fro + disc);
  if (smax2 > 0) smin2 = det * det / smax2;
  return std::sqrt(smin2);
}

double VianaMap::det_jacobian(const Point& p) const { return -32.0 * p[1]; }

double VianaMap::dist_singular(const Point& p) const { return std::fabs(p[1]); }

Point VianaMap::sample(Rng& rng) const {
  double s = uniform01(rng);
  double x = -x_bound_ + 2 * x_bound_ * uniform01(rng);
  return Point{s, x};
}

void VianaMap::trajectory(const Point& x0, std::size_t n, std::uint64_t stream, std::vector<Point>& out) const {
  BitSource bits(stream);
  std::uint64_t w = to_window(x0[0], bits);
  out.resize(n + 1);
  out[0] = x0;
  for (std::size_t j = 1; j <= n; ++j) {
    double s_prev = from_window(w);
    double x = a0_ + alpha_ * std::sin(2 * std::numbers::pi * s_prev) - out[j - 1][1] * out[j - 1][1];
    w = (w << 4) | bits.take(4);
    out[j] = Point{from_window(w), x};
  }
}

// --------------------------------------------------------------------- factory

double default_lambda(const ModelSpec& spec) {
  if (spec.name == "doubling") return std::numbers::ln2;
  if (spec.name == "lsv") return 0.35;
  if (spec.name == "gauss") return 2.37;
  if (spec.name == "viana") return 0.2;
  throw std::invalid_argument("unknown model '" + spec.name + "'");
}

std::unique_ptr<IntervalMap> make_interval_map(const ModelSpec& spec) {
  std::unique_ptr<IntervalMap> m;
  if (spec.name == "doubling") {
    m = std::make_unique<DoublingMap>();
  } else if (spec.name == "lsv") {
    m = std::make_unique<LsvMap>(spec.alpha);
  } else if (spec.name == "gauss") {
    m = std::make_unique<GaussMap>(spec.k_max);
  } else {
    throw std::invalid_argument("model '" + spec.name + "' has no one-dimensional branch structure");
  }
  m->set_lambda(spec.lambda > 0 ? spec.lambda : default_lambda(spec));
  return m;
}

std::unique_ptr<MapModel> make_model(const ModelSpec& spec) {
  if (spec.name == "viana") {
    auto m = std::make_unique<VianaMap>(spec.a0, spec.coupling);
    m->set_lambda(spec.lambda > 0 ? spec.lambda : default_lambda(spec));
    return m;
  }
  return make_interval_map(spec);
}

// ------------------------------------------------------------ nondegeneracy

NondegeneracyReport check_nondegeneracy(const IntervalMap& m, std::size_t sample_count, std::uint64_t seed) {
  NondegeneracyReport rep;
  rep.samples = sample_count;
  Rng rng = make_rng(seed, 0x5e51, 0);
  std::vector<double> xs(sample_count);
  for (auto& x : xs) {
    do {
      x = uniform01(rng);
    } while (x == 0.0);
  }
  auto dist = [&](double x) { return m.dist_singular(pt(x)); };
  const bool has_s = m.has_singular_set();

  // Exponent: regression of log|f'| on log dist(x, S).
  if (has_s) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double x : xs) {
      double u = std::log(dist(x));
      double v = std::log(static_cast<double>(m.slope(x)));
      sx += u;
      sy += v;
      sxx += u * u;
      sxy += u * v;
    }
    double n = static_cast<double>(xs.size());
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    rep.beta_hat = std::max(0.0, -slope);
  }

  // Constant: extremize over a fine grid of every branch plus the samples.
  auto power_ratio = [&](double x) {
    double s = static_cast<double>(m.slope(x));
    double w = has_s ? std::pow(dist(x), rep.beta_hat) : 1.0;
    return std::max(s * w, w / s);
  };
  rep.min_slope = kInf;
  rep.max_slope = 0;
  double B = 1.0;
  const int per_branch = std::max(16, static_cast<int>(20000 / std::max(1, m.branch_count())));
  for (int b = 0; b < m.branch_count(); ++b) {
    Arc d = m.branch_domain(b);
    for (int i = 0; i <= per_branch; ++i) {
      double x = static_cast<double>(d.lo + (d.hi - d.lo) * (i + 0.5L) / (per_branch + 1));
      double s = static_cast<double>(m.slope(x));
      rep.min_slope = std::min(rep.min_slope, s);
      rep.max_slope = std::max(rep.max_slope, s);
      B = std::max(B, power_ratio(x));
    }
  }
  for (double x : xs) {
    double s = static_cast<double>(m.slope(x));
    rep.min_slope = std::min(rep.min_slope, s);
    rep.max_slope = std::max(rep.max_slope, s);
  }
  B *= 1 + 1e-6;

  // Lipschitz constant: log|f'| is monotone and convex on each branch of the
  // built-in maps, so the widest admissible pair on either side is extremal.
  auto radius = [&](double x) { return has_s ? std::min(0.5 * dist(x), 1e-3) : 1e-3; };
  auto lip_ratio = [&](double x, double y) {
    double lhs = std::fabs(std::log(static_cast<double>(m.slope(x))) - std::log(static_cast<double>(m.slope(y))));
    double w = has_s ? std::pow(dist(x), rep.beta_hat) : 1.0;
    return lhs * w / std::fabs(x - y);
  };
  double lip = 0;
  auto calibrate = [&](double x) {
    for (double sgn : {-1.0, 1.0}) {
      double y = x + sgn * radius(x);
      if (y <= 0 || y >= 1 || m.branch_of(x) != m.branch_of(y)) continue;
      lip = std::max(lip, lip_ratio(x, y));
    }
  };
  for (int b = 0; b < m.branch_count(); ++b) {
    Arc d = m.branch_domain(b);
    for (int i = 0; i <= per_branch; ++i) calibrate(static_cast<double>(d.lo + (d.hi - d.lo) * (i + 0.5L) / (per_branch + 1)));
  }
  for (double x : xs) calibrate(x);
  rep.B_hat = std::max(B, lip * 1.05);

  // Held-out points and pairs.
  Rng check_rng = make_rng(seed, 0x5e52, 0);
  for (std::size_t i = 0; i < sample_count; ++i) {
    double x = uniform01(check_rng);
    if (x == 0.0) continue;
    double s = static_cast<double>(m.slope(x));
    double w = has_s ? std::pow(dist(x), rep.beta_hat) : 1.0;
    if (s < w / rep.B_hat || s > rep.B_hat / w) ++rep.s1_violations;
    if (i >= 10000) continue;
    double y = x + radius(x) * (2 * uniform01(check_rng) - 1);
    if (y <= 0 || y >= 1 || y == x) continue;
    if (m.branch_of(x) != m.branch_of(y)) continue;
    ++rep.lipschitz_pairs;
    double ratio = lip_ratio(x, y) / rep.B_hat;
    rep.worst_lipschitz_ratio = std::max(rep.worst_lipschitz_ratio, ratio);
    if (ratio > 1.0) ++rep.lipschitz_violations;
  }
  return rep;
}

}  // namespace ergolab
