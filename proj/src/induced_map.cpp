#include "ergolab/induced_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ergolab/io.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/rng.hpp"
#include "json.hpp"

namespace ergolab {

namespace {

constexpr std::uint64_t kPairTag = 0xd157;
// Image distances below this are dominated by endpoint rounding.
constexpr double kImageFloor = 1e-9;

struct Walk {
  real y = 0;
  real log_sum = 0;
  real product = 1;
  int sign = 1;
};

Walk walk(const IntervalMap& m, real x, std::size_t steps) {
  Walk w;
  w.y = x;
  for (std::size_t k = 0; k < steps; ++k) {
    const real s = m.slope(w.y);
    w.sign *= m.orientation(m.branch_of(m.ambient() == Ambient::circle ? wrap01(w.y) : w.y));
    w.log_sum += std::log(s);
    w.product *= s;
    w.y = m.forward(w.y);
  }
  return w;
}

ElementProfile profile_element(const IntervalMap& m, const PartitionElement& e, real p, real d0, std::size_t grid) {
  ElementProfile pr;
  const Ambient amb = m.ambient();
  const Arc& u = e.u[0];
  std::vector<Walk> ws(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    const real x = i + 1 == grid ? u.hi : u.lo + u.length() * static_cast<real>(i) / static_cast<real>(grid - 1);
    ws[i] = walk(m, x, e.r);
  }
  const int sign = ws.front().sign;
  pr.residual_lo = static_cast<double>(ambient_dist(amb, ws.front().y, sign > 0 ? p - d0 : p + d0));
  pr.residual_hi = static_cast<double>(ambient_dist(amb, ws.back().y, sign > 0 ? p + d0 : p - d0));
  pr.min_log_slope = std::numeric_limits<double>::infinity();
  pr.max_log_slope = -pr.min_log_slope;
  for (const Walk& w : ws) {
    if (w.sign != sign || !(w.product > 0)) pr.monotone = false;
    const double ls = static_cast<double>(w.log_sum);
    pr.min_log_slope = std::min(pr.min_log_slope, ls);
    pr.max_log_slope = std::max(pr.max_log_slope, ls);
    const double gap = static_cast<double>(std::fabs(std::exp(w.log_sum) - w.product) / w.product);
    pr.chain_rule_error = std::max(pr.chain_rule_error, gap);
  }
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = i + 1; j < grid; ++j) {
      const double d = static_cast<double>(ambient_dist(amb, ws[i].y, ws[j].y));
      if (d < kImageFloor) continue;
      const double dl = static_cast<double>(std::fabs(ws[i].log_sum - ws[j].log_sum));
      pr.distortion_lip = std::max(pr.distortion_lip, dl / d);
    }
  return pr;
}

}  // namespace

InducedMap::InducedMap(const IntervalMap& m, const TowerRun& run, std::size_t grid, unsigned threads)
    : map_(&m), run_(&run) {
  if (grid < 2) throw ConfigError("grid_at_least_two", "need both endpoints of every element");
  const auto& els = run.elements;
  for (std::size_t i = 0; i < els.size(); ++i) {
    const Arc& u = els[i].u[0];
    if (u.hi > 1) {
      pieces_.push_back({u.lo, 1, i});
      pieces_.push_back({0, u.hi - 1, i});
    } else {
      pieces_.push_back({u.lo, u.hi, i});
    }
  }
  std::sort(pieces_.begin(), pieces_.end(), [](const Piece& a, const Piece& b) { return a.lo < b.lo; });

  profiles_.resize(els.size());
  const real p = run.base.p;
  const real d0 = run.base.delta0;
  parallel_chunks(els.size(), 64, threads, [&](const ChunkRange& c) {
    for (std::size_t i = c.begin; i < c.end; ++i) profiles_[i] = profile_element(m, els[i], p, d0, grid);
  });
  log_lambda_hat_ = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < profiles_.size(); ++i)
    if (profiles_[i].min_log_slope < log_lambda_hat_) {
      log_lambda_hat_ = profiles_[i].min_log_slope;
      weakest_ = i;
    }
}

Arc InducedMap::base() const { return Arc::ball(run_->base.ambient, run_->base.p, run_->base.delta0); }

double InducedMap::lambda_hat() const { return std::exp(log_lambda_hat_); }

std::optional<std::size_t> InducedMap::element_of(real x) const {
  if (map_->ambient() == Ambient::circle) x = wrap01(x);
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x, [](real v, const Piece& q) { return v < q.lo; });
  if (it == pieces_.begin()) return std::nullopt;
  --it;
  if (x <= it->hi) return it->index;
  return std::nullopt;
}

Image InducedMap::apply(std::size_t element, real x) const {
  Walk w = walk(*map_, x, run_->elements.at(element).r);
  return Image{w.y, static_cast<double>(w.log_sum), w.sign};
}

MarkovReport verify_markov(const InducedMap& im, double tolerance) {
  MarkovReport r;
  r.tolerance = tolerance;
  r.elements = im.profiles().size();
  for (std::size_t i = 0; i < r.elements; ++i) {
    const ElementProfile& p = im.profiles()[i];
    const double res = std::max(p.residual_lo, p.residual_hi);
    r.max_residual = std::max(r.max_residual, res);
    if (res <= tolerance && p.monotone)
      ++r.passed;
    else
      r.failures.push_back(i);
  }
  return r;
}

ExpansionReport verify_expansion(const InducedMap& im) {
  if (im.profiles().empty()) throw NumericalError("verify_expansion: no elements");
  ExpansionReport r;
  r.log_lambda_hat = im.log_lambda_hat();
  r.lambda_hat = im.lambda_hat();
  r.element = im.weakest_element();
  for (const auto& p : im.profiles()) r.chain_rule_error = std::max(r.chain_rule_error, p.chain_rule_error);
  if (!(r.log_lambda_hat > 0)) throw ExpansionFailure(r.element, r.lambda_hat);
  return r;
}

namespace {

struct Itinerary {
  std::size_t s = 0;
  Censor censored = Censor::none;
  std::vector<std::pair<Image, Image>> steps;  // images of the shared steps
};

Itinerary follow(const InducedMap& im, real x, real y, std::size_t depth_max) {
  Itinerary it;
  const double budget = im.run().config.resolution_log;
  double spent = 0;
  for (std::size_t i = 0; i < depth_max; ++i) {
    auto ex = im.element_of(x), ey = im.element_of(y);
    // One point in the remnant and one in a recorded element have already
    // separated; two remnant points might still share an unrecorded element.
    if (!ex && !ey) {
      it.censored = Censor::remnant;
      return it;
    }
    if (!ex || !ey || *ex != *ey) return it;
    Image ix = im.apply(*ex, x), iy = im.apply(*ey, y);
    it.steps.emplace_back(ix, iy);
    it.s = i + 1;
    spent += std::max(ix.log_slope, iy.log_slope);
    x = ix.y;
    y = iy.y;
    if (spent > budget && it.s < depth_max) {
      it.censored = Censor::precision;
      return it;
    }
  }
  return it;
}

}  // namespace

Separation separation_time(const InducedMap& im, real x, real y, std::size_t depth_max) {
  if (x == y) return Separation{depth_max, Censor::none};
  Itinerary it = follow(im, x, y, depth_max);
  return Separation{it.s, it.censored};
}

DistortionReport verify_distortion(const InducedMap& im, std::size_t pair_sample, std::uint64_t seed,
                                   std::size_t depth_max) {
  DistortionReport r;
  r.pairs_requested = pair_sample;
  const auto& els = im.run().elements;
  if (els.empty()) return r;
  const Ambient amb = im.map().ambient();
  const double log_lambda = im.log_lambda_hat();
  Rng rng = make_rng(seed, kPairTag, 0);
  for (std::size_t k = 0; k < pair_sample; ++k) {
    const std::size_t idx = static_cast<std::size_t>(rng() % els.size());
    const Arc& u = els[idx].u[0];
    const real x = u.lo + u.length() * static_cast<real>(uniform01(rng));
    const real y = x + u.length() * static_cast<real>(uniform01(rng) - 0.5) / 2;
    auto ex = im.element_of(x), ey = im.element_of(y);
    if (!ex || !ey || *ex != *ey) {
      ++r.pairs_rejected;
      continue;
    }
    ++r.pairs_tested;
    Itinerary it = follow(im, x, y, depth_max);
    const auto& [fx, fy] = it.steps.front();
    const double d_img = static_cast<double>(ambient_dist(amb, fx.y, fy.y));
    if (d_img >= kImageFloor)
      r.b_tilde_sampled = std::max(r.b_tilde_sampled, std::fabs(fx.log_slope - fy.log_slope) / d_img);
    else
      ++r.pairs_unresolved;
    if (it.censored != Censor::none) {
      ++r.pairs_censored;
      continue;
    }
    r.max_depth = std::max(r.max_depth, it.s);
    const double dxy = static_cast<double>(ambient_dist(amb, x, y));
    r.max_pair_dist_scaled = std::max(r.max_pair_dist_scaled, dxy * std::exp(static_cast<double>(it.s) * log_lambda));
    for (std::size_t i = 0; i < it.steps.size(); ++i) {
      const double dev = std::fabs(std::expm1(it.steps[i].first.log_slope - it.steps[i].second.log_slope));
      const double s_next = static_cast<double>(it.s - i - 1);
      r.k_hat = std::max(r.k_hat, dev * std::exp(s_next * log_lambda));
      r.k_hat_inner = std::max(r.k_hat_inner, dev * std::exp((s_next + 1) * log_lambda));
    }
  }
  r.b_tilde = r.b_tilde_sampled;
  for (const auto& p : im.profiles()) r.b_tilde = std::max(r.b_tilde, p.distortion_lip);
  const double diam = 2 * im.run().base.delta0;
  r.form_consistent = r.k_hat <= r.b_tilde * diam * std::exp(r.b_tilde * diam) * (1 + 1e-6) + 1e-12;
  return r;
}

void write_element_csv(std::ostream& out, const InducedMap& im) {
  const TowerRun& run = im.run();
  write_header(out, {{"model", run.model},
                     {"seed", std::to_string(run.config.seed)},
                     {"elements", std::to_string(run.elements.size())},
                     {"lambda_hat", fmt_real(im.lambda_hat())}});
  out << "index,lo,hi,R,min_slope,max_slope,distortion_lip,endpoint_residual,monotone\n";
  for (std::size_t i = 0; i < run.elements.size(); ++i) {
    const auto& e = run.elements[i];
    const auto& p = im.profiles()[i];
    out << i << ',' << fmt_real(e.u[0].lo) << ',' << fmt_real(e.u[0].hi) << ',' << e.r << ','
        << fmt_real(std::exp(p.min_log_slope)) << ',' << fmt_real(std::exp(p.max_log_slope)) << ','
        << fmt_real(p.distortion_lip) << ',' << fmt_real(std::max(p.residual_lo, p.residual_hi)) << ','
        << (p.monotone ? 1 : 0) << '\n';
  }
}

void write_induced_manifest(std::ostream& out, const InducedMap& im, const MarkovReport& mk,
                            const ExpansionReport& ex, const DistortionReport& dr) {
  nlohmann::ordered_json j;
  j["model"] = im.run().model;
  j["seed"] = im.run().config.seed;
  j["elements"] = mk.elements;
  j["markov"] = {{"tolerance", mk.tolerance},
                 {"passed", mk.passed},
                 {"max_endpoint_residual", mk.max_residual},
                 {"failures", mk.failures}};
  j["expansion"] = {{"lambda_hat", ex.lambda_hat},
                    {"log_lambda_hat", ex.log_lambda_hat},
                    {"weakest_element", ex.element},
                    {"chain_rule_error", ex.chain_rule_error}};
  j["distortion"] = {{"pairs_requested", dr.pairs_requested},
                     {"pairs_tested", dr.pairs_tested},
                     {"pairs_rejected", dr.pairs_rejected},
                     {"pairs_censored", dr.pairs_censored},
                     {"pairs_unresolved", dr.pairs_unresolved},
                     {"b_tilde", dr.b_tilde},
                     {"b_tilde_sampled", dr.b_tilde_sampled},
                     {"k_hat", dr.k_hat},
                     {"k_hat_inner", dr.k_hat_inner},
                     {"max_depth", dr.max_depth},
                     {"max_pair_dist_scaled", dr.max_pair_dist_scaled},
                     {"form_consistent", dr.form_consistent}};
  out << j.dump(2) << '\n';
}

}  // namespace ergolab
