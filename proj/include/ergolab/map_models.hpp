#pragma once
// Built-in non-uniformly expanding systems.
//
// One-dimensional models expose full branch structure: doubling and LSV are
// degree-2 circle maps handled through their lift F (F(x+1) = F(x) + 2), the
// Gauss map is an interval map whose k-th branch is x -> 1/x - k.  Every
// inverse branch is then defined on the whole ambient space.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergolab/interval_geometry.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

using Point = std::array<double, 2>;

inline Point pt(double x) { return Point{x, 0.0}; }

class SingularPoint : public std::domain_error {
 public:
  explicit SingularPoint(const std::string& what) : std::domain_error(what) {}
};

struct Nondegeneracy {
  double B = 1;
  double beta = 0;
};

class MapModel {
 public:
  virtual ~MapModel() = default;

  virtual std::string name() const = 0;
  virtual int dimension() const = 0;
  // Rate in the non-uniform expansion condition; a configurable estimate.
  double lambda() const { return lambda_; }
  void set_lambda(double l) { lambda_ = l; }

  virtual Point evaluate(const Point& x) const = 0;
  // ||Df(x)^{-1}||^{-1}; equals |f'(x)| in one dimension.
  virtual double deriv_norm_inv(const Point& x) const = 0;
  virtual double det_jacobian(const Point& x) const = 0;
  virtual bool has_singular_set() const = 0;
  // Distance to the singular set S, +infinity when S is empty.
  virtual double dist_singular(const Point& x) const = 0;
  virtual Nondegeneracy nondegeneracy() const = 0;

  // Lebesgue-uniform point of the ambient space.
  virtual Point sample(Rng& rng) const = 0;
  // Total Lebesgue measure of the ambient space.
  virtual double ambient_volume() const { return 1.0; }

  // Fills out[0..n] with the orbit of x0.  `stream` seeds any extra random
  // digits a model needs to keep its simulated orbit exact in distribution.
  virtual void trajectory(const Point& x0, std::size_t n, std::uint64_t stream, std::vector<Point>& out) const;

  // Parameter record for manifests.
  virtual std::map<std::string, double> parameters() const = 0;

 protected:
  double lambda_ = 0;
};

// dist_delta(x, S) = dist(x, S) if that is <= delta, else 1.
double dist_delta(const MapModel& m, const Point& x, double delta);

struct BranchOrbit {
  std::vector<real> x;      // x_0..x_n, reduced to the ambient space
  std::vector<int> digits;  // branch index of x_j for j < n
};

class IntervalMap : public MapModel {
 public:
  int dimension() const override { return 1; }
  virtual Ambient ambient() const = 0;
  virtual int branch_count() const = 0;
  // Index of the branch whose domain contains x (x in the ambient space).
  virtual int branch_of(real x) const = 0;
  virtual Arc branch_domain(int b) const = 0;
  virtual Arc branch_range(int b) const = 0;
  // Inverse of branch b.  On circle maps y may be any lifted position and the
  // result is the matching lifted position; on the interval y lies in the range.
  virtual real inverse(int b, real y) const = 0;
  // High-precision f and |f'|.
  virtual real forward(real x) const = 0;
  virtual real slope(real x) const = 0;
  // Orientation of branch b: +1 increasing, -1 decreasing.
  virtual int orientation(int b) const = 0;

  // Long double orbit with its branch digits.  Throws SingularPoint when the
  // orbit leaves the union of branch domains.
  virtual BranchOrbit branch_orbit(real x0, std::size_t n, std::uint64_t stream) const;

  // One solution of f(x) = y per branch whose range contains y.
  std::vector<real> branch_preimages(real y) const;

  Point evaluate(const Point& x) const override;
  double deriv_norm_inv(const Point& x) const override;
  double det_jacobian(const Point& x) const override;
  Point sample(Rng& rng) const override;

  // Measure of the union of branch domains (below 1 for truncated Gauss).
  real covered_measure() const;
};

class DoublingMap final : public IntervalMap {
 public:
  DoublingMap();
  std::string name() const override { return "doubling"; }
  Ambient ambient() const override { return Ambient::circle; }
  int branch_count() const override { return 2; }
  int branch_of(real x) const override;
  Arc branch_domain(int b) const override;
  Arc branch_range(int b) const override;
  real inverse(int b, real y) const override;
  real forward(real x) const override;
  real slope(real) const override { return 2; }
  int orientation(int) const override { return 1; }
  bool has_singular_set() const override { return false; }
  double dist_singular(const Point&) const override;
  Nondegeneracy nondegeneracy() const override { return {2.0, 0.0}; }
  void trajectory(const Point& x0, std::size_t n, std::uint64_t stream, std::vector<Point>& out) const override;
  // Exact shifts of a 64-bit window refilled from `stream`.
  BranchOrbit branch_orbit(real x0, std::size_t n, std::uint64_t stream) const override;
  std::map<std::string, double> parameters() const override { return {}; }
};

// x(1 + (2x)^alpha) on [0,1/2), 2x - 1 on [1/2,1).
class LsvMap final : public IntervalMap {
 public:
  explicit LsvMap(double alpha);
  std::string name() const override { return "lsv"; }
  double alpha() const { return alpha_; }
  Ambient ambient() const override { return Ambient::circle; }
  int branch_count() const override { return 2; }
  int branch_of(real x) const override;
  Arc branch_domain(int b) const override;
  Arc branch_range(int b) const override;
  real inverse(int b, real y) const override;
  real forward(real x) const override;
  real slope(real x) const override;
  int orientation(int) const override { return 1; }
  bool has_singular_set() const override { return false; }
  double dist_singular(const Point&) const override;
  Nondegeneracy nondegeneracy() const override;
  Point evaluate(const Point& p) const override;
  double deriv_norm_inv(const Point& p) const override;
  std::map<std::string, double> parameters() const override { return {{"alpha", alpha_}}; }

 private:
  real left_inverse(real y) const;
  real pow_alpha(real x) const;
  double alpha_;
};

// x -> 1/x mod 1 with branches k = 1..k_max; S = {0}.
class GaussMap final : public IntervalMap {
 public:
  explicit GaussMap(int k_max = 10000);
  std::string name() const override { return "gauss"; }
  int k_max() const { return k_max_; }
  Ambient ambient() const override { return Ambient::interval; }
  int branch_count() const override { return k_max_; }
  // Branch index is k-1 for the branch x -> 1/x - k.
  int branch_of(real x) const override;
  Arc branch_domain(int b) const override;
  Arc branch_range(int b) const override;
  real inverse(int b, real y) const override;
  real forward(real x) const override;
  real slope(real x) const override;
  int orientation(int) const override { return -1; }
  bool has_singular_set() const override { return true; }
  double dist_singular(const Point& x) const override;
  Nondegeneracy nondegeneracy() const override { return {1.0 + 1e-9, 2.0}; }
  Point evaluate(const Point& x) const override;
  std::map<std::string, double> parameters() const override { return {{"k_max", double(k_max_)}}; }
  // Lebesgue mass of (0, 1/(k_max+1)], the part left out by truncation.
  double excluded_mass() const { return 1.0 / (k_max_ + 1.0); }

 private:
  int k_max_;
};

// (s, x) -> (16 s mod 1, a0 + alpha sin(2 pi s) - x^2); critical set {x = 0}.
class VianaMap final : public MapModel {
 public:
  VianaMap(double a0 = 1.8, double alpha = 0.01);
  std::string name() const override { return "viana"; }
  int dimension() const override { return 2; }
  Point evaluate(const Point& p) const override;
  double deriv_norm_inv(const Point& p) const override;
  double det_jacobian(const Point& p) const override;
  bool has_singular_set() const override { return true; }
  double dist_singular(const Point& p) const override;
  Nondegeneracy nondegeneracy() const override { return {64.0, 1.0}; }
  Point sample(Rng& rng) const override;
  double ambient_volume() const override { return 2 * x_bound_; }
  void trajectory(const Point& x0, std::size_t n, std::uint64_t stream, std::vector<Point>& out) const override;
  std::map<std::string, double> parameters() const override { return {{"a0", a0_}, {"alpha", alpha_}}; }
  double x_bound() const { return x_bound_; }

 private:
  double a0_;
  double alpha_;
  double x_bound_;
};

struct ModelSpec {
  std::string name = "doubling";
  double alpha = 0.5;
  int k_max = 10000;
  double lambda = 0;  // 0 selects the model default
  double a0 = 1.8;
  double coupling = 0.01;  // Viana sin(2 pi s) amplitude
};

// Default lambda: doubling log 2, LSV 0.35, Gauss 2.37, Viana 0.2.
double default_lambda(const ModelSpec& spec);
std::unique_ptr<MapModel> make_model(const ModelSpec& spec);
std::unique_ptr<IntervalMap> make_interval_map(const ModelSpec& spec);

struct NondegeneracyReport {
  double B_hat = 0;
  double beta_hat = 0;
  double min_slope = 0;
  double max_slope = 0;
  std::size_t samples = 0;
  std::size_t s1_violations = 0;
  std::size_t lipschitz_pairs = 0;
  std::size_t lipschitz_violations = 0;
  double worst_lipschitz_ratio = 0;
  bool s1_ok() const { return s1_violations == 0; }
  bool passes() const { return s1_violations == 0 && lipschitz_violations == 0; }
};

// Estimates (B, beta) from samples and checks the power-law derivative bounds
// and the local Lipschitz bounds on log|f'| for pairs inside one branch.
NondegeneracyReport check_nondegeneracy(const IntervalMap& m, std::size_t sample_count, std::uint64_t seed);

}  // namespace ergolab
