#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ergolab {

struct StatPoint {
  double n = 0;
  double value = 0;
  double error = 0;  // standard error
};

struct StatSeries {
  std::vector<StatPoint> points;
  std::string model;
  std::string config_digest;
  std::uint64_t seed = 0;

  void add(double n, double value, double error) { points.push_back({n, value, error}); }
  std::size_t size() const { return points.size(); }
};

}  // namespace ergolab
