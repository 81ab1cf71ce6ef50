#pragma once
// Flat key=value run configuration shared by every subcommand.

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <string>

#include "ergolab/expansion_stats.hpp"
#include "ergolab/map_models.hpp"
#include "ergolab/tower_builder.hpp"

namespace ergolab {

struct RunConfig {
  ModelSpec model;

  // Expansion overrides; zero keeps the model-derived default.
  double lambda = 0;
  double expansion_threshold = 0;
  double eps_rec = 0;
  double delta_rec = 0;
  double sigma = 0;
  double delta_hyp = 0;
  double b_exponent = 0;
  std::size_t horizon = 1000;

  TowerConfig tower;

  // Monte Carlo sizes.
  std::size_t gamma_sample = 10000;
  std::size_t hyp_points = 1000;
  bool hyp_oracle = false;
  std::size_t theta_sample = 2000;
  std::size_t pair_sample = 2000;
  std::size_t corr_sample = 100000;
  std::size_t corr_n_max = 10;
  std::string observable = "identity";  // identity, centered, cos
  std::size_t clt_n = 2000;
  std::size_t clt_sample = 20000;
  double tail_n_lo = 1;
  double tail_n_hi = 1e18;
  std::string tail_family = "polynomial";
  double diag_gamma = 1.8;

  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out_dir = "out";

  // Keys exactly as read, for output headers.
  std::map<std::string, std::string> given;
};

// Unknown keys and unparsable values raise ConfigError.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// Applies one key, as from a config line.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

// Model with the configured lambda; ConfigError on bad parameters.
std::unique_ptr<MapModel> build_model(const RunConfig& cfg);
std::unique_ptr<IntervalMap> build_interval_map(const RunConfig& cfg);

// Expansion configuration with defaults filled in from the model.
ExpansionConfig resolve_expansion(const RunConfig& cfg, const MapModel& m);

// Checks every constraint that can be decided without a tower run, the
// collar bound included for 1D models.
void validate_run_config(const RunConfig& cfg);

// Canonical text (sorted keys, defaults included) and its digest.
std::string canonical_text(const RunConfig& cfg);
std::string config_digest(const RunConfig& cfg);

}  // namespace ergolab
