#include "ergolab/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "ergolab/errors.hpp"
#include "ergolab/io.hpp"
#include "ergolab/preballs.hpp"

namespace ergolab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("value_type", key + " expects a finite number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("value_type", key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("value_type", key + " expects true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <class T>
Setter real_key(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = to_double(k, v); };
}
template <class T>
Setter size_key(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    c.*field = static_cast<T>(to_uint(k, v));
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model", [](RunConfig& c, const std::string&, const std::string& v) { c.model.name = v; }},
      {"alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.alpha = to_double(k, v); }},
      {"k_max",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.k_max = static_cast<int>(to_uint(k, v)); }},
      {"viana_a0", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.a0 = to_double(k, v); }},
      {"viana_coupling",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model.coupling = to_double(k, v); }},
      {"lambda", real_key(&RunConfig::lambda)},
      {"expansion_threshold", real_key(&RunConfig::expansion_threshold)},
      {"eps_rec", real_key(&RunConfig::eps_rec)},
      {"delta_rec", real_key(&RunConfig::delta_rec)},
      {"sigma", real_key(&RunConfig::sigma)},
      {"delta_hyp", real_key(&RunConfig::delta_hyp)},
      {"b_exponent", real_key(&RunConfig::b_exponent)},
      {"horizon", size_key(&RunConfig::horizon)},
      {"delta0", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.delta0 = to_double(k, v); }},
      {"delta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.delta1 = to_double(k, v); }},
      {"eps_collar", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.eps = to_double(k, v); }},
      {"eps_collar_zero",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.epsilon_zero = to_bool(k, v); }},
      {"allow_eps_above_bound",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.allow_eps_above_bound = to_bool(k, v); }},
      {"r0", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.r0 = to_uint(k, v); }},
      {"n_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.n_max = to_uint(k, v); }},
      {"tower_seeds", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.seeds = to_uint(k, v); }},
      {"strict_base",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.strict_base = to_bool(k, v); }},
      {"exact_view", [](RunConfig& c, const std::string& k, const std::string& v) { c.tower.exact_view = to_bool(k, v); }},
      {"resolution_log2",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.tower.resolution_log = to_double(k, v) * std::log(2.0);
       }},
      {"gamma_sample", size_key(&RunConfig::gamma_sample)},
      {"hyp_points", size_key(&RunConfig::hyp_points)},
      {"hyp_oracle", [](RunConfig& c, const std::string& k, const std::string& v) { c.hyp_oracle = to_bool(k, v); }},
      {"theta_sample", size_key(&RunConfig::theta_sample)},
      {"pair_sample", size_key(&RunConfig::pair_sample)},
      {"corr_sample", size_key(&RunConfig::corr_sample)},
      {"corr_n_max", size_key(&RunConfig::corr_n_max)},
      {"observable", [](RunConfig& c, const std::string&, const std::string& v) { c.observable = v; }},
      {"clt_n", size_key(&RunConfig::clt_n)},
      {"clt_sample", size_key(&RunConfig::clt_sample)},
      {"tail_n_lo", real_key(&RunConfig::tail_n_lo)},
      {"tail_n_hi", real_key(&RunConfig::tail_n_hi)},
      {"tail_family", [](RunConfig& c, const std::string&, const std::string& v) { c.tail_family = v; }},
      {"diag_gamma", real_key(&RunConfig::diag_gamma)},
      {"seed",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = c.tower.seed = to_uint(k, v); }},
      {"threads", size_key(&RunConfig::threads)},
      {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown_key", "'" + key + "' is not a configuration key");
  it->second(cfg, key, value);
  cfg.given[key] = value;
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("syntax", "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (cfg.given.count(key)) throw ConfigError("duplicate_key", "'" + key + "' set twice");
    set_config_key(cfg, key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config_path", "cannot read '" + path + "'");
  return parse_run_config(in);
}

std::unique_ptr<MapModel> build_model(const RunConfig& cfg) {
  ModelSpec spec = cfg.model;
  spec.lambda = cfg.lambda;
  try {
    return make_model(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model_parameters", e.what());
  }
}

std::unique_ptr<IntervalMap> build_interval_map(const RunConfig& cfg) {
  ModelSpec spec = cfg.model;
  spec.lambda = cfg.lambda;
  try {
    return make_interval_map(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("one_dimensional_model", e.what());
  }
}

ExpansionConfig resolve_expansion(const RunConfig& cfg, const MapModel& m) {
  ExpansionConfig c = default_expansion_config(m, cfg.horizon, cfg.seed);
  if (cfg.expansion_threshold > 0) c.expansion_threshold = cfg.expansion_threshold;
  if (cfg.eps_rec > 0) c.eps_rec = cfg.eps_rec;
  if (cfg.delta_rec > 0) c.delta_rec = cfg.delta_rec;
  if (cfg.sigma > 0) c.sigma = cfg.sigma;
  if (cfg.delta_hyp > 0) c.delta_hyp = cfg.delta_hyp;
  if (cfg.b_exponent > 0) c.b = cfg.b_exponent;
  return c;
}

void validate_run_config(const RunConfig& cfg) {
  const auto& name = cfg.model.name;
  if (name != "doubling" && name != "lsv" && name != "gauss" && name != "viana")
    throw ConfigError("model_name", "model must be doubling, lsv, gauss or viana");
  if (name == "lsv" && !(cfg.model.alpha > 0 && cfg.model.alpha < 1))
    throw ConfigError("lsv_alpha_range", "alpha must lie in (0,1)");
  if (cfg.lambda < 0) throw ConfigError("lambda_positive", "lambda must be > 0");
  if (cfg.sigma != 0 && !(cfg.sigma > 0 && cfg.sigma < 1)) throw ConfigError("sigma_range", "sigma must lie in (0,1)");
  if (cfg.threads == 0) throw ConfigError("threads_positive", "threads must be >= 1");
  if (cfg.observable != "identity" && cfg.observable != "centered" && cfg.observable != "cos")
    throw ConfigError("observable_name", "observable must be identity, centered or cos");
  if (!(cfg.tail_n_lo < cfg.tail_n_hi)) throw ConfigError("tail_window", "tail_n_lo must be below tail_n_hi");
  if (cfg.tower.r0 == 0) throw ConfigError("r0_positive", "r0 must be >= 1");
  if (cfg.tower.n_max < cfg.tower.r0) throw ConfigError("n_max_at_least_r0", "n_max must be >= r0");

  std::unique_ptr<MapModel> m = build_model(cfg);
  const ExpansionConfig ec = resolve_expansion(cfg, *m);
  ec.validate(*m);

  const auto* im = dynamic_cast<const IntervalMap*>(m.get());
  if (!im) return;
  BaseGeometry g = make_base_geometry(*im, cfg.tower.delta0, cfg.tower.delta1, cfg.tower.strict_base);
  const double bound = collar_epsilon_bound(g, ec.sigma);
  if (!cfg.tower.epsilon_zero && cfg.tower.eps >= 0 && !(cfg.tower.eps < bound) && !cfg.tower.allow_eps_above_bound)
    throw ConfigError("collar_epsilon_bound",
                      "eps_collar=" + fmt_real(cfg.tower.eps) + " must be below " + fmt_real(bound));
}

std::string canonical_text(const RunConfig& cfg) {
  std::ostringstream os;
  const TowerConfig& t = cfg.tower;
  std::map<std::string, std::string> kv{
      {"model", cfg.model.name},
      {"alpha", fmt_real(cfg.model.alpha)},
      {"k_max", std::to_string(cfg.model.k_max)},
      {"viana_a0", fmt_real(cfg.model.a0)},
      {"viana_coupling", fmt_real(cfg.model.coupling)},
      {"lambda", fmt_real(cfg.lambda)},
      {"expansion_threshold", fmt_real(cfg.expansion_threshold)},
      {"eps_rec", fmt_real(cfg.eps_rec)},
      {"delta_rec", fmt_real(cfg.delta_rec)},
      {"sigma", fmt_real(cfg.sigma)},
      {"delta_hyp", fmt_real(cfg.delta_hyp)},
      {"b_exponent", fmt_real(cfg.b_exponent)},
      {"horizon", std::to_string(cfg.horizon)},
      {"delta0", fmt_real(t.delta0)},
      {"delta1", fmt_real(t.delta1)},
      {"eps_collar", fmt_real(t.eps)},
      {"eps_collar_zero", t.epsilon_zero ? "true" : "false"},
      {"allow_eps_above_bound", t.allow_eps_above_bound ? "true" : "false"},
      {"r0", std::to_string(t.r0)},
      {"n_max", std::to_string(t.n_max)},
      {"tower_seeds", std::to_string(t.seeds)},
      {"strict_base", t.strict_base ? "true" : "false"},
      {"exact_view", t.exact_view ? "true" : "false"},
      {"resolution_log2", fmt_real(t.resolution_log / std::log(2.0))},
      {"gamma_sample", std::to_string(cfg.gamma_sample)},
      {"hyp_points", std::to_string(cfg.hyp_points)},
      {"hyp_oracle", cfg.hyp_oracle ? "true" : "false"},
      {"theta_sample", std::to_string(cfg.theta_sample)},
      {"pair_sample", std::to_string(cfg.pair_sample)},
      {"corr_sample", std::to_string(cfg.corr_sample)},
      {"corr_n_max", std::to_string(cfg.corr_n_max)},
      {"observable", cfg.observable},
      {"clt_n", std::to_string(cfg.clt_n)},
      {"clt_sample", std::to_string(cfg.clt_sample)},
      {"tail_n_lo", fmt_real(cfg.tail_n_lo)},
      {"tail_n_hi", fmt_real(cfg.tail_n_hi)},
      {"tail_family", cfg.tail_family},
      {"diag_gamma", fmt_real(cfg.diag_gamma)},
      {"seed", std::to_string(cfg.seed)},
  };
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  return os.str();
}

std::string config_digest(const RunConfig& cfg) { return digest_hex(canonical_text(cfg)); }

}  // namespace ergolab
