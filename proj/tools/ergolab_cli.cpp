// Batch front end.  Exit codes: 0 success, 2 configuration error,
// 3 verification failure, 4 numerical failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ergolab/decay_lab.hpp"
#include "ergolab/expansion_stats.hpp"
#include "ergolab/induced_map.hpp"
#include "ergolab/io.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/rng.hpp"
#include "ergolab/run_config.hpp"
#include "ergolab/tower_builder.hpp"
#include "json.hpp"

using namespace ergolab;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kPointTag = 0x4e70;

enum Exit { ok = 0, config_error = 2, verification_failure = 3, numerical_failure = 4 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  std::vector<std::string> sets;
  std::string manifest;
};

RunConfig load(const Options& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("syntax", "--set expects key=value, got '" + kv + "'");
    set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) set_config_key(cfg, "seed", std::to_string(*o.seed));
  if (o.threads) set_config_key(cfg, "threads", std::to_string(*o.threads));
  if (o.out) cfg.out_dir = *o.out;
  validate_run_config(cfg);
  return cfg;
}

std::map<std::string, std::string> header(const RunConfig& cfg, const std::string& command) {
  return {{"command", command},
          {"model", cfg.model.name},
          {"seed", std::to_string(cfg.seed)},
          {"config_digest", config_digest(cfg)}};
}

Json header_json(const RunConfig& cfg, const std::string& command) {
  Json j;
  for (const auto& [k, v] : header(cfg, command)) j[k] = v;
  j["seed"] = cfg.seed;
  return j;
}

void write_json(const RunConfig& cfg, const std::string& file, const Json& j) {
  std::ofstream out = open_output(cfg.out_dir, file);
  out << j.dump(2) << '\n';
}

std::string out_path(const RunConfig& cfg, const std::string& file) {
  return (std::filesystem::path(cfg.out_dir) / file).string();
}

Observable observable(const std::string& name) {
  if (name == "centered") return [](const Point& p) { return p[0] - 0.5; };
  if (name == "cos") return [](const Point& p) { return std::cos(2 * M_PI * p[0]); };
  return [](const Point& p) { return p[0]; };
}

std::unique_ptr<IntervalMap> map_from_run(const TowerRun& run) {
  ModelSpec spec;
  spec.name = run.model;
  if (auto it = run.model_parameters.find("alpha"); it != run.model_parameters.end()) spec.alpha = it->second;
  if (auto it = run.model_parameters.find("k_max"); it != run.model_parameters.end())
    spec.k_max = static_cast<int>(it->second);
  spec.lambda = run.expansion.lambda;
  try {
    return make_interval_map(spec);
  } catch (const std::invalid_argument& e) {
    throw VerificationError(std::string("manifest names an unusable model: ") + e.what());
  }
}

TowerRun read_manifest(const RunConfig& cfg, const Options& o) {
  const std::string path = o.manifest.empty() ? out_path(cfg, "tower_manifest.json") : o.manifest;
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest_path", "cannot read '" + path + "'");
  return read_tower_manifest(in);
}

Json fit_json(const TailFit& f) {
  return {{"family", to_string(f.family)}, {"amplitude", f.amplitude}, {"rate", f.rate},
          {"rate_lo", f.rate_lo},          {"rate_hi", f.rate_hi},     {"r2", f.r2},
          {"n_lo", f.n_lo},                {"n_hi", f.n_hi},           {"points", f.points}};
}

// ----------------------------------------------------------------- commands

int orbit_stats(const RunConfig& cfg) {
  auto m = build_model(cfg);
  const ExpansionConfig c = resolve_expansion(cfg, *m);
  GammaSeries g = gamma_fraction(*m, c, cfg.gamma_sample, cfg.seed, cfg.threads);
  auto meta = header(cfg, "orbit-stats");
  meta["sample"] = std::to_string(g.sample);
  meta["censored"] = std::to_string(g.censored);
  meta["singular"] = std::to_string(g.singular);
  {
    std::ofstream out = open_output(cfg.out_dir, "gamma.csv");
    write_series_csv(out, g.fraction, "gamma_fraction", meta);
  }
  auto hist = [&](const std::string& file, const std::string& col, const std::vector<std::size_t>& h) {
    std::ofstream out = open_output(cfg.out_dir, file);
    write_header(out, meta);
    out << col << ",count\n";
    for (std::size_t i = 0; i + 1 < h.size(); ++i) out << i << ',' << h[i] << '\n';
    if (!h.empty()) out << "censored," << h.back() << '\n';
  };
  hist("expansion_hist.csv", "E", g.expansion_hist);
  hist("recurrence_hist.csv", "R", g.recurrence_hist);

  std::vector<HyperbolicTimeRecord> recs(cfg.hyp_points);
  std::vector<char> singular(cfg.hyp_points, 0);
  parallel_chunks(cfg.hyp_points, 64, cfg.threads, [&](const ChunkRange& cr) {
    for (std::size_t i = cr.begin; i < cr.end; ++i) {
      Rng rng = make_rng(cfg.seed, kPointTag, i);
      Point x = m->sample(rng);
      try {
        recs[i] = hyperbolic_times(*m, c, x, substream(cfg.seed, kPointTag + 1, i));
      } catch (const SingularPoint&) {
        recs[i].x = x;
        singular[i] = 1;
      }
    }
  });
  std::ofstream out = open_output(cfg.out_dir, "hyperbolic_density.csv");
  write_header(out, meta);
  out << "index,x0,x1,density,count,first\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    out << i << ',' << fmt_real(r.x[0]) << ',' << fmt_real(r.x[1]) << ',' << (singular[i] ? "nan" : fmt_real(r.density))
        << ',' << r.times.size() << ',' << (r.times.empty() ? 0 : r.times.front()) << '\n';
  }
  std::cout << "gamma_fraction(" << g.fraction.size() << ") = " << fmt_real(g.fraction.points.back().value)
            << "; censored " << g.censored << " of " << g.sample << "\n";
  return ok;
}

int hyperbolic_times_cmd(const RunConfig& cfg) {
  auto m = build_model(cfg);
  const ExpansionConfig c = resolve_expansion(cfg, *m);
  struct Row {
    Point x{};
    HyperbolicTimeRecord fast;
    long mismatches = -1;
    bool singular = false;
  };
  std::vector<Row> rows(cfg.hyp_points);
  parallel_chunks(rows.size(), 16, cfg.threads, [&](const ChunkRange& cr) {
    for (std::size_t i = cr.begin; i < cr.end; ++i) {
      Rng rng = make_rng(cfg.seed, kPointTag, i);
      rows[i].x = m->sample(rng);
      try {
        OrbitRecord orbit = compute_orbit(*m, c, rows[i].x, substream(cfg.seed, kPointTag + 1, i));
        rows[i].fast = hyperbolic_times(orbit, c);
        if (cfg.hyp_oracle) {
          HyperbolicTimeRecord slow = hyperbolic_times_oracle(*m, orbit, c);
          std::vector<std::size_t> diff;
          std::set_symmetric_difference(rows[i].fast.times.begin(), rows[i].fast.times.end(), slow.times.begin(),
                                        slow.times.end(), std::back_inserter(diff));
          rows[i].mismatches = static_cast<long>(diff.size());
        }
      } catch (const SingularPoint&) {
        rows[i].singular = true;
      }
    }
  });
  std::size_t discrepancies = 0;
  std::ofstream out = open_output(cfg.out_dir, "hyperbolic_times.csv");
  auto meta = header(cfg, "hyperbolic-times");
  meta["horizon"] = std::to_string(c.horizon);
  write_header(out, meta);
  out << "index,x0,x1,count,density,first,last,oracle_mismatches\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& t = r.fast.times;
    out << i << ',' << fmt_real(r.x[0]) << ',' << fmt_real(r.x[1]) << ',' << t.size() << ','
        << (r.singular ? "nan" : fmt_real(r.fast.density)) << ',' << (t.empty() ? 0 : t.front()) << ','
        << (t.empty() ? 0 : t.back()) << ',' << r.mismatches << '\n';
    if (r.mismatches > 0) discrepancies += static_cast<std::size_t>(r.mismatches);
  }
  if (cfg.hyp_oracle) {
    std::cout << "oracle discrepancies: " << discrepancies << "\n";
    if (discrepancies > 0) {
      std::cerr << "report: " << out_path(cfg, "hyperbolic_times.csv") << "\n";
      return verification_failure;
    }
  }
  return ok;
}

int build_tower(const RunConfig& cfg) {
  auto m = build_interval_map(cfg);
  const ExpansionConfig c = resolve_expansion(cfg, *m);
  TowerRun run = run_tower(*m, c, cfg.tower, cfg.threads);
  {
    std::ofstream out = open_output(cfg.out_dir, "tower_manifest.json");
    write_tower_manifest(out, run);
  }
  {
    std::ofstream out = open_output(cfg.out_dir, "tower_steps.csv");
    write_tower_csv(out, run);
  }
  std::size_t violations = 0;
  {
    std::ofstream out = open_output(cfg.out_dir, "collar.csv");
    write_header(out, header(cfg, "build-tower"));
    out << "n,pass,overlap,offending\n";
    for (const CollarReport& r : run.collar) {
      out << r.n << ',' << (r.pass ? 1 : 0) << ',' << fmt_real(static_cast<double>(r.overlap)) << ','
          << r.offending.size() << '\n';
      violations += !r.pass;
    }
  }
  const std::size_t n_max = cfg.tower.n_max;
  std::cout << "elements " << run.elements.size() << "; Leb(Delta_" << n_max << ")/Leb(Delta_0) = "
            << fmt_real(run.sampled_delta(n_max) / run.base_measure()) << "; eps " << fmt_real(run.eps)
            << " (bound " << fmt_real(run.eps_bound) << "); collar violations " << violations << "\n";
  if (violations > 0) {
    std::cerr << "report: " << out_path(cfg, "collar.csv") << "\n";
    return verification_failure;
  }
  return ok;
}

int verify_tower(const RunConfig& cfg, const Options& o) {
  TowerRun run = read_manifest(cfg, o);
  auto m = map_from_run(run);
  InducedMap im(*m, run, 101, cfg.threads);
  MarkovReport mk = verify_markov(im);
  ExpansionReport ex;
  bool expanding = true;
  try {
    ex = verify_expansion(im);
  } catch (const ExpansionFailure& f) {
    expanding = false;
    ex.element = f.element();
    ex.log_lambda_hat = im.log_lambda_hat();
    ex.lambda_hat = im.lambda_hat();
  }
  DistortionReport dr = verify_distortion(im, cfg.pair_sample, cfg.seed);
  {
    std::ofstream out = open_output(cfg.out_dir, "elements.csv");
    write_element_csv(out, im);
  }
  {
    std::ofstream out = open_output(cfg.out_dir, "verify_manifest.json");
    write_induced_manifest(out, im, mk, ex, dr);
  }
  std::cout << "markov " << mk.passed << "/" << mk.elements << " (max residual " << fmt_real(mk.max_residual)
            << "); lambda_hat " << fmt_real(ex.lambda_hat) << "; B_tilde " << fmt_real(dr.b_tilde) << "\n";
  if (!mk.pass() || !expanding) {
    for (std::size_t e : mk.failures) std::cerr << "markov failure: element " << e << "\n";
    if (!expanding) std::cerr << "expansion failure: element " << ex.element << "\n";
    std::cerr << "report: " << out_path(cfg, "verify_manifest.json") << "\n";
    return verification_failure;
  }
  return ok;
}

int tail_fit_cmd(const RunConfig& cfg, const Options& o) {
  const TailFamily family = tail_family_from_string(cfg.tail_family);
  Json j = header_json(cfg, "tail-fit");
  bool any = false;
  std::optional<double> rate_r, rate_g;

  const bool have_manifest = !o.manifest.empty() || std::filesystem::exists(out_path(cfg, "tower_manifest.json"));
  if (have_manifest) {
    TowerRun run = read_manifest(cfg, o);
    StatSeries tail = return_tail_series(run);
    {
      std::ofstream out = open_output(cfg.out_dir, "tail_return.csv");
      write_series_csv(out, tail, "leb_R_gt_n", header(cfg, "tail-fit"));
    }
    try {
      TailFit f = tail_fit(tail, family, cfg.tail_n_lo, cfg.tail_n_hi);
      j["return_time"] = fit_json(f);
      j["return_time_best"] = fit_json(best_tail_fit(tail, cfg.tail_n_lo, cfg.tail_n_hi));
      rate_r = f.rate;
      any = true;
    } catch (const NotFittable& e) {
      j["return_time"] = {{"error", e.what()}};
    }
  }

  auto m = build_model(cfg);
  const ExpansionConfig c = resolve_expansion(cfg, *m);
  GammaSeries g = gamma_fraction(*m, c, cfg.gamma_sample, cfg.seed, cfg.threads);
  {
    std::ofstream out = open_output(cfg.out_dir, "tail_gamma.csv");
    write_series_csv(out, g.fraction, "gamma_fraction", header(cfg, "tail-fit"));
  }
  try {
    TailFit f = tail_fit(g.fraction, family, cfg.tail_n_lo, cfg.tail_n_hi);
    j["gamma"] = fit_json(f);
    j["gamma_best"] = fit_json(best_tail_fit(g.fraction, cfg.tail_n_lo, cfg.tail_n_hi));
    rate_g = f.rate;
    any = true;
  } catch (const NotFittable& e) {
    j["gamma"] = {{"error", e.what()}};
  }
  if (rate_r && rate_g && family == TailFamily::polynomial) {
    j["return_rate_at_least_gamma_rate_minus_half"] = *rate_r >= *rate_g - 0.5;
  }
  write_json(cfg, "tail_fit.json", j);
  std::cout << j.dump(2) << "\n";
  return any ? ok : numerical_failure;
}

int correlations_cmd(const RunConfig& cfg) {
  auto m = build_model(cfg);
  CorrelationConfig cc;
  cc.n_max = cfg.corr_n_max;
  cc.sample = cfg.corr_sample;
  cc.seed = cfg.seed;
  cc.threads = cfg.threads;
  const Observable phi = observable(cfg.observable);
  CorrelationResult r = correlation(*m, phi, phi, cc);
  auto meta = header(cfg, "correlations");
  meta["observable"] = cfg.observable;
  {
    std::ofstream out = open_output(cfg.out_dir, "correlations.csv");
    write_correlation_csv(out, r, meta);
  }
  Json j = header_json(cfg, "correlations");
  j["observable"] = cfg.observable;
  j["mean"] = r.mean_phi;
  j["oscillation"] = r.oscillation;
  try {
    StatSeries tail = r.c;
    tail.points.erase(tail.points.begin());  // C_0 is the variance
    j["fit"] = fit_json(tail_fit(tail, tail_family_from_string(cfg.tail_family), cfg.tail_n_lo, cfg.tail_n_hi));
  } catch (const NotFittable& e) {
    j["fit"] = {{"error", e.what()}};
  }
  write_json(cfg, "correlations.json", j);
  std::cout << j.dump(2) << "\n";
  return ok;
}

int clt_cmd(const RunConfig& cfg) {
  auto m = build_model(cfg);
  CltConfig cc;
  cc.n = cfg.clt_n;
  cc.sample = cfg.clt_sample;
  cc.seed = cfg.seed;
  cc.threads = cfg.threads;
  CltReport r = clt_check(*m, observable(cfg.observable), cc);
  Json j = header_json(cfg, "clt");
  j["observable"] = cfg.observable;
  j["n"] = cc.n;
  j["sample"] = cc.sample;
  j["sigma2"] = r.sigma2;
  j["sigma2_stderr"] = r.sigma2_stderr;
  j["gk_terms"] = r.gk_terms;
  j["empirical_var"] = r.empirical_var;
  j["mean"] = r.mean;
  j["ks"] = r.ks;
  j["coboundary"] = r.coboundary;
  write_json(cfg, "clt.json", j);
  std::cout << j.dump(2) << "\n";
  return ok;
}

int diagnose(const RunConfig& cfg, const Options& o) {
  TowerRun run = read_manifest(cfg, o);
  auto m = map_from_run(run);
  ExpansionConfig c = run.expansion;
  const std::size_t n_max = run.config.n_max;
  c.horizon = std::max(c.horizon, n_max);
  GammaSeries g = gamma_fraction(*m, c, cfg.gamma_sample, cfg.seed, cfg.threads);
  std::vector<double> gamma_leb(n_max + 1, 1.0);
  for (std::size_t n = 1; n <= n_max; ++n) gamma_leb[n] = g.fraction.points[n - 1].value;
  const IntervalSet base = IntervalSet::of(Arc::ball(run.base.ambient, run.base.p, run.base.delta0));
  DiagnosticsConfig dc;
  dc.gamma = cfg.diag_gamma;
  dc.theta = theta_density(*m, c, base, std::min<std::size_t>(n_max, c.horizon), cfg.theta_sample, cfg.seed,
                           cfg.threads);
  DecayDiagnostics d = decay_diagnostics(run, gamma_leb, dc);
  auto meta = header(cfg, "diagnose");
  meta["model"] = run.model;
  {
    std::ofstream out = open_output(cfg.out_dir, "diagnostics.csv");
    write_diagnostics_csv(out, d, meta);
  }
  std::cout << "a0 " << fmt_real(d.a0_hat) << "; b1 " << fmt_real(d.b1_hat) << "; c1 " << fmt_real(d.c1_hat)
            << "; c2 " << fmt_real(d.c2_hat) << "; b1+c1<1 " << (d.b1_c1_ok() ? "yes" : "no") << "\n";
  return ok;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const VerificationError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return verification_failure;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  } catch (const SingularPoint& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error [out_dir]: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical_failure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tower construction and decay-of-correlation experiments for non-uniformly expanding maps"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--set", o.sets, "override one configuration key (key=value)");
  };
  auto with_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", o.manifest, "tower manifest (default <out>/tower_manifest.json)");
  };

  std::map<std::string, std::function<int(const RunConfig&)>> commands{
      {"orbit-stats", orbit_stats},
      {"hyperbolic-times", hyperbolic_times_cmd},
      {"build-tower", build_tower},
      {"verify-tower", [&](const RunConfig& c) { return verify_tower(c, o); }},
      {"tail-fit", [&](const RunConfig& c) { return tail_fit_cmd(c, o); }},
      {"correlations", correlations_cmd},
      {"clt", clt_cmd},
      {"diagnose", [&](const RunConfig& c) { return diagnose(c, o); }},
  };
  const std::map<std::string, std::string> help{
      {"orbit-stats", "Gamma_n fraction with its histograms, plus hyperbolic-time density"},
      {"hyperbolic-times", "per-point hyperbolic times, optionally against the direct oracle"},
      {"build-tower", "run the tower construction and write its manifest"},
      {"verify-tower", "check the return map recorded in a manifest"},
      {"tail-fit", "fit the return-time and Gamma_n tails"},
      {"correlations", "correlation function C_n of the configured observable"},
      {"clt", "Green-Kubo variance and KS distance of Birkhoff sums"},
      {"diagnose", "ratio diagnostics of a tower run"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    common(sub);
    if (name == "verify-tower" || name == "tail-fit" || name == "diagnose") with_manifest(sub);
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return config_error;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    return run_guarded([&, name = name] { return commands.at(name)(load(o)); });
  }
  return config_error;
}
