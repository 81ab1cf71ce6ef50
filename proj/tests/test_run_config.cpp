#include <sstream>

#include "doctest.h"
#include "ergolab/run_config.hpp"

using namespace ergolab;

namespace {
std::string violated(const std::string& text) {
  std::istringstream in(text);
  try {
    validate_run_config(parse_run_config(in));
  } catch (const ConfigError& e) {
    return e.constraint();
  }
  return "";
}
}  // namespace

TEST_CASE("parse keys and comments") {
  std::istringstream in("# doubling run\nmodel = lsv\nalpha=0.3   # exponent\n\nseed = 42\ntower_seeds = 500\n");
  RunConfig c = parse_run_config(in);
  CHECK(c.model.name == "lsv");
  CHECK(c.model.alpha == 0.3);
  CHECK(c.seed == 42);
  CHECK(c.tower.seed == 42);
  CHECK(c.tower.seeds == 500);
  CHECK(c.tower.delta0 == 0.01);
  CHECK(c.given.size() == 4);
}

TEST_CASE("syntax errors name the problem") {
  CHECK(violated("model doubling\n") == "syntax");
  CHECK(violated("seed = 1\nseed = 2\n") == "duplicate_key");
  CHECK(violated("colour = red\n") == "unknown_key");
  CHECK(violated("delta0 = small\n") == "value_type");
  CHECK(violated("n_max = -3\n") == "value_type");
  CHECK(violated("exact_view = maybe\n") == "value_type");
}

TEST_CASE("constraint relations are enforced at load") {
  CHECK(violated("") == "");
  CHECK(violated("sigma = 1.2\n") == "sigma_range");
  CHECK(violated("b_exponent = 0.6\n") == "b_exponent_bound");
  CHECK(violated("delta0 = 0.01\ndelta1 = 0.6\n") == "delta1_range");
  // Only a strict base enforces sqrt(delta0) <= delta1/4.
  CHECK(violated("delta0 = 0.01\ndelta1 = 0.1\n") == "");
  CHECK(violated("delta0 = 0.01\ndelta1 = 0.1\nstrict_base = true\n") == "base_radius_ratio");
  CHECK(violated("delta0 = 0.0004\ndelta1 = 0.1\nstrict_base = true\n") == "");
  CHECK(violated("eps_collar = 0.001\n") == "collar_epsilon_bound");
  CHECK(violated("eps_collar = 0.001\nallow_eps_above_bound = true\n") == "");
  CHECK(violated("model = henon\n") == "model_name");
  CHECK(violated("model = lsv\nalpha = 1.5\n") == "lsv_alpha_range");
  CHECK(violated("horizon = 10\n") == "horizon_min");
  CHECK(violated("r0 = 20\nn_max = 10\n") == "n_max_at_least_r0");
  CHECK(violated("observable = sin\n") == "observable_name");
}

TEST_CASE("digest follows the effective configuration") {
  std::istringstream a("seed = 3\n"), b("# same\nseed=3\nthreads = 4\nout_dir = elsewhere\n"), c("seed = 4\n");
  const RunConfig ca = parse_run_config(a), cb = parse_run_config(b), cc = parse_run_config(c);
  CHECK(config_digest(ca) == config_digest(cb));
  CHECK(config_digest(ca) != config_digest(cc));
  CHECK(canonical_text(ca).find("seed=3\n") != std::string::npos);
}

TEST_CASE("expansion overrides") {
  RunConfig c;
  c.sigma = 0.9;
  auto m = build_model(c);
  ExpansionConfig e = resolve_expansion(c, *m);
  CHECK(e.sigma == 0.9);
  CHECK(e.lambda == doctest::Approx(std::log(2.0)));
  c.model.name = "viana";
  CHECK_THROWS_AS(build_interval_map(c), ConfigError);
}
