#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {
const fs::path kWork = fs::path(ERGOLAB_TEST_WORKDIR) / "cli";

int run(const std::string& args) {
  const std::string cmd = std::string(ERGOLAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config() {
  const fs::path p = kWork / "doubling.cfg";
  std::ofstream(p) << "model = doubling\nsigma = 0.8408964152537145\nn_max = 30\ntower_seeds = 2000\n"
                      "gamma_sample = 500\ntheta_sample = 200\npair_sample = 200\n";
  return p.string();
}
}  // namespace

TEST_CASE("doubling pipeline") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string cfg = config();
  const std::string a = (kWork / "a").string(), b = (kWork / "b").string();

  REQUIRE(run("build-tower --config " + cfg + " --out " + a) == 0);
  CHECK(run("verify-tower --config " + cfg + " --out " + a) == 0);
  CHECK(run("diagnose --config " + cfg + " --out " + a) == 0);
  CHECK(run("tail-fit --config " + cfg + " --out " + a + " --set tail_family=exponential") == 0);
  for (const char* f : {"tower_manifest.json", "tower_steps.csv", "elements.csv", "verify_manifest.json",
                        "diagnostics.csv", "tail_return.csv", "tail_fit.json"})
    CHECK_MESSAGE(fs::exists(fs::path(a) / f), f);
  CHECK(slurp(fs::path(a) / "tower_steps.csv").find("# seed=1\n") != std::string::npos);
  CHECK(slurp(fs::path(a) / "diagnostics.csv").find("# seed=1\n") != std::string::npos);

  REQUIRE(run("build-tower --config " + cfg + " --out " + b + " --threads 2") == 0);
  CHECK(run("verify-tower --config " + cfg + " --out " + b) == 0);
  for (const char* f : {"tower_manifest.json", "tower_steps.csv", "elements.csv"})
    CHECK_MESSAGE(slurp(fs::path(a) / f) == slurp(fs::path(b) / f), f);

  CHECK(run("build-tower --config " + cfg + " --out " + b + " --seed 9") == 0);
  CHECK(slurp(fs::path(b) / "tower_steps.csv").find("# seed=9\n") != std::string::npos);
}

TEST_CASE("corrupted manifest is rejected") {
  const std::string cfg = config();
  const fs::path a = kWork / "a";
  REQUIRE(fs::exists(a / "tower_manifest.json"));
  std::string text = slurp(a / "tower_manifest.json");

  const fs::path broken = kWork / "truncated.json";
  std::ofstream(broken) << text.substr(0, text.size() / 2);
  CHECK(run("verify-tower --config " + cfg + " --out " + (kWork / "c").string() + " --manifest " +
            broken.string()) == 3);

  // Shift the right end of the first recorded U^0 off its grid position.
  const auto key = text.find("\"u\"");
  REQUIRE(key != std::string::npos);
  const auto first = text.find('"', text.find('[', text.find('[', key) + 1) + 1);
  const auto second = text.find('"', text.find(',', first) + 1) + 1;
  text.replace(second, text.find('"', second) - second, "0.5");
  const fs::path widened = kWork / "widened.json";
  std::ofstream(widened) << text;
  CHECK(run("verify-tower --config " + cfg + " --out " + (kWork / "c").string() + " --manifest " +
            widened.string()) == 3);
  CHECK(slurp(kWork / "c" / "verify_manifest.json").find("\"failures\": [\n      0") != std::string::npos);

  CHECK(run("verify-tower --config " + cfg + " --out " + (kWork / "missing").string()) == 2);
}

TEST_CASE("configuration errors exit with 2") {
  const std::string cfg = config();
  CHECK(run("build-tower --config " + cfg + " --set eps_collar=0.01 --out " + (kWork / "x").string()) == 2);
  CHECK(run("build-tower --set sigma=2 --out " + (kWork / "x").string()) == 2);
  CHECK(run("orbit-stats --set no_such_key=1") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("") == 2);
}

TEST_CASE("statistics subcommands") {
  const std::string out = (kWork / "s").string();
  CHECK(run("orbit-stats --set gamma_sample=300 --set hyp_points=50 --out " + out) == 0);
  CHECK(slurp(fs::path(out) / "gamma.csv").find("n,gamma_fraction,stderr") != std::string::npos);
  CHECK(run("hyperbolic-times --set model=lsv --set hyp_points=30 --set hyp_oracle=true --out " + out) == 0);
  CHECK(run("correlations --set corr_sample=20000 --out " + out) == 0);
  CHECK(run("clt --set observable=centered --set clt_n=100 --set clt_sample=500 --out " + out) == 0);
  CHECK(slurp(fs::path(out) / "clt.json").find("\"sigma2\"") != std::string::npos);
}
