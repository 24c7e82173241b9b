#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "coarse_forge/config.hpp"
#include "coarse_forge/csv.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/experiments.hpp"
#include "doctest.h"

using namespace cforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("cf_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + CF_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string key_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

const char* kSmallGauss =
    "experiment = error-vs-bound\n"
    "model = nr-gauss\n"
    "gamma = 0.5\n"
    "T = 0.5\n"
    "dt = 1e-2\n"
    "n_paths = 200\n"
    "n_samples = 2e4\n"
    "nodes = 401\n"
    "seed = 3\n";

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(
      "# comment\n"
      "experiment = scaling   # trailing comment\n"
      "model = two-scale\n"
      "eps = 0.2\n"
      "n_paths = 1e4\n"
      "eps_list = 0.2, 0.1\n"
      "check_dt_halving = yes\n");
  CHECK(c.experiment == ExperimentKind::scaling);
  CHECK(c.model == "two-scale");
  CHECK(c.params.at("eps") == 0.2);
  CHECK(c.n_paths == 10'000);
  CHECK(c.eps_list == std::vector<double>{0.2, 0.1});
  CHECK(c.check_dt_halving);
}

TEST_CASE("config errors name the offending key") {
  CHECK(key_of("colour = red\n") == "colour");
  CHECK(key_of("dt = 1e-3\ndt = 1e-4\n") == "dt");
  CHECK(key_of("dt = fast\n") == "dt");
  CHECK(key_of("dt = -1\n") == "dt");
  CHECK(key_of("n_paths = 2.5\n") == "n_paths");
  CHECK(key_of("experiment = everything\n") == "experiment");
  CHECK(key_of("model = lorenz\n") == "model");
  CHECK(key_of("model = nr-gauss\neps = 0.1\n") == "eps");
  CHECK(key_of("check_dt_halving = maybe\n") == "check_dt_halving");
  CHECK(key_of("z_min = 1\nz_max = 0\n") == "z_max");
  CHECK(key_of("dt = 1e-3\n") == "<none>");
  CHECK_THROWS_AS(load_config("/nonexistent/cf.cfg"), ConfigError);
}

TEST_CASE("summary helpers") {
  // KS distance of {0.5} against U(0,1) is 0.5; of a fine uniform grid it is 1/(2n)
  auto uni = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_distance({0.5}, uni) == doctest::Approx(0.5));
  std::vector<double> grid;
  for (int i = 0; i < 100; ++i) grid.push_back((i + 0.5) / 100.0);
  CHECK(ks_distance(grid, uni) == doctest::Approx(0.005));
  CHECK(loglog_slope({1.0, 2.0, 4.0}, {3.0, 12.0, 48.0}) == doctest::Approx(2.0));
  CHECK(loglog_slope({0.1, 0.2}, {5.0, 2.5}) == doctest::Approx(-1.0));

  SummaryRow r{"m", 1.0, std::nullopt, 1.0, 0.0, "<="};
  CHECK(r.pass());
  r.value = 1.5;
  CHECK_FALSE(r.pass());
  r.relation = "~=";
  r.tolerance = 0.5;
  CHECK(r.pass());
  r.relation = "in";
  r.bound = 1.0;
  r.tolerance = 2.0;
  CHECK(r.pass());
  r.value = 2.5;
  CHECK_FALSE(r.pass());
  r.relation = "report";
  CHECK(r.pass());
}

TEST_CASE("cli: a passing run writes its CSVs and is reproducible") {
  const auto dir = scratch("repro");
  write_file(dir / "run.cfg", kSmallGauss);
  const auto cfg = (dir / "run.cfg").string();
  REQUIRE(run_cli("run " + cfg + " --quiet --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli("run " + cfg + " -q --out " + (dir / "b").string()) == 0);
  REQUIRE(run_cli("run " + cfg + " -q --out " + (dir / "c").string(),
                  "COARSE_FORGE_THREADS=2") == 0);
  for (const char* f : {"summary.csv", "diagnostics.csv", "per_path_errors.csv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(dir / "a" / f));
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
    CHECK(read_file(dir / "a" / f) == read_file(dir / "c" / f));
  }
  // a different seed changes the numbers
  REQUIRE(run_cli("run " + cfg + " -q --seed 4 --out " + (dir / "d").string()) == 0);
  CHECK(read_file(dir / "a" / "per_path_errors.csv") !=
        read_file(dir / "d" / "per_path_errors.csv"));
}

TEST_CASE("cli: pass flags in summary.csv follow from its own numbers") {
  const auto dir = scratch("flags");
  write_file(dir / "run.cfg", kSmallGauss);
  REQUIRE(run_cli("run " + (dir / "run.cfg").string() + " -q --out " + (dir / "o").string()) == 0);
  const auto rows = read_csv((dir / "o" / "summary.csv").string());
  REQUIRE(rows.size() > 1);
  CHECK(rows[0] == std::vector<std::string>{"metric", "value", "std_error", "bound", "tolerance",
                                            "relation", "pass"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    CAPTURE(row[0]);
    SummaryRow s;
    s.value = std::stod(row[1]);
    s.bound = std::stod(row[3]);
    s.tolerance = std::stod(row[4]);
    s.relation = row[5];
    CHECK(row[6] == (s.pass() ? "true" : "false"));
  }
}

TEST_CASE("cli: exit codes") {
  const auto dir = scratch("codes");
  write_file(dir / "bad.cfg", "experiment = exactness\nbogus = 1\n");
  CHECK(run_cli("run " + (dir / "bad.cfg").string()) == 2);
  CHECK(run_cli("run " + (dir / "missing.cfg").string()) == 2);
  CHECK(run_cli("frobnicate") == 2);

  write_file(dir / "div.cfg",
             "experiment = exactness\nmodel = nr-gauss\ndt = 1\nT = 1000\nn_paths = 2\n");
  CHECK(run_cli("run " + (dir / "div.cfg").string() + " -q --out " + (dir / "div").string()) == 3);

  // gamma > 0 means the coarse path is not exact: the exactness check fails
  write_file(dir / "fail.cfg",
             "experiment = exactness\nmodel = nr-gauss\ngamma = 0.5\nT = 0.2\nn_paths = 10\n");
  CHECK(run_cli("run " + (dir / "fail.cfg").string() + " -q --out " + (dir / "fail").string()) ==
        1);

  // scaling needs the two-scale model
  write_file(dir / "scale.cfg", "experiment = scaling\nmodel = nr-gauss\n");
  CHECK(run_cli("run " + (dir / "scale.cfg").string() + " -q --out " + (dir / "s").string()) == 2);
}

TEST_CASE("shipped configs parse") {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(CF_CONFIG_DIR)) {
    if (e.path().extension() != ".cfg") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_config(e.path().string()));
    ++n;
  }
  CHECK(n >= 9);
}

TEST_CASE("library run without files") {
  auto c = parse_config(
      "experiment = exactness\nmodel = torus-symplectic\nT = 0.2\nn_paths = 20\n");
  RunOptions o;
  o.out_dir = scratch("lib").string();
  const auto r = run(c, o);
  CHECK(r.passed());
  REQUIRE(r.find("max_abs_error") != nullptr);
  CHECK(r.find("max_abs_error")->value == 0.0);
  CHECK(r.find("no_such_metric") == nullptr);
  CHECK(summary_text(r).find("PASS") != std::string::npos);
}
