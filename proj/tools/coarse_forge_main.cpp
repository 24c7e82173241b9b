#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "coarse_forge/config.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/experiments.hpp"

// Exit codes: 0 all checks pass, 1 a tolerance check failed,
// 2 configuration error, 3 numerical divergence.
int main(int argc, char** argv) {
  CLI::App app{"coarse-forge: effective dynamics for non-reversible SDEs"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("config", config_path, "Config file (key = value lines)")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Override the config seed");
  run_cmd->add_option("--out", out_dir, "Output directory (overrides config 'output')");
  run_cmd->add_flag("--quiet,-q", quiet, "Only print the summary table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto cfg = cforge::load_config(config_path);
    if (*seed_opt) cfg.seed = seed;
    cforge::RunOptions opts;
    opts.out_dir = out_dir;
    if (!quiet) opts.log = [](const std::string& m) { std::cerr << m << '\n'; };
    const auto result = cforge::run(cfg, opts);
    std::cout << "experiment: " << result.experiment << '\n' << cforge::summary_text(result);
    return result.passed() ? 0 : 1;
  } catch (const cforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cforge::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << " (path " << e.path() << ", step " << e.step()
              << ")\n";
    return 3;
  } catch (const cforge::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const cforge::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
