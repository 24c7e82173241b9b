#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coarse_forge/models.hpp"

namespace cforge {

enum class ExperimentKind {
  exactness,
  gap_check,
  poincare_check,
  poisson_check,
  error_vs_bound,
  scaling,
  stationarity,
  growth_in_t,
  random_clock_compare,
};

std::string to_string(ExperimentKind k);

enum class EffectiveSource { analytic, estimated };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::exactness;
  std::string model = "nr-gauss";
  ModelParams params;

  // xi(x) = x^{map_index} (1-based) unless map_t is given
  std::size_t map_index = 1;
  std::size_t map_k = 1;
  std::vector<double> map_t;  // row-major map_k x d
  std::vector<double> map_tau;

  double dt = 1e-3;
  double horizon = 1.0;
  std::size_t n_paths = 100;
  std::uint64_t seed = 0;
  std::size_t noise_substeps = 1;

  std::size_t bins = 50;
  double z_min = -3.0;
  double z_max = 3.0;
  std::size_t n_samples = 100'000;
  EffectiveSource effective = EffectiveSource::analytic;
  std::size_t mcmc_burn_in = 1'000'000;
  std::size_t mcmc_thinning = 100;

  double r = 0.0;  // level-set truncation; 0 picks 5 conditional SDs
  std::size_t nodes = 2001;

  std::vector<double> eps_list = {0.2, 0.1, 0.05, 0.025};
  std::vector<double> t_list = {1.0, 2.0, 4.0};
  bool check_dt_halving = false;
  double ks_allowance = 0.02;

  std::string output = "out";
};

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError
/// naming the key on unknown keys, malformed values or failed validation.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Range and consistency checks (also run by parse_config).
void validate(const ExperimentConfig& c);

/// Model and map described by the config.
SdeModel config_model(const ExperimentConfig& c);
CoarseMap config_map(const ExperimentConfig& c, std::size_t dim);

}  // namespace cforge
