#include "coarse_forge/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "coarse_forge/error.hpp"

namespace cforge {

namespace {

const std::map<std::string, ExperimentKind> kExperiments = {
    {"exactness", ExperimentKind::exactness},
    {"gap-check", ExperimentKind::gap_check},
    {"poincare-check", ExperimentKind::poincare_check},
    {"poisson-check", ExperimentKind::poisson_check},
    {"error-vs-bound", ExperimentKind::error_vs_bound},
    {"scaling", ExperimentKind::scaling},
    {"stationarity", ExperimentKind::stationarity},
    {"growth-in-T", ExperimentKind::growth_in_t},
    {"random-clock-compare", ExperimentKind::random_clock_compare},
};

const std::set<std::string> kModelParams = {"a", "gamma", "eps", "delta", "u1", "u2"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  if (v.empty()) throw ConfigError(key, "missing value");
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x))
    throw ConfigError(key, "'" + v + "' is not a finite number");
  return x;
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x < 0.0 || x != std::floor(x) || x > 9.0e15)
    throw ConfigError(key, "'" + v + "' is not a nonnegative integer");
  return static_cast<std::uint64_t>(x);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "'" + v + "' is not a boolean");
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [name, kind] : kExperiments)
    if (kind == k) return name;
  return "unknown";
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(trim(line), "line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + " has no key");
    if (!seen.insert(key).second) throw ConfigError(key, "given more than once");

    if (key == "experiment") {
      auto it = kExperiments.find(v);
      if (it == kExperiments.end()) throw ConfigError(key, "unknown experiment '" + v + "'");
      c.experiment = it->second;
    } else if (key == "model") {
      const auto names = registry_names();
      if (std::find(names.begin(), names.end(), v) == names.end())
        throw ConfigError(key, "unknown model '" + v + "'");
      c.model = v;
    } else if (kModelParams.count(key)) {
      c.params[key] = to_double(key, v);
    } else if (key == "map") {
      c.map_index = to_count(key, v);
    } else if (key == "map_T") {
      c.map_t = to_list(key, v);
    } else if (key == "map_k") {
      c.map_k = to_count(key, v);
    } else if (key == "map_tau") {
      c.map_tau = to_list(key, v);
    } else if (key == "dt") {
      c.dt = to_double(key, v);
    } else if (key == "T") {
      c.horizon = to_double(key, v);
    } else if (key == "n_paths") {
      c.n_paths = to_count(key, v);
    } else if (key == "seed") {
      c.seed = to_count(key, v);
    } else if (key == "noise_substeps") {
      c.noise_substeps = to_count(key, v);
    } else if (key == "bins") {
      c.bins = to_count(key, v);
    } else if (key == "z_min") {
      c.z_min = to_double(key, v);
    } else if (key == "z_max") {
      c.z_max = to_double(key, v);
    } else if (key == "n_samples") {
      c.n_samples = to_count(key, v);
    } else if (key == "effective") {
      if (v == "analytic") c.effective = EffectiveSource::analytic;
      else if (v == "estimated") c.effective = EffectiveSource::estimated;
      else throw ConfigError(key, "expected 'analytic' or 'estimated'");
    } else if (key == "mcmc_burn_in") {
      c.mcmc_burn_in = to_count(key, v);
    } else if (key == "mcmc_thinning") {
      c.mcmc_thinning = to_count(key, v);
    } else if (key == "R") {
      c.r = to_double(key, v);
    } else if (key == "nodes") {
      c.nodes = to_count(key, v);
    } else if (key == "eps_list") {
      c.eps_list = to_list(key, v);
    } else if (key == "T_list") {
      c.t_list = to_list(key, v);
    } else if (key == "check_dt_halving") {
      c.check_dt_halving = to_bool(key, v);
    } else if (key == "ks_allowance") {
      c.ks_allowance = to_double(key, v);
    } else if (key == "output") {
      if (v.empty()) throw ConfigError(key, "missing value");
      c.output = v;
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  const auto allowed = registry_parameters(c.model);
  for (const auto& [k, v] : c.params) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError(k, "not a parameter of model '" + c.model + "'");
    if ((k == "a" || k == "eps") && !(v > 0.0)) throw ConfigError(k, "must be positive");
    if (k == "delta" && v < 0.0) throw ConfigError(k, "must be nonnegative");
  }
  if (!(c.dt > 0.0)) throw ConfigError("dt", "must be positive");
  if (!(c.horizon > 0.0)) throw ConfigError("T", "must be positive");
  if (c.n_paths < 1) throw ConfigError("n_paths", "must be at least 1");
  if (c.noise_substeps < 1) throw ConfigError("noise_substeps", "must be at least 1");
  if (c.bins < 2) throw ConfigError("bins", "must be at least 2");
  if (!(c.z_max > c.z_min)) throw ConfigError("z_max", "must exceed z_min");
  if (c.n_samples < 1) throw ConfigError("n_samples", "must be at least 1");
  if (c.mcmc_thinning < 1) throw ConfigError("mcmc_thinning", "must be at least 1");
  if (c.r < 0.0) throw ConfigError("R", "must be nonnegative (0 = automatic)");
  if (c.nodes < 8) throw ConfigError("nodes", "must be at least 8");
  if (c.map_index < 1) throw ConfigError("map", "coordinate index is 1-based");
  if (c.map_k < 1) throw ConfigError("map_k", "must be at least 1");
  if (!c.map_t.empty() && c.map_t.size() % c.map_k != 0)
    throw ConfigError("map_T", "length is not a multiple of map_k");
  if (!c.map_tau.empty() && c.map_tau.size() != c.map_k)
    throw ConfigError("map_tau", "length must equal map_k");
  if (c.map_t.empty() && !c.map_tau.empty() && c.map_k != 1)
    throw ConfigError("map_tau", "coordinate maps are rank 1");
  for (double e : c.eps_list)
    if (!(e > 0.0)) throw ConfigError("eps_list", "entries must be positive");
  if (c.eps_list.size() < 2) throw ConfigError("eps_list", "needs at least two values");
  for (double t : c.t_list)
    if (!(t > 0.0)) throw ConfigError("T_list", "entries must be positive");
  if (c.ks_allowance < 0.0) throw ConfigError("ks_allowance", "must be nonnegative");
}

SdeModel config_model(const ExperimentConfig& c) {
  try {
    return registry(c.model, c.params);
  } catch (const ModelError& e) {
    throw ConfigError("model", e.what());
  }
}

CoarseMap config_map(const ExperimentConfig& c, std::size_t dim) {
  try {
    if (c.map_t.empty()) {
      if (c.map_index > dim) throw ConfigError("map", "coordinate index exceeds dimension");
      CoarseMap m = CoarseMap::coordinate(dim, c.map_index - 1);
      if (c.map_tau.empty()) return m;
      return CoarseMap::affine(m.matrix(), Eigen::Map<const Eigen::VectorXd>(c.map_tau.data(), 1));
    }
    const auto k = static_cast<Eigen::Index>(c.map_k);
    if (c.map_t.size() != c.map_k * dim)
      throw ConfigError("map_T", "expected map_k x d = " + std::to_string(c.map_k * dim) +
                                     " entries");
    Eigen::MatrixXd t(k, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j)
        t(i, j) = c.map_t[static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(j)];
    Eigen::VectorXd tau = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(c.map_tau.size()); ++i)
      tau(i) = c.map_tau[static_cast<std::size_t>(i)];
    return CoarseMap::affine(t, tau);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(c.map_t.empty() ? "map" : "map_T", e.what());
  }
}

}  // namespace cforge
