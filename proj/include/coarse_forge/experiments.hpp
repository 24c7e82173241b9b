#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coarse_forge/config.hpp"

namespace cforge {

/// One line of summary.csv. Relations:
///   "<="     pass iff value <= bound + tolerance
///   "~="     pass iff |value - bound| <= tolerance
///   "in"     pass iff bound <= value <= tolerance (bound and tolerance hold the interval)
///   "report" informational, always passes
struct SummaryRow {
  std::string metric;
  double value = 0.0;
  std::optional<double> std_error;
  double bound = 0.0;
  double tolerance = 0.0;
  std::string relation = "report";

  bool pass() const;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<SummaryRow> rows;
  std::vector<std::string> files;

  bool passed() const;
  const SummaryRow* find(const std::string& metric) const;
};

struct RunOptions {
  std::string out_dir;  // overrides config.output when non-empty
  bool write_files = true;
  // Progress messages; ignored when empty.
  std::function<void(const std::string&)> log;
};

/// Runs the configured experiment and writes summary.csv plus the
/// experiment's raw CSVs into the output directory.
ExperimentResult run(const ExperimentConfig& config, const RunOptions& options = {});

/// Text table of the summary rows.
std::string summary_text(const ExperimentResult& r);

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cforge
