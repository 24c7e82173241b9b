#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coarse_forge/effective.hpp"
#include "coarse_forge/models.hpp"
#include "coarse_forge/sampling.hpp"

namespace cforge {

/// Discretized conditional measure on one level set {xi = z}, codimension 1.
/// `weights` is the normalized density (trapezoid integral 1); `mass` the
/// trapezoid quadrature weights times density (sums to 1).
struct LevelSetGrid {
  double z = 0.0;
  double h = 0.0;
  std::vector<double> y;
  std::vector<double> weights;
  std::vector<double> mass;
  std::vector<double> b_vals;
  // density at the end nodes relative to its maximum
  double tail_ratio = 0.0;

  std::size_t size() const { return y.size(); }
};

/// Builds a grid from a density (up to a constant, as -log density) and a
/// level-set metric coefficient on [lo, hi].
LevelSetGrid make_level_set_grid(double lo, double hi, std::size_t n_nodes,
                                 const std::function<double(double)>& neg_log_density,
                                 const std::function<double(double)>& metric, double z = 0.0);

/// Level set of xi(x) = x^1 + tau in d = 2, parametrized by y = x^2 on
/// [-R, R] (on a torus: one period, R is ignored). B from geometry_at.
LevelSetGrid level_set_grid(const SdeModel& model, const CoarseMap& map, double z, double r,
                            std::size_t n_nodes);

/// Smallest nonzero eigenvalue of  int B h' g' mu = lambda int h g mu  on the
/// grid, zero-flux ends.
double spectral_gap(const LevelSetGrid& grid);

struct PoincareEstimate {
  double alpha = 0.0;  // min over z_list
  std::vector<double> z_list;
  std::vector<double> per_z;
  // Same solve with the truncation enlarged by 25% at equal spacing.
  double alpha_wide = 0.0;
  double r_change = 0.0;     // |alpha_wide - alpha| / alpha
  bool r_sensitive = false;  // r_change > 1%
};

/// Nine points spanning +-3 marginal standard deviations of xi (unit SD when
/// the model has no Gaussian metadata).
std::vector<double> default_z_list(const SdeModel& model, const CoarseMap& map);

PoincareEstimate poincare_constant(const SdeModel& model, const CoarseMap& map,
                                   const std::vector<double>& z_list, double r,
                                   std::size_t n_nodes);

struct PoissonSolution {
  std::vector<double> u;
  double energy = 0.0;   // int B |u'|^2 mu
  double f_norm2 = 0.0;  // int f^2 mu
  double alpha = 0.0;    // spectral gap of the same grid
  double bound = 0.0;    // f_norm2 / alpha
  double mean_removed = 0.0;
  bool bound_holds = false;
};

/// Solves int B u' v' mu = int f v mu with int u mu = 0. Data whose weighted
/// mean exceeds 1e-8 in magnitude is rejected with NumericalError; smaller
/// means are projected out.
PoissonSolution solve_level_set_poisson(const LevelSetGrid& grid, const std::vector<double>& f);

struct MonteCarloValue {
  double value = 0.0;
  double std_error = 0.0;
};

struct KappaLambda {
  MonteCarloValue kappa2;
  MonteCarloValue lambda2;
  std::size_t n = 0;
};

/// Monte Carlo means of |Pi grad (T F)|^2_A and |Pi grad |T Sigma||^2_A over
/// the sample; gradients by central differences.
KappaLambda estimate_kappa_lambda(const SdeModel& model, const CoarseMap& map,
                                  const EquilibriumSample& sample);

struct CoefficientGap {
  MonteCarloValue drift;      // E (T F - b(xi))^2
  MonteCarloValue diffusion;  // E (|T Sigma| - sigma(xi))^2
  std::size_t clamped = 0;
};

CoefficientGap coefficient_gap(const SdeModel& model, const EffectiveModel& effective,
                               const CoarseMap& map, const EquilibriumSample& sample);

enum class TableRow { reversible_identity, general_identity, slow_diffusion, general };

std::string to_string(TableRow r);

struct BoundInputs {
  double kappa2 = 0.0;
  double lambda2 = 0.0;
  double alpha = 1.0;
  double lipschitz_drift = 0.0;
  double lipschitz_diffusion = 0.0;
  double horizon = 1.0;
  bool identity_diffusion = false;
  bool reversible = false;
};

struct BoundTable {
  double weak_a = 0.0;
  double strong_a = 0.0;
  double weak_c = 0.0;
  double strong_c = 0.0;
  double c = 0.0;  // max(4 L_b, 32 L_sigma^2)
  TableRow row = TableRow::general;

  /// weak-A / strong-A when Sigma = Id, weak-C / strong-C otherwise.
  double weak() const;
  double strong() const;
  bool identity_case() const {
    return row == TableRow::reversible_identity || row == TableRow::general_identity;
  }
};

/// Throws ModelError on non-finite inputs or alpha <= 0.
BoundTable evaluate_bounds(const BoundInputs& in);

struct DiagnosticsReport {
  KappaLambda kl;
  PoincareEstimate poincare;
  CoefficientGap gap;
  BoundTable bounds;
  BoundInputs inputs;
};

void write_report_csv(const DiagnosticsReport& r, const std::string& path);
std::string report_text(const DiagnosticsReport& r);

}  // namespace cforge
