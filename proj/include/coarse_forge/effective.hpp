#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coarse_forge/models.hpp"
#include "coarse_forge/sampling.hpp"

namespace cforge {

/// Binned conditional means of the projected coefficients. `edges` has one
/// more entry than the per-bin arrays.
struct ConditionalProfile {
  std::vector<double> edges;
  std::vector<double> centers;
  std::vector<double> b_hat;       // mean of T F in the bin
  std::vector<double> b_sd;        // sample std of T F in the bin
  std::vector<double> sigma2_hat;  // mean of |T Sigma|^2 in the bin
  std::vector<std::size_t> counts;
  std::vector<bool> valid;
  std::size_t min_count = 50;
  std::size_t outside = 0;  // samples whose xi fell outside [edges.front, edges.back)

  std::size_t bins() const { return centers.size(); }
  std::size_t valid_bins() const;
};

enum class Provenance { analytic, estimated };

std::string to_string(Provenance p);

/// Effective coefficients. For k = 1 `drift`/`diffusion` are used; for k > 1
/// `drift_vec` writes b(z) in R^k and `diffusion_mat` writes sigma(z), k x k
/// row-major.
struct EffectiveModel {
  std::size_t rank = 1;
  std::function<double(double)> drift;
  std::function<double(double)> diffusion;
  std::function<void(ConstVec, MutVec)> drift_vec;
  std::function<void(ConstVec, MutVec)> diffusion_mat;
  double lipschitz_drift = 0.0;
  double lipschitz_diffusion = 0.0;
  Provenance provenance = Provenance::analytic;
  std::optional<ConditionalProfile> profile;
  // Range over which the coefficients were supported by data; queries
  // outside are answered with the boundary value.
  double range_lo = -std::numeric_limits<double>::infinity();
  double range_hi = std::numeric_limits<double>::infinity();

  bool in_range(double z) const { return z >= range_lo && z <= range_hi; }
};

/// `edges` are the bin boundaries (sorted, at least 2). Requires a rank-1
/// map and sample.size() >= 10 * bins. Throws ModelError when every bin has
/// fewer than min_count samples.
ConditionalProfile estimate_conditional(const EquilibriumSample& sample, const SdeModel& model,
                                        const CoarseMap& map, const std::vector<double>& edges,
                                        std::size_t min_count = 50);

/// `bins` equal-width bins on [lo, hi].
std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);

/// Piecewise-linear interpolation over valid bin centers, constant outside.
/// Lipschitz constants are the largest interpolant slopes.
EffectiveModel effective_from_profile(const ConditionalProfile& profile);

/// Closed forms carried by the model; the map must be xi(x) = x^1.
EffectiveModel analytic_effective(const SdeModel& model, const CoarseMap& map);

/// Columns z, b_hat, sigma2_hat, count.
void write_profile_csv(const ConditionalProfile& profile, const std::string& path);

}  // namespace cforge
