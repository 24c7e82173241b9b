#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "coarse_forge/effective.hpp"
#include "coarse_forge/models.hpp"
#include "coarse_forge/sampling.hpp"

namespace cforge {

struct CoupledOptions {
  double dt = 1e-3;
  double horizon = 1.0;
  std::size_t n_paths = 100;
  std::uint64_t seed = 0;
  // Each step's increment is the sum of this many N(0, dt / r) draws, so a
  // run at dt / r with r = 1 sees the same Brownian path.
  std::size_t noise_substeps = 1;
  // Keep xi(X) and Z every record_stride steps (memory grows with paths).
  bool record_paths = false;
  std::size_t record_stride = 1;
  // Sorted times in (0, horizon] at which each path's running sup is also stored.
  std::vector<double> checkpoints;
  // Initial states; drawn from the exact equilibrium sampler when null.
  const EquilibriumSample* initial = nullptr;
};

struct CoupledRun {
  double dt = 0.0;
  double horizon = 0.0;
  std::size_t n_steps = 0;
  std::size_t n_paths = 0;
  std::size_t rank = 1;
  std::uint64_t seed = 0;
  std::vector<double> sup_error2;  // per path, sup over the grid of |xi(X) - Z|^2
  std::vector<double> checkpoint_times;
  std::vector<double> checkpoint_sup2;  // n_paths x checkpoints, row-major
  std::vector<double> clock_gap;        // random clock only: sup |psi - phi|
  std::size_t clamped = 0;              // effective queries outside its data range
  // Filled when record_paths: n_paths x n_records x rank, row-major.
  std::size_t n_records = 0;
  std::vector<double> xi_paths;
  std::vector<double> z_paths;
};

struct PathErrorStats {
  std::vector<double> per_path;
  double mean = 0.0;
  std::optional<double> std_error;  // absent for a single path
  double max = 0.0;
};

/// dB = Sigma^{1j} dW^j / |Sigma^1| for xi(x) = x^1; for a general affine
/// map the k-vector (T A T^T)^{-1/2} T Sigma dW. Throws NumericalError when
/// the projected diffusion is degenerate.
std::vector<double> project_noise(const SdeModel& model, const CoarseMap& map, ConstVec x,
                                  ConstVec dw);

/// Euler-Maruyama on X, Z += b(Z) dt + sqrt(2) sigma(Z) dB with dB from
/// project_noise at the pre-step X. Z_0 = xi(X_0).
CoupledRun simulate_coupled(const SdeModel& model, const EffectiveModel& effective,
                            const CoarseMap& map, const CoupledOptions& options);

/// Time-changed coupling: X and Z read increments of a single intrinsic-time
/// Brownian motion at their clocks psi = int |T Sigma|^2 ds and
/// phi = int sigma^2(Z) ds. Rank-1 maps and noise_substeps = 1 only.
CoupledRun simulate_coupled_random_clock(const SdeModel& model, const EffectiveModel& effective,
                                         const CoarseMap& map, const CoupledOptions& options);

PathErrorStats error_stats(const CoupledRun& run);
PathErrorStats error_stats(const std::vector<double>& per_path);

/// Running sup at checkpoint c for every path.
std::vector<double> checkpoint_column(const CoupledRun& run, std::size_t c);

}  // namespace cforge
