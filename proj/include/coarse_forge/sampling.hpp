#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "coarse_forge/models.hpp"
#include "coarse_forge/rng.hpp"

namespace cforge {

/// Gaussian increments with variance dt, row-major n_steps x noise_dim.
struct NoisePath {
  double dt = 0.0;
  std::size_t n_steps = 0;
  std::size_t noise_dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  std::vector<double> increments;

  ConstVec step(std::size_t n) const {
    return ConstVec(increments.data() + n * noise_dim, noise_dim);
  }
};

/// states is row-major (n_steps + 1) x dim; states[0] is the initial point.
struct Trajectory {
  double dt = 0.0;
  std::size_t n_steps = 0;
  std::size_t dim = 0;
  std::vector<double> states;

  ConstVec state(std::size_t n) const { return ConstVec(states.data() + n * dim, dim); }
};

enum class SampleMethod { exact_gaussian, uniform_torus, mcmc };

std::string to_string(SampleMethod m);

/// points is row-major n x dim.
struct EquilibriumSample {
  std::size_t dim = 0;
  std::vector<double> points;
  SampleMethod method = SampleMethod::exact_gaussian;
  std::size_t burn_in = 0;
  std::size_t thinning = 0;

  std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
  ConstVec point(std::size_t i) const { return ConstVec(points.data() + i * dim, dim); }
};

struct McmcOptions {
  std::size_t burn_in = 1'000'000;
  std::size_t thinning = 100;
  double dt = 1e-3;
  std::vector<double> x0;  // defaults to the origin
};

/// Increments drawn from the (seed, path_index, noise) stream.
NoisePath brownian(std::uint64_t seed, std::uint64_t path_index, std::size_t n_steps,
                   std::size_t noise_dim, double dt);

/// One Euler-Maruyama update x += f dt + sqrt(2) sigma dw, given F(x) and
/// Sigma(x) (row-major d x m) evaluated at the pre-step state. Returns false
/// when the new state is not finite.
bool em_update(MutVec x, ConstVec f, ConstVec sigma, ConstVec dw, double dt);

/// Throws DivergenceError(path = noise.path_index, step) on a non-finite state.
Trajectory euler_maruyama(const SdeModel& model, ConstVec x0, const NoisePath& noise);

/// True when the model has an exact equilibrium sampler.
bool has_exact_equilibrium(const SdeModel& model);

/// The index-th exact draw from mu for the given seed. Draws for different
/// indices are independent and do not depend on how many are requested.
/// Throws ModelError when no exact sampler exists.
void equilibrium_point(const SdeModel& model, std::uint64_t seed, std::uint64_t index,
                       MutVec out);

/// Exact sampler when available, otherwise one Euler-Maruyama chain of
/// length burn_in + n * thinning keeping every thinning-th state.
EquilibriumSample sample_equilibrium(const SdeModel& model, std::size_t n, std::uint64_t seed,
                                     const McmcOptions& mcmc = {});

}  // namespace cforge
