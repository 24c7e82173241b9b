#include "coarse_forge/sampling.hpp"

#include <cmath>
#include <numbers>

#include "coarse_forge/error.hpp"
#include "coarse_forge/parallel.hpp"

namespace cforge {

std::string to_string(SampleMethod m) {
  switch (m) {
    case SampleMethod::exact_gaussian: return "exact-gaussian";
    case SampleMethod::uniform_torus: return "uniform-torus";
    case SampleMethod::mcmc: return "mcmc";
  }
  return "unknown";
}

NoisePath brownian(std::uint64_t seed, std::uint64_t path_index, std::size_t n_steps,
                   std::size_t noise_dim, double dt) {
  if (n_steps < 1) throw ModelError("brownian: n_steps must be >= 1");
  if (noise_dim < 1) throw DimensionError("brownian: noise dimension must be >= 1");
  if (!(dt > 0.0)) throw ModelError("brownian: dt must be positive");
  NoisePath p;
  p.dt = dt;
  p.n_steps = n_steps;
  p.noise_dim = noise_dim;
  p.seed = seed;
  p.path_index = path_index;
  p.increments.resize(n_steps * noise_dim);
  CounterStream rng(seed, path_index, StreamTag::noise);
  const double s = std::sqrt(dt);
  for (double& v : p.increments) v = s * rng.normal();
  return p;
}

bool em_update(MutVec x, ConstVec f, ConstVec sigma, ConstVec dw, double dt) {
  const std::size_t d = x.size(), m = dw.size();
  bool finite = true;
  for (std::size_t i = 0; i < d; ++i) {
    double sdw = 0.0;
    for (std::size_t k = 0; k < m; ++k) sdw += sigma[i * m + k] * dw[k];
    x[i] = x[i] + (f[i] * dt + std::numbers::sqrt2 * sdw);
    finite = finite && std::isfinite(x[i]);
  }
  return finite;
}

Trajectory euler_maruyama(const SdeModel& model, ConstVec x0, const NoisePath& noise) {
  const std::size_t d = model.dim(), m = model.noise_dim();
  if (x0.size() != d) throw DimensionError("euler_maruyama: x0 has wrong dimension");
  if (noise.noise_dim != m) throw DimensionError("euler_maruyama: noise dimension mismatch");
  Trajectory tr;
  tr.dt = noise.dt;
  tr.n_steps = noise.n_steps;
  tr.dim = d;
  tr.states.resize((noise.n_steps + 1) * d);
  double x[kMaxDim], f[kMaxDim], s[kMaxDim * kMaxDim];
  for (std::size_t i = 0; i < d; ++i) x[i] = tr.states[i] = x0[i];
  for (std::size_t n = 0; n < noise.n_steps; ++n) {
    model.drift_and_diffusion(ConstVec(x, d), MutVec(f, d), MutVec(s, d * m));
    if (!em_update(MutVec(x, d), ConstVec(f, d), ConstVec(s, d * m), noise.step(n), noise.dt))
      throw DivergenceError("euler_maruyama: non-finite state", noise.path_index, n + 1);
    for (std::size_t i = 0; i < d; ++i) tr.states[(n + 1) * d + i] = x[i];
  }
  return tr;
}

bool has_exact_equilibrium(const SdeModel& model) {
  const auto& meta = model.metadata();
  return meta.gaussian.has_value() || (model.domain().is_torus() && meta.uniform);
}

void equilibrium_point(const SdeModel& model, std::uint64_t seed, std::uint64_t index,
                       MutVec out) {
  const std::size_t d = model.dim();
  if (out.size() != d) throw DimensionError("equilibrium_point: output has wrong dimension");
  CounterStream rng(seed, index, StreamTag::equilibrium);
  const auto& meta = model.metadata();
  if (meta.gaussian) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cov(
        meta.gaussian->covariance.data(), static_cast<Eigen::Index>(d),
        static_cast<Eigen::Index>(d));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw ModelError("gaussian covariance is not SPD");
    const Eigen::MatrixXd l = llt.matrixL();
    double g[kMaxDim];
    for (std::size_t i = 0; i < d; ++i) g[i] = rng.normal();
    for (std::size_t i = 0; i < d; ++i) {
      double acc = meta.gaussian->mean[i];
      for (std::size_t j = 0; j <= i; ++j)
        acc += l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * g[j];
      out[i] = acc;
    }
    return;
  }
  if (model.domain().is_torus() && meta.uniform) {
    for (std::size_t i = 0; i < d; ++i) out[i] = model.domain().period * rng.uniform();
    return;
  }
  throw ModelError("model '" + model.name() + "' has no exact equilibrium sampler");
}

EquilibriumSample sample_equilibrium(const SdeModel& model, std::size_t n, std::uint64_t seed,
                                     const McmcOptions& mcmc) {
  if (n < 1) throw ModelError("sample_equilibrium: n must be >= 1");
  const std::size_t d = model.dim(), m = model.noise_dim();
  EquilibriumSample s;
  s.dim = d;
  s.points.resize(n * d);

  if (has_exact_equilibrium(model)) {
    s.method = model.metadata().gaussian ? SampleMethod::exact_gaussian
                                         : SampleMethod::uniform_torus;
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        equilibrium_point(model, seed, i, MutVec(s.points.data() + i * d, d));
    });
    return s;
  }

  if (mcmc.thinning < 1) throw ModelError("sample_equilibrium: thinning must be >= 1");
  if (!(mcmc.dt > 0.0)) throw ModelError("sample_equilibrium: dt must be positive");
  s.method = SampleMethod::mcmc;
  s.burn_in = mcmc.burn_in;
  s.thinning = mcmc.thinning;
  double x[kMaxDim] = {}, f[kMaxDim], sg[kMaxDim * kMaxDim], dw[kMaxDim];
  if (!mcmc.x0.empty()) {
    if (mcmc.x0.size() != d) throw DimensionError("sample_equilibrium: x0 has wrong dimension");
    for (std::size_t i = 0; i < d; ++i) x[i] = mcmc.x0[i];
  }
  CounterStream rng(seed, 0, StreamTag::mcmc);
  const double sq = std::sqrt(mcmc.dt);
  const std::size_t total = mcmc.burn_in + n * mcmc.thinning;
  std::size_t kept = 0;
  for (std::size_t step = 1; step <= total; ++step) {
    for (std::size_t k = 0; k < m; ++k) dw[k] = sq * rng.normal();
    model.drift_and_diffusion(ConstVec(x, d), MutVec(f, d), MutVec(sg, d * m));
    if (!em_update(MutVec(x, d), ConstVec(f, d), ConstVec(sg, d * m), ConstVec(dw, m), mcmc.dt))
      throw DivergenceError("sample_equilibrium: MCMC chain diverged", 0, step);
    if (step > mcmc.burn_in && (step - mcmc.burn_in) % mcmc.thinning == 0) {
      double xw[kMaxDim];
      model.domain().wrap(ConstVec(x, d), MutVec(xw, d));
      for (std::size_t i = 0; i < d; ++i) s.points[kept * d + i] = xw[i];
      ++kept;
    }
  }
  return s;
}

}  // namespace cforge
