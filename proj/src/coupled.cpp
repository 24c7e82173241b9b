#include "coarse_forge/coupled.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "coarse_forge/brownian_path.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/parallel.hpp"

namespace cforge {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

struct StepPlan {
  std::size_t n_steps = 0;
  std::vector<std::size_t> checkpoint_steps;
  std::size_t n_records = 0;
};

StepPlan plan_steps(const CoupledOptions& o) {
  if (!(o.dt > 0.0) || !std::isfinite(o.dt)) throw ModelError("coupled: dt must be positive");
  if (!(o.horizon >= 0.0) || !std::isfinite(o.horizon))
    throw ModelError("coupled: horizon must be nonnegative");
  if (o.n_paths < 1) throw ModelError("coupled: n_paths must be >= 1");
  if (o.noise_substeps < 1) throw ModelError("coupled: noise_substeps must be >= 1");
  if (o.record_stride < 1) throw ModelError("coupled: record_stride must be >= 1");
  StepPlan p;
  const double steps = o.horizon / o.dt;
  p.n_steps = static_cast<std::size_t>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(p.n_steps)) > 1e-9 * std::max(1.0, steps))
    throw ModelError("coupled: horizon is not a whole number of steps");
  for (double t : o.checkpoints) {
    const auto s = static_cast<std::size_t>(std::llround(t / o.dt));
    if (!(t > 0.0) || s > p.n_steps) throw ModelError("coupled: checkpoint outside (0, horizon]");
    if (!p.checkpoint_steps.empty() && s < p.checkpoint_steps.back())
      throw ModelError("coupled: checkpoints must be sorted");
    p.checkpoint_steps.push_back(s);
  }
  if (o.record_paths) p.n_records = p.n_steps / o.record_stride + 1;
  return p;
}

CoupledRun make_run(const CoupledOptions& o, const StepPlan& plan, std::size_t rank) {
  CoupledRun run;
  run.dt = o.dt;
  run.horizon = o.horizon;
  run.n_steps = plan.n_steps;
  run.n_paths = o.n_paths;
  run.rank = rank;
  run.seed = o.seed;
  run.sup_error2.assign(o.n_paths, 0.0);
  run.checkpoint_times = o.checkpoints;
  run.checkpoint_sup2.assign(o.n_paths * o.checkpoints.size(), 0.0);
  run.n_records = plan.n_records;
  if (o.record_paths) {
    run.xi_paths.assign(o.n_paths * plan.n_records * rank, 0.0);
    run.z_paths.assign(o.n_paths * plan.n_records * rank, 0.0);
  }
  return run;
}

void initial_state(const SdeModel& model, const CoupledOptions& o, std::size_t path, MutVec x) {
  if (o.initial) {
    const ConstVec p = o.initial->point(path);
    std::copy(p.begin(), p.end(), x.begin());
  } else {
    equilibrium_point(model, o.seed, path, x);
  }
}

void check_common(const SdeModel& model, const EffectiveModel& eff, const CoarseMap& map,
                  const CoupledOptions& o) {
  if (map.dim() != model.dim()) throw DimensionError("coupled: map and model dimensions differ");
  if (eff.rank != map.rank()) throw DimensionError("coupled: effective rank differs from map");
  if (map.rank() == 1 && (!eff.drift || !eff.diffusion))
    throw ModelError("coupled: effective model has no scalar coefficients");
  if (map.rank() > 1 && (!eff.drift_vec || !eff.diffusion_mat))
    throw ModelError("coupled: effective model has no vector coefficients");
  if (!(eff.range_hi >= eff.range_lo)) throw ModelError("coupled: empty effective range");
  if (o.initial) {
    if (o.initial->dim != model.dim() || o.initial->size() < o.n_paths)
      throw DimensionError("coupled: initial sample too small or wrong dimension");
  } else if (!has_exact_equilibrium(model)) {
    throw ModelError("coupled: model '" + model.name() +
                     "' needs an initial sample (no exact equilibrium sampler)");
  }
}

double clamp_query(const EffectiveModel& eff, double z, std::size_t& clamped) {
  if (eff.in_range(z)) return z;
  ++clamped;
  return std::clamp(z, eff.range_lo, eff.range_hi);
}

// w = T Sigma, k x m row-major
void projected_rows(const Eigen::MatrixXd& t, ConstVec sigma, std::size_t d, std::size_t m,
                    double* w) {
  const auto k = static_cast<std::size_t>(t.rows());
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        acc += t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) * sigma[j * m + c];
      w[r * m + c] = acc;
    }
}

// (w w^T)^{-1/2} w dW for k > 1
Eigen::VectorXd project_rows(const double* w, std::size_t k, std::size_t m, ConstVec dw) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wm(
      w, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  const Eigen::MatrixXd g = wm * wm.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0))
    throw NumericalError("projected diffusion T A T^T is degenerate");
  const Eigen::MatrixXd inv_sqrt = es.operatorInverseSqrt();
  Eigen::Map<const Eigen::VectorXd> dwv(dw.data(), static_cast<Eigen::Index>(m));
  return inv_sqrt * (wm * dwv);
}

double scalar_db(const double* w, std::size_t m, ConstVec dw, double& s) {
  double s2 = 0.0, num = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    s2 += w[c] * w[c];
    num += w[c] * dw[c];
  }
  s = std::sqrt(s2);
  if (!(s > 0.0)) throw NumericalError("projected diffusion |Sigma^1| vanishes");
  return num / s;
}

}  // namespace

std::vector<double> project_noise(const SdeModel& model, const CoarseMap& map, ConstVec x,
                                  ConstVec dw) {
  const std::size_t d = model.dim(), m = model.noise_dim(), k = map.rank();
  if (x.size() != d || dw.size() != m || map.dim() != d)
    throw DimensionError("project_noise: dimension mismatch");
  double s[kMaxDim * kMaxDim], w[kMaxDim * kMaxDim];
  model.diffusion(x, MutVec(s, d * m));
  projected_rows(map.matrix(), ConstVec(s, d * m), d, m, w);
  if (k == 1) {
    double norm;
    return {scalar_db(w, m, dw, norm)};
  }
  const Eigen::VectorXd db = project_rows(w, k, m, dw);
  return std::vector<double>(db.data(), db.data() + db.size());
}

CoupledRun simulate_coupled(const SdeModel& model, const EffectiveModel& eff,
                            const CoarseMap& map, const CoupledOptions& o) {
  check_common(model, eff, map, o);
  const StepPlan plan = plan_steps(o);
  const std::size_t d = model.dim(), m = model.noise_dim(), k = map.rank();
  CoupledRun run = make_run(o, plan, k);
  const std::size_t nc = plan.checkpoint_steps.size();
  std::vector<std::size_t> clamped(o.n_paths, 0);
  const double sq = std::sqrt(o.dt / static_cast<double>(o.noise_substeps));

  parallel_for(o.n_paths, [&](std::size_t pb, std::size_t pe) {
    double x[kMaxDim], f[kMaxDim], s[kMaxDim * kMaxDim], dw[kMaxDim], w[kMaxDim * kMaxDim];
    double z[kMaxDim], xi[kMaxDim], bz[kMaxDim], sz[kMaxDim * kMaxDim];
    for (std::size_t p = pb; p < pe; ++p) {
      initial_state(model, o, p, MutVec(x, d));
      map.apply(ConstVec(x, d), MutVec(z, k));
      CounterStream rng(o.seed, p, StreamTag::noise);
      double sup = 0.0;
      std::size_t next_cp = 0, rec = 0;
      auto record = [&](std::size_t step) {
        if (!o.record_paths || step % o.record_stride != 0) return;
        map.apply(ConstVec(x, d), MutVec(xi, k));
        for (std::size_t r = 0; r < k; ++r) {
          run.xi_paths[(p * plan.n_records + rec) * k + r] = xi[r];
          run.z_paths[(p * plan.n_records + rec) * k + r] = z[r];
        }
        ++rec;
      };
      record(0);
      for (std::size_t n = 0; n < plan.n_steps; ++n) {
        for (std::size_t c = 0; c < m; ++c) dw[c] = 0.0;
        for (std::size_t r = 0; r < o.noise_substeps; ++r)
          for (std::size_t c = 0; c < m; ++c) dw[c] += sq * rng.normal();

        model.drift_and_diffusion(ConstVec(x, d), MutVec(f, d), MutVec(s, d * m));
        projected_rows(map.matrix(), ConstVec(s, d * m), d, m, w);
        bool finite = em_update(MutVec(x, d), ConstVec(f, d), ConstVec(s, d * m),
                                ConstVec(dw, m), o.dt);
        if (k == 1) {
          double norm;
          const double db = scalar_db(w, m, ConstVec(dw, m), norm);
          const double zq = clamp_query(eff, z[0], clamped[p]);
          const double b = eff.drift(zq), sg = eff.diffusion(zq);
          z[0] = z[0] + (b * o.dt + kSqrt2 * (sg * db));
          finite = finite && std::isfinite(z[0]);
        } else {
          const Eigen::VectorXd db = project_rows(w, k, m, ConstVec(dw, m));
          eff.drift_vec(ConstVec(z, k), MutVec(bz, k));
          eff.diffusion_mat(ConstVec(z, k), MutVec(sz, k * k));
          for (std::size_t r = 0; r < k; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c) acc += sz[r * k + c] * db(static_cast<Eigen::Index>(c));
            z[r] = z[r] + (bz[r] * o.dt + kSqrt2 * acc);
            finite = finite && std::isfinite(z[r]);
          }
        }
        if (!finite) throw DivergenceError("coupled: non-finite state", p, n + 1);

        map.apply(ConstVec(x, d), MutVec(xi, k));
        double e2 = 0.0;
        for (std::size_t r = 0; r < k; ++r) e2 += (xi[r] - z[r]) * (xi[r] - z[r]);
        sup = std::max(sup, e2);
        while (next_cp < nc && plan.checkpoint_steps[next_cp] == n + 1)
          run.checkpoint_sup2[p * nc + next_cp++] = sup;
        record(n + 1);
      }
      run.sup_error2[p] = sup;
    }
  });
  for (std::size_t c : clamped) run.clamped += c;
  return run;
}

CoupledRun simulate_coupled_random_clock(const SdeModel& model, const EffectiveModel& eff,
                                         const CoarseMap& map, const CoupledOptions& o) {
  check_common(model, eff, map, o);
  if (map.rank() != 1) throw DimensionError("random clock: needs a rank-1 map");
  if (o.noise_substeps != 1) throw ModelError("random clock: noise_substeps must be 1");
  const StepPlan plan = plan_steps(o);
  const std::size_t d = model.dim(), m = model.noise_dim();
  CoupledRun run = make_run(o, plan, 1);
  run.clock_gap.assign(o.n_paths, 0.0);
  const std::size_t nc = plan.checkpoint_steps.size();
  std::vector<std::size_t> clamped(o.n_paths, 0);
  const double sq = std::sqrt(o.dt / 1.0);

  parallel_for(o.n_paths, [&](std::size_t pb, std::size_t pe) {
    double x[kMaxDim], f[kMaxDim], s[kMaxDim * kMaxDim], g[kMaxDim], dw[kMaxDim];
    double w[kMaxDim * kMaxDim];
    for (std::size_t p = pb; p < pe; ++p) {
      initial_state(model, o, p, MutVec(x, d));
      double z = map.apply_scalar(ConstVec(x, d));
      CounterStream noise(o.seed, p, StreamTag::noise);
      CounterStream fresh(o.seed, p, StreamTag::clock);
      LazyBrownianPath bar(CounterStream(o.seed, p, StreamTag::bridge), 0.0);
      double psi = 0.0, phi = 0.0, sup = 0.0, gap = 0.0;
      std::size_t next_cp = 0, rec = 0;
      auto record = [&](std::size_t step) {
        if (!o.record_paths || step % o.record_stride != 0) return;
        run.xi_paths[p * plan.n_records + rec] = map.apply_scalar(ConstVec(x, d));
        run.z_paths[p * plan.n_records + rec] = z;
        ++rec;
      };
      record(0);
      for (std::size_t n = 0; n < plan.n_steps; ++n) {
        for (std::size_t c = 0; c < m; ++c) g[c] = noise.normal();
        model.drift_and_diffusion(ConstVec(x, d), MutVec(f, d), MutVec(s, d * m));
        projected_rows(map.matrix(), ConstVec(s, d * m), d, m, w);
        double s2 = 0.0, num = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
          s2 += w[c] * w[c];
          num += w[c] * g[c];
        }
        const double sn = std::sqrt(s2);
        if (!(sn > 0.0)) throw DivergenceError("random clock: |Sigma^1| vanishes", p, n);
        const double proj = num / sn;
        const double dpsi = s2 * o.dt;

        const double zq = clamp_query(eff, z, clamped[p]);
        const double b = eff.drift(zq), sg = eff.diffusion(zq);
        const double dphi = sg * sg * o.dt;
        if (!(dphi > 0.0)) throw DivergenceError("random clock: sigma vanishes", p, n);
        const double zf = fresh.normal();

        double inc_x, inc_z;
        try {
          inc_x = bar.increment(psi, dpsi, proj);
          inc_z = bar.increment(phi, dphi, zf);
        } catch (const NumericalError& e) {
          throw DivergenceError(std::string("random clock: ") + e.what(), p, n);
        }
        const double db = inc_x / sn;
        for (std::size_t c = 0; c < m; ++c) {
          const double nh = w[c] / sn;
          dw[c] = nh * db + sq * (g[c] - nh * proj);
        }
        bool finite = em_update(MutVec(x, d), ConstVec(f, d), ConstVec(s, d * m),
                                ConstVec(dw, m), o.dt);
        z = z + (b * o.dt + kSqrt2 * inc_z);
        if (!finite || !std::isfinite(z))
          throw DivergenceError("random clock: non-finite state", p, n + 1);

        psi += dpsi;
        phi += dphi;
        bar.prune_before(std::min(psi, phi));
        gap = std::max(gap, std::abs(psi - phi));
        const double e = map.apply_scalar(ConstVec(x, d)) - z;
        sup = std::max(sup, e * e);
        while (next_cp < nc && plan.checkpoint_steps[next_cp] == n + 1)
          run.checkpoint_sup2[p * nc + next_cp++] = sup;
        record(n + 1);
      }
      run.sup_error2[p] = sup;
      run.clock_gap[p] = gap;
    }
  });
  for (std::size_t c : clamped) run.clamped += c;
  return run;
}

PathErrorStats error_stats(const std::vector<double>& per_path) {
  if (per_path.empty()) throw ModelError("error_stats: empty run");
  PathErrorStats st;
  st.per_path = per_path;
  const double n = static_cast<double>(per_path.size());
  double sum = 0.0;
  st.max = 0.0;
  for (double v : per_path) {
    sum += v;
    st.max = std::max(st.max, v);
  }
  st.mean = sum / n;
  if (per_path.size() > 1) {
    double ss = 0.0;
    for (double v : per_path) ss += (v - st.mean) * (v - st.mean);
    st.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return st;
}

PathErrorStats error_stats(const CoupledRun& run) { return error_stats(run.sup_error2); }

std::vector<double> checkpoint_column(const CoupledRun& run, std::size_t c) {
  const std::size_t nc = run.checkpoint_times.size();
  if (c >= nc) throw DimensionError("checkpoint index out of range");
  std::vector<double> col(run.n_paths);
  for (std::size_t p = 0; p < run.n_paths; ++p) col[p] = run.checkpoint_sup2[p * nc + c];
  return col;
}

}  // namespace cforge
