#include "coarse_forge/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "coarse_forge/coupled.hpp"
#include "coarse_forge/csv.hpp"
#include "coarse_forge/diagnostics.hpp"
#include "coarse_forge/effective.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/parallel.hpp"
#include "coarse_forge/sampling.hpp"

namespace cforge {

bool SummaryRow::pass() const {
  if (relation == "<=") return value <= bound + tolerance;
  if (relation == "~=") return std::abs(value - bound) <= tolerance;
  if (relation == "in") return value >= bound && value <= tolerance;
  return true;
}

bool ExperimentResult::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const SummaryRow& r) { return r.pass(); });
}

const SummaryRow* ExperimentResult::find(const std::string& metric) const {
  for (const auto& r : rows)
    if (r.metric == metric) return &r;
  return nullptr;
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw ModelError("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ModelError("loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw NumericalError("loglog_slope: nonpositive value");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw NumericalError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

namespace {

namespace fs = std::filesystem;

struct Context {
  const ExperimentConfig& cfg;
  const RunOptions& opts;
  SdeModel model;
  CoarseMap map;
  fs::path out;
  ExperimentResult result;

  void log(const std::string& msg) const {
    if (opts.log) opts.log(msg);
  }
  std::string file(const std::string& name) {
    const std::string p = (out / name).string();
    result.files.push_back(p);
    return p;
  }
  void row(const std::string& metric, double value, std::optional<double> se, double bound,
           double tol, const std::string& rel) {
    result.rows.push_back({metric, value, se, bound, tol, rel});
  }
  void report(const std::string& metric, double value, std::optional<double> se = std::nullopt) {
    row(metric, value, se, 0.0, 0.0, "report");
  }
};

McmcOptions mcmc_options(const ExperimentConfig& c) {
  McmcOptions m;
  m.burn_in = c.mcmc_burn_in;
  m.thinning = c.mcmc_thinning;
  m.dt = c.dt;
  return m;
}

// Sample used by the Monte Carlo diagnostics; offset from the run seed so it
// does not reuse the coupled runs' initial states.
EquilibriumSample diagnostics_sample(const Context& ctx) {
  ctx.log("sampling " + std::to_string(ctx.cfg.n_samples) + " equilibrium points");
  return sample_equilibrium(ctx.model, ctx.cfg.n_samples, ctx.cfg.seed + 1, mcmc_options(ctx.cfg));
}

EffectiveModel make_effective(Context& ctx) {
  if (ctx.cfg.effective == EffectiveSource::analytic) {
    try {
      return analytic_effective(ctx.model, ctx.map);
    } catch (const ModelError& e) {
      throw ConfigError("effective", e.what());
    }
  }
  ctx.log("estimating effective coefficients");
  const auto sample =
      sample_equilibrium(ctx.model, ctx.cfg.n_samples, ctx.cfg.seed + 2, mcmc_options(ctx.cfg));
  const auto profile = estimate_conditional(sample, ctx.model, ctx.map,
                                            uniform_edges(ctx.cfg.z_min, ctx.cfg.z_max,
                                                          ctx.cfg.bins));
  if (ctx.opts.write_files) write_profile_csv(profile, ctx.file("profile.csv"));
  return effective_from_profile(profile);
}

// Five conditional standard deviations of x^2 given x^1 for Gaussian models.
double truncation(const Context& ctx) {
  if (ctx.cfg.r > 0.0) return ctx.cfg.r;
  if (const auto& g = ctx.model.metadata().gaussian; g && ctx.model.dim() == 2) {
    const auto& c = g->covariance;
    return 5.0 * std::sqrt(c[3] - c[1] * c[1] / c[0]);
  }
  return 5.0;
}

CoupledOptions coupled_options(const ExperimentConfig& c) {
  CoupledOptions o;
  o.dt = c.dt;
  o.horizon = c.horizon;
  o.n_paths = c.n_paths;
  o.seed = c.seed;
  o.noise_substeps = c.noise_substeps;
  return o;
}

// Runs at dt (with doubled substeps) and dt/2 on the same Brownian path.
std::pair<CoupledRun, std::optional<CoupledRun>> coupled_with_halving(
    Context& ctx, const SdeModel& model, const EffectiveModel& eff, CoupledOptions o) {
  if (!ctx.cfg.check_dt_halving) return {simulate_coupled(model, eff, ctx.map, o), std::nullopt};
  CoupledOptions coarse = o;
  coarse.noise_substeps = 2 * o.noise_substeps;
  CoupledOptions fine = o;
  fine.dt = o.dt / 2.0;
  ctx.log("coupled run at dt and dt/2");
  auto a = simulate_coupled(model, eff, ctx.map, coarse);
  auto b = simulate_coupled(model, eff, ctx.map, fine);
  return {std::move(a), std::move(b)};
}

void halving_row(Context& ctx, const std::string& prefix, const PathErrorStats& base,
                 const std::optional<CoupledRun>& half) {
  if (!half) return;
  const auto h = error_stats(*half);
  ctx.report(prefix + "mean_sup_error2_half_dt", h.mean, h.std_error);
  const double rel = base.mean > 0.0 ? std::abs(h.mean - base.mean) / base.mean
                                     : std::abs(h.mean - base.mean);
  ctx.row(prefix + "dt_halving_rel_change", rel, std::nullopt, 0.05, 0.0, "<=");
}

void write_per_path(Context& ctx, const CoupledRun& run) {
  if (!ctx.opts.write_files) return;
  CsvWriter w(ctx.file("per_path_errors.csv"), {"path_index", "sup_error2"});
  for (std::size_t p = 0; p < run.n_paths; ++p)
    w.row({CsvWriter::num(p), CsvWriter::num(run.sup_error2[p])});
  w.close();
}

double se_or_zero(const std::optional<double>& se) { return se.value_or(0.0); }

// ---------------------------------------------------------------------------

void run_exactness(Context& ctx) {
  const auto eff = make_effective(ctx);
  ctx.log("coupled run, " + std::to_string(ctx.cfg.n_paths) + " paths");
  auto [run, half] = coupled_with_halving(ctx, ctx.model, eff, coupled_options(ctx.cfg));
  const auto st = error_stats(run);
  ctx.row("max_abs_error", std::sqrt(st.max), std::nullopt, 1e-12, 0.0, "<=");
  ctx.report("mean_sup_error2", st.mean, st.std_error);
  if (half) {
    const auto h = error_stats(*half);
    ctx.row("max_abs_error_half_dt", std::sqrt(h.max), std::nullopt, 1e-12, 0.0, "<=");
  }
  halving_row(ctx, "", st, half);
  write_per_path(ctx, run);
}

struct Constants {
  KappaLambda kl;
  PoincareEstimate pc;
};

Constants compute_constants(Context& ctx, const EquilibriumSample& sample) {
  Constants c;
  ctx.log("estimating kappa^2 and lambda^2");
  c.kl = estimate_kappa_lambda(ctx.model, ctx.map, sample);
  ctx.log("level-set spectral gaps");
  c.pc = poincare_constant(ctx.model, ctx.map, default_z_list(ctx.model, ctx.map),
                           truncation(ctx), ctx.cfg.nodes);
  return c;
}

BoundInputs bound_inputs(const Context& ctx, const Constants& c, const EffectiveModel& eff,
                         double horizon) {
  BoundInputs in;
  in.kappa2 = c.kl.kappa2.value;
  in.lambda2 = c.kl.lambda2.value;
  in.alpha = c.pc.alpha;
  in.lipschitz_drift = eff.lipschitz_drift;
  in.lipschitz_diffusion = eff.lipschitz_diffusion;
  in.horizon = horizon;
  in.identity_diffusion = ctx.model.metadata().identity_diffusion;
  in.reversible = ctx.model.metadata().reversible;
  return in;
}

void write_diagnostics(Context& ctx, const Constants& c, const CoefficientGap& gap,
                       const BoundInputs& in, const BoundTable& bt) {
  DiagnosticsReport r{c.kl, c.pc, gap, bt, in};
  ctx.log(report_text(r));
  if (ctx.opts.write_files) write_report_csv(r, ctx.file("diagnostics.csv"));
}

void run_gap_check(Context& ctx) {
  const auto eff = make_effective(ctx);
  const auto sample = diagnostics_sample(ctx);
  const auto c = compute_constants(ctx, sample);
  const auto gap = coefficient_gap(ctx.model, eff, ctx.map, sample);
  const double a = c.pc.alpha;
  const double drift_bound = c.kl.kappa2.value / a;
  const double drift_se = std::hypot(gap.drift.std_error, c.kl.kappa2.std_error / a);
  ctx.row("gap_drift", gap.drift.value, gap.drift.std_error, drift_bound, 3.0 * drift_se, "<=");
  const double diff_bound = 2.0 * c.kl.lambda2.value / a;
  const double diff_se = std::hypot(gap.diffusion.std_error, 2.0 * c.kl.lambda2.std_error / a);
  ctx.row("gap_diff", gap.diffusion.value, gap.diffusion.std_error, diff_bound, 3.0 * diff_se,
          "<=");
  ctx.report("kappa2", c.kl.kappa2.value, c.kl.kappa2.std_error);
  ctx.report("lambda2", c.kl.lambda2.value, c.kl.lambda2.std_error);
  ctx.report("alpha_pi", a);
  ctx.report("kappa2_over_alpha", drift_bound);
  ctx.report("alpha_r_change", c.pc.r_change);
  ctx.report("clamped_queries", static_cast<double>(gap.clamped));
  const auto in = bound_inputs(ctx, c, eff, ctx.cfg.horizon);
  write_diagnostics(ctx, c, gap, in, evaluate_bounds(in));
}

double reference_alpha(const Context& ctx, bool& known) {
  const auto& p = ctx.cfg.params;
  auto get = [&](const char* k, double def) {
    auto it = p.find(k);
    return it == p.end() ? def : it->second;
  };
  known = true;
  const double a = get("a", 4.0);
  if (ctx.cfg.model == "nr-gauss" || ctx.cfg.model == "var-diff") return a;
  if (ctx.cfg.model == "two-scale") return a / get("eps", 0.1);
  known = false;
  const double l = ctx.model.domain().period;
  return std::numbers::pi * std::numbers::pi / (l * l);
}

void run_poincare_check(Context& ctx) {
  const auto zs = default_z_list(ctx.model, ctx.map);
  ctx.log("level-set spectral gaps");
  const auto pc = poincare_constant(ctx.model, ctx.map, zs, truncation(ctx), ctx.cfg.nodes);
  bool known = false;
  const double ref = reference_alpha(ctx, known);
  if (known && ctx.map.is_first_coordinate())
    ctx.row("alpha_pi", pc.alpha, std::nullopt, ref, 0.02 * ref, "~=");
  else
    ctx.report("alpha_pi", pc.alpha);
  ctx.report("alpha_pi_wide", pc.alpha_wide);
  ctx.report("alpha_r_change", pc.r_change);

  // discretization sanity check: uniform density on [0, 1] with B = 1
  const auto uni = make_level_set_grid(
      0.0, 1.0, ctx.cfg.nodes, [](double) { return 0.0; }, [](double) { return 1.0; });
  const double pi2 = std::numbers::pi * std::numbers::pi;
  ctx.row("alpha_uniform_interval", spectral_gap(uni), std::nullopt, pi2, 0.01 * pi2, "~=");

  if (ctx.opts.write_files) {
    CsvWriter w(ctx.file("poincare.csv"), {"z", "alpha"});
    for (std::size_t i = 0; i < zs.size(); ++i)
      w.row({CsvWriter::num(zs[i]), CsvWriter::num(pc.per_z[i])});
    w.close();
  }
}

void run_poisson_check(Context& ctx) {
  const auto& m = ctx.model;
  const std::size_t d = m.dim();
  const auto zs = default_z_list(m, ctx.map);
  const double r = truncation(ctx);
  const double tau = ctx.map.offset()(0);
  const auto eff = make_effective(ctx);

  // closed-form solution u = gamma y / B for constant-B Gaussian models
  std::optional<double> slope;
  auto param = [&](const char* k, double def) {
    auto it = ctx.cfg.params.find(k);
    return it == ctx.cfg.params.end() ? def : it->second;
  };
  if (ctx.map.is_first_coordinate()) {
    if (ctx.cfg.model == "nr-gauss") slope = param("gamma", 0.5);
    if (ctx.cfg.model == "two-scale") slope = param("gamma", 0.5) * param("eps", 0.1);
  }

  std::unique_ptr<CsvWriter> out;
  if (ctx.opts.write_files)
    out = std::make_unique<CsvWriter>(ctx.file("poisson.csv"),
                                      std::vector<std::string>{"z", "y", "f", "u"});
  double worst_u = 0.0, worst_ratio_dev = 0.0, worst_b = 0.0, worst_slack = -1e300;
  for (double z : zs) {
    const auto grid = level_set_grid(m, ctx.map, z, r, ctx.cfg.nodes);
    std::vector<double> f(grid.size());
    double bgrid = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double x[kMaxDim] = {}, fx[kMaxDim];
      x[0] = z - tau;
      x[1] = grid.y[i];
      m.drift(ConstVec(x, d), MutVec(fx, d));
      f[i] = fx[0];
      bgrid += grid.mass[i] * fx[0];
    }
    // centre with the grid's own conditional mean so the data is mean-zero
    for (double& v : f) v -= bgrid;
    worst_b = std::max(worst_b, std::abs(bgrid - eff.drift(z)));
    const auto sol = solve_level_set_poisson(grid, f);
    worst_slack = std::max(worst_slack, (sol.energy - sol.bound) / sol.bound);
    if (slope) {
      // the Neumann wall at +-R leaves a boundary layer of width ~1/(aR) where
      // mu has no mass; compare on the inner 3 conditional SDs
      const double mid = 0.5 * (grid.y.front() + grid.y.back());
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid.y[i] - mid) <= 0.6 * r)
          worst_u = std::max(worst_u, std::abs(sol.u[i] - *slope * grid.y[i]));
      worst_ratio_dev = std::max(worst_ratio_dev, std::abs(sol.energy / sol.bound - 1.0));
    }
    if (out)
      for (std::size_t i = 0; i < grid.size(); ++i)
        out->row({CsvWriter::num(z), CsvWriter::num(grid.y[i]), CsvWriter::num(f[i]),
                  CsvWriter::num(sol.u[i])});
  }
  if (out) out->close();
  ctx.row("gradient_bound_slack", worst_slack, std::nullopt, 0.0, 1e-9, "<=");
  ctx.report("grid_b_minus_effective_b", worst_b);
  if (slope) {
    ctx.row("u_sup_error", worst_u, std::nullopt, 1e-3, 0.0, "<=");
    ctx.row("energy_over_bound_deviation", worst_ratio_dev, std::nullopt, 0.01, 0.0, "<=");
  }
}

void run_error_vs_bound(Context& ctx) {
  const auto eff = make_effective(ctx);
  const auto sample = diagnostics_sample(ctx);
  const auto c = compute_constants(ctx, sample);
  const auto gap = coefficient_gap(ctx.model, eff, ctx.map, sample);
  const auto in = bound_inputs(ctx, c, eff, ctx.cfg.horizon);
  const auto bt = evaluate_bounds(in);
  write_diagnostics(ctx, c, gap, in, bt);

  ctx.log("coupled run, " + std::to_string(ctx.cfg.n_paths) + " paths");
  auto [run, half] = coupled_with_halving(ctx, ctx.model, eff, coupled_options(ctx.cfg));
  const auto st = error_stats(run);
  const double se = se_or_zero(st.std_error);
  ctx.row("mean_plus_3se_vs_weak", st.mean + 3.0 * se, std::nullopt, bt.weak(), 0.0, "<=");
  ctx.row("mean_vs_strong", st.mean, st.std_error, bt.strong(), 3.0 * se, "<=");
  ctx.report("mean_sup_error2", st.mean, st.std_error);
  ctx.report("weak_A", bt.weak_a);
  ctx.report("strong_A", bt.strong_a);
  ctx.report("weak_C", bt.weak_c);
  ctx.report("strong_C", bt.strong_c);
  ctx.report("kappa2", c.kl.kappa2.value, c.kl.kappa2.std_error);
  ctx.report("lambda2", c.kl.lambda2.value, c.kl.lambda2.std_error);
  ctx.report("alpha_pi", c.pc.alpha);
  halving_row(ctx, "", st, half);
  write_per_path(ctx, run);
}

void run_scaling(Context& ctx) {
  if (ctx.cfg.model != "two-scale")
    throw ConfigError("model", "scaling needs the two-scale model");
  const auto& eps = ctx.cfg.eps_list;
  std::vector<double> means, ses, dts;
  std::vector<std::optional<CoupledRun>> halves;
  for (double e : eps) {
    ExperimentConfig c = ctx.cfg;
    c.params["eps"] = e;
    const SdeModel model = config_model(c);
    Context sub{c, ctx.opts, model, ctx.map, ctx.out, {}};
    const auto eff = make_effective(sub);
    CoupledOptions o = coupled_options(c);
    o.dt = std::min(ctx.cfg.dt, e * 5e-4);
    char buf[64];
    std::snprintf(buf, sizeof buf, "eps = %g, dt = %g", e, o.dt);
    ctx.log(buf);
    auto [run, half] = coupled_with_halving(sub, model, eff, o);
    const auto st = error_stats(run);
    means.push_back(st.mean);
    ses.push_back(se_or_zero(st.std_error));
    dts.push_back(o.dt);
    std::snprintf(buf, sizeof buf, "mean_sup_error2_eps_%g", e);
    ctx.report(buf, st.mean, st.std_error);
    if (half) {
      std::snprintf(buf, sizeof buf, "eps_%g_", e);
      halving_row(ctx, buf, st, half);
    }
  }
  const double slope = loglog_slope(eps, means);
  ctx.row("loglog_slope", slope, std::nullopt, 0.8, 1.3, "in");
  const auto lo = static_cast<std::size_t>(std::min_element(eps.begin(), eps.end()) - eps.begin());
  const auto hi = static_cast<std::size_t>(std::max_element(eps.begin(), eps.end()) - eps.begin());
  // 3-SE bars of the smallest- and largest-eps points must not overlap
  ctx.row("extreme_bar_separation", means[lo] + 3.0 * ses[lo], std::nullopt,
          means[hi] - 3.0 * ses[hi], 0.0, "<=");
  if (ctx.opts.write_files) {
    CsvWriter w(ctx.file("scaling.csv"), {"eps", "dt", "mean_sup_error2", "std_error"});
    for (std::size_t i = 0; i < eps.size(); ++i)
      w.row({CsvWriter::num(eps[i]), CsvWriter::num(dts[i]), CsvWriter::num(means[i]),
             CsvWriter::num(ses[i])});
    w.close();
  }
}

void run_stationarity(Context& ctx) {
  const auto& m = ctx.model;
  if (!has_exact_equilibrium(m))
    throw ConfigError("model", "stationarity needs an exactly sampled invariant measure");
  if (ctx.map.rank() != 1) throw ConfigError("map_k", "stationarity needs a rank-1 map");
  const auto eff = make_effective(ctx);
  const auto& cfg = ctx.cfg;
  const std::size_t n = cfg.n_paths, d = m.dim();
  const std::size_t steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
  if (std::abs(static_cast<double>(steps) * cfg.dt - cfg.horizon) > 1e-9 * cfg.horizon)
    throw ConfigError("T", "horizon is not a whole number of steps");

  ctx.log("effective dynamics, " + std::to_string(n) + " paths");
  std::vector<double> zt(n);
  const double sq = std::sqrt(cfg.dt);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    double x[kMaxDim];
    for (std::size_t p = b; p < e; ++p) {
      equilibrium_point(m, cfg.seed, p, MutVec(x, d));
      double z = ctx.map.apply_scalar(ConstVec(x, d));
      CounterStream rng(cfg.seed, p, StreamTag::noise);
      for (std::size_t s = 0; s < steps; ++s) {
        const double db = sq * rng.normal();
        const double zq = std::clamp(z, eff.range_lo, eff.range_hi);
        z = z + (eff.drift(zq) * cfg.dt + std::numbers::sqrt2 * (eff.diffusion(zq) * db));
        if (!std::isfinite(z)) throw DivergenceError("effective dynamics diverged", p, s + 1);
      }
      zt[p] = z;
    }
  });

  std::function<double(double)> cdf;
  std::vector<double> sample = zt;
  const auto& meta = m.metadata();
  if (meta.gaussian) {
    double mean = ctx.map.offset()(0), var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double ti = ctx.map.matrix()(0, static_cast<Eigen::Index>(i));
      mean += ti * meta.gaussian->mean[i];
      for (std::size_t j = 0; j < d; ++j)
        var += ti * meta.gaussian->covariance[i * d + j] *
               ctx.map.matrix()(0, static_cast<Eigen::Index>(j));
    }
    const double sd = std::sqrt(var);
    cdf = [mean, sd](double v) { return 0.5 * std::erfc(-(v - mean) / (sd * std::numbers::sqrt2)); };
  } else {
    if (!ctx.map.is_first_coordinate())
      throw ConfigError("map", "torus stationarity needs xi(x) = x^1");
    const double l = m.domain().period;
    for (double& v : sample) v -= l * std::floor(v / l);
    cdf = [l](double v) { return std::clamp(v / l, 0.0, 1.0); };
  }
  const double ks = ks_distance(sample, cdf);
  const double crit = 1.36 / std::sqrt(static_cast<double>(n));
  ctx.row("ks_distance", ks, std::nullopt, crit, cfg.ks_allowance, "<=");
  if (ctx.opts.write_files) {
    CsvWriter w(ctx.file("stationarity.csv"), {"path_index", "z_T"});
    for (std::size_t p = 0; p < n; ++p) w.row({CsvWriter::num(p), CsvWriter::num(zt[p])});
    w.close();
  }
}

void run_growth_in_t(Context& ctx) {
  const auto eff = make_effective(ctx);
  std::vector<double> ts = ctx.cfg.t_list;
  std::sort(ts.begin(), ts.end());
  std::vector<double> cps;
  for (double t : ts) {
    cps.push_back(t);
    cps.push_back(2.0 * t);
  }
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  CoupledOptions o = coupled_options(ctx.cfg);
  o.horizon = cps.back();
  o.checkpoints = cps;
  ctx.log("coupled run to T = " + format_double(o.horizon));
  const auto run = simulate_coupled(ctx.model, eff, ctx.map, o);
  std::vector<PathErrorStats> st;
  for (std::size_t c = 0; c < cps.size(); ++c) st.push_back(error_stats(checkpoint_column(run, c)));
  auto at = [&](double t) {
    const auto i = static_cast<std::size_t>(std::find(cps.begin(), cps.end(), t) - cps.begin());
    return st[i];
  };
  for (double t : ts) {
    const auto e1 = at(t), e2 = at(2.0 * t);
    char buf[64];
    std::snprintf(buf, sizeof buf, "ratio_T_%g", t);
    ctx.row(buf, e2.mean / e1.mean, std::nullopt, 2.5, 0.0, "<=");
  }
  for (std::size_t c = 0; c < cps.size(); ++c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "mean_sup_error2_T_%g", cps[c]);
    ctx.report(buf, st[c].mean, st[c].std_error);
  }
  if (ctx.opts.write_files) {
    CsvWriter w(ctx.file("growth.csv"), {"T", "mean_sup_error2", "std_error"});
    for (std::size_t c = 0; c < cps.size(); ++c)
      w.row({CsvWriter::num(cps[c]), CsvWriter::num(st[c].mean),
             CsvWriter::num(se_or_zero(st[c].std_error))});
    w.close();
  }
}

void run_random_clock_compare(Context& ctx) {
  const auto eff = make_effective(ctx);
  CoupledOptions o = coupled_options(ctx.cfg);
  o.noise_substeps = 1;
  ctx.log("standard and random-clock coupled runs");
  const auto std_run = simulate_coupled(ctx.model, eff, ctx.map, o);
  const auto rc_run = simulate_coupled_random_clock(ctx.model, eff, ctx.map, o);
  const auto s1 = error_stats(std_run), s2 = error_stats(rc_run);
  const auto gap = error_stats(rc_run.clock_gap);
  ctx.report("mean_sup_error2", s1.mean, s1.std_error);
  ctx.report("mean_sup_error2_random_clock", s2.mean, s2.std_error);

  // E_mu | |T Sigma|^2 - sigma^2(xi) |
  const auto sample = diagnostics_sample(ctx);
  const std::size_t d = ctx.model.dim();
  std::vector<double> h(sample.size());
  parallel_for(sample.size(), [&](std::size_t b, std::size_t e) {
    double a[kMaxDim * kMaxDim];
    for (std::size_t i = b; i < e; ++i) {
      const ConstVec x = sample.point(i);
      ctx.model.diffusion_matrix(x, MutVec(a, d * d));
      double s2v = 0.0;
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q)
          s2v += ctx.map.matrix()(0, static_cast<Eigen::Index>(p)) * a[p * d + q] *
                 ctx.map.matrix()(0, static_cast<Eigen::Index>(q));
      const double z = std::clamp(ctx.map.apply_scalar(x), eff.range_lo, eff.range_hi);
      const double sg = eff.diffusion(z);
      h[i] = std::abs(s2v - sg * sg);
    }
  });
  const auto hs = error_stats(h);
  const double t = ctx.cfg.horizon;
  const double bound = t * hs.mean;
  ctx.report("mean_abs_clock_rate_gap", hs.mean, hs.std_error);
  if (eff.lipschitz_diffusion == 0.0) {
    const double se = std::hypot(se_or_zero(gap.std_error), t * se_or_zero(hs.std_error));
    ctx.row("clock_gap_mean", gap.mean, gap.std_error, bound, 2.0 * se, "<=");
  } else {
    ctx.report("clock_gap_mean", gap.mean, gap.std_error);
  }
  if (ctx.opts.write_files) {
    CsvWriter w(ctx.file("per_path_errors.csv"),
                {"path_index", "sup_error2", "sup_error2_random_clock", "clock_gap"});
    for (std::size_t p = 0; p < o.n_paths; ++p)
      w.row({CsvWriter::num(p), CsvWriter::num(std_run.sup_error2[p]),
             CsvWriter::num(rc_run.sup_error2[p]), CsvWriter::num(rc_run.clock_gap[p])});
    w.close();
  }
}

void write_summary(Context& ctx) {
  CsvWriter w(ctx.file("summary.csv"),
              {"metric", "value", "std_error", "bound", "tolerance", "relation", "pass"});
  for (const auto& r : ctx.result.rows)
    w.row({r.metric, CsvWriter::num(r.value), r.std_error ? CsvWriter::num(*r.std_error) : "",
           CsvWriter::num(r.bound), CsvWriter::num(r.tolerance), r.relation,
           r.pass() ? "true" : "false"});
  w.close();
}

}  // namespace

ExperimentResult run(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate(cfg);
  SdeModel model = config_model(cfg);
  CoarseMap map = config_map(cfg, model.dim());
  fs::path out = opts.out_dir.empty() ? fs::path(cfg.output) : fs::path(opts.out_dir);
  if (opts.write_files) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("output", "cannot create '" + out.string() + "': " + ec.message());
  }
  Context ctx{cfg, opts, std::move(model), std::move(map), out, {}};
  ctx.result.experiment = to_string(cfg.experiment);

  switch (cfg.experiment) {
    case ExperimentKind::exactness: run_exactness(ctx); break;
    case ExperimentKind::gap_check: run_gap_check(ctx); break;
    case ExperimentKind::poincare_check: run_poincare_check(ctx); break;
    case ExperimentKind::poisson_check: run_poisson_check(ctx); break;
    case ExperimentKind::error_vs_bound: run_error_vs_bound(ctx); break;
    case ExperimentKind::scaling: run_scaling(ctx); break;
    case ExperimentKind::stationarity: run_stationarity(ctx); break;
    case ExperimentKind::growth_in_t: run_growth_in_t(ctx); break;
    case ExperimentKind::random_clock_compare: run_random_clock_compare(ctx); break;
  }
  if (opts.write_files) write_summary(ctx);
  return ctx.result;
}

std::string summary_text(const ExperimentResult& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-34s %14s %11s %14s %11s %-6s %s\n", "metric", "value",
                "std_error", "bound", "tolerance", "rel", "pass");
  os << line;
  for (const auto& row : r.rows) {
    char se[32] = "";
    if (row.std_error) std::snprintf(se, sizeof se, "%.3g", *row.std_error);
    std::snprintf(line, sizeof line, "%-34s %14.6g %11s %14.6g %11.3g %-6s %s\n",
                  row.metric.c_str(), row.value, se, row.bound, row.tolerance,
                  row.relation.c_str(), row.relation == "report" ? "-" : (row.pass() ? "yes" : "NO"));
    os << line;
  }
  os << (r.passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace cforge
