#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "coarse_forge/coupled.hpp"
#include "coarse_forge/csv.hpp"
#include "coarse_forge/diagnostics.hpp"
#include "coarse_forge/error.hpp"
#include "doctest.h"

using namespace cforge;

namespace {

const CoarseMap kMap = CoarseMap::coordinate(2);

// trapezoid expectation under N(0, 1/a)
template <class F>
double gauss_expect(double a, F f) {
  const double sd = 1.0 / std::sqrt(a);
  const int n = 40'000;
  const double lo = -12.0 * sd, h = 24.0 * sd / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    s += ((i == 0 || i == n) ? 0.5 : 1.0) * f(y) * std::exp(-0.5 * a * y * y);
  }
  return s * h * std::sqrt(a / (2.0 * std::numbers::pi));
}

// lambda^2 for var-diff: E[(d_y s(y))^2] with s = sqrt(1 + delta sin^2 y), B = 1
double var_diff_lambda2(double a, double delta) {
  return gauss_expect(a, [delta](double y) {
    const double s = std::sqrt(1.0 + delta * std::pow(std::sin(y), 2));
    const double ds = delta * std::sin(y) * std::cos(y) / s;
    return ds * ds;
  });
}

double interior_sup(const LevelSetGrid& g, const std::vector<double>& u,
                    const std::function<double(double)>& exact, double half_width) {
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(g.y[i]) <= half_width) worst = std::max(worst, std::abs(u[i] - exact(g.y[i])));
  return worst;
}

}  // namespace

TEST_CASE("nr-gauss level-set weights are the N(0, 1/4) density") {
  const auto m = registry("nr-gauss", {{"a", 4.0}});
  for (double z : {-1.5, 0.0, 2.0}) {
    const auto g = level_set_grid(m, kMap, z, 2.5, 2001);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double exact = std::sqrt(4.0 / (2.0 * std::numbers::pi)) * std::exp(-2.0 * g.y[i] * g.y[i]);
      worst = std::max(worst, std::abs(g.weights[i] - exact));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("torus level sets are uniform; two-scale metric is 1/eps") {
  const auto t = level_set_grid(registry("torus-symplectic"), kMap, 0.3, 0.0, 101);
  for (double w : t.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.y.front() == 0.0);
  CHECK(t.y.back() == 1.0);
  const auto ts = level_set_grid(registry("two-scale", {{"eps", 0.1}}), kMap, 0.0, 2.5, 201);
  for (double b : ts.b_vals) CHECK(b == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("Poincare constants against closed forms") {
  const auto g = registry("nr-gauss", {{"a", 4.0}});
  const auto zs = default_z_list(g, kMap);
  CHECK(zs.size() == 9);
  CHECK(zs.front() == doctest::Approx(-3.0));
  CHECK(zs.back() == doctest::Approx(3.0));
  const auto pg = poincare_constant(g, kMap, zs, 2.5, 2001);
  CHECK(pg.alpha == doctest::Approx(4.0).epsilon(0.02));
  CHECK_FALSE(pg.r_sensitive);

  const auto ts = registry("two-scale", {{"a", 4.0}, {"eps", 0.1}});
  CHECK(poincare_constant(ts, kMap, zs, 2.5, 2001).alpha == doctest::Approx(40.0).epsilon(0.02));

  const auto uni = make_level_set_grid(0.0, 1.0, 2001, [](double) { return 0.0; },
                                       [](double) { return 1.0; });
  CHECK(spectral_gap(uni) == doctest::Approx(std::numbers::pi * std::numbers::pi).epsilon(0.01));
}

TEST_CASE("property: the Poincare estimate does not grow with R") {
  const auto m = registry("var-diff", {{"a", 4.0}, {"delta", 0.5}});
  const std::vector<double> zs{0.0, 1.0};
  double prev = 1e300;
  for (double r : {1.5, 2.0, 2.5, 3.0}) {
    const double alpha = poincare_constant(m, kMap, zs, r, 1201).alpha;
    CHECK(alpha <= prev * 1.01);
    prev = alpha;
  }
}

TEST_CASE("level-set Poisson: u = gamma y for f = gamma a y") {
  const double a = 4.0, gamma = 0.5, r = 2.5;
  const auto g = level_set_grid(registry("nr-gauss", {{"a", a}}), kMap, 0.0, r, 2001);
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = gamma * a * g.y[i];
  const auto sol = solve_level_set_poisson(g, f);
  CHECK(interior_sup(g, sol.u, [&](double y) { return gamma * y; }, 0.6 * r) < 1e-3);
  CHECK(sol.energy == doctest::Approx(gamma * gamma).epsilon(0.01));
  CHECK(sol.energy / sol.bound == doctest::Approx(1.0).epsilon(0.01));
  CHECK(sol.bound_holds);
}

TEST_CASE("level-set Poisson: zero data and non-mean-zero data") {
  const auto g = level_set_grid(registry("nr-gauss"), kMap, 0.0, 2.5, 201);
  const auto zero = solve_level_set_poisson(g, std::vector<double>(g.size(), 0.0));
  for (double u : zero.u) CHECK(u == 0.0);
  CHECK_THROWS_AS(solve_level_set_poisson(g, std::vector<double>(g.size(), 1.0)), NumericalError);
  CHECK_THROWS_AS(solve_level_set_poisson(g, std::vector<double>(3, 0.0)), DimensionError);
}

TEST_CASE("level-set Poisson: second-order self-convergence") {
  // f = y^2 - 1/a (the second Hermite mode); successive differences between
  // grids with h, h/2, h/4 shrink by 4 at shared nodes
  const double a = 4.0, r = 2.5;
  const auto m = registry("nr-gauss", {{"a", a}});
  std::vector<LevelSetGrid> grids;
  std::vector<std::vector<double>> us;
  for (std::size_t n : {201u, 401u, 801u}) {
    grids.push_back(level_set_grid(m, kMap, 0.0, r, n));
    const auto& g = grids.back();
    std::vector<double> f(g.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      f[i] = g.y[i] * g.y[i] - 1.0 / a;
      mean += g.mass[i] * f[i];
    }
    // the discrete mean differs from zero by the quadrature error only
    for (double& v : f) v -= mean;
    us.push_back(solve_level_set_poisson(g, f).u);
  }
  double d01 = 0.0, d12 = 0.0;
  for (std::size_t i = 0; i < grids[0].size(); ++i) {
    CHECK(grids[1].y[2 * i] == doctest::Approx(grids[0].y[i]));
    d01 = std::max(d01, std::abs(us[0][i] - us[1][2 * i]));
    d12 = std::max(d12, std::abs(us[1][2 * i] - us[2][4 * i]));
  }
  MESSAGE("differences " << d01 << " " << d12);
  CHECK(std::log2(d01 / d12) >= 1.8);
  // and the interior matches u = (y^2 - 1/a) / (2a) up to the truncation layer
  CHECK(interior_sup(grids[2], us[2], [a](double y) { return (y * y - 1.0 / a) / (2.0 * a); },
                     0.6 * r) < 1e-3);
}

TEST_CASE("property: Poisson a-posteriori bound at every z") {
  const auto m = registry("var-diff", {{"a", 4.0}, {"gamma", 0.5}, {"delta", 0.5}});
  for (double z : default_z_list(m, kMap)) {
    const auto g = level_set_grid(m, kMap, z, 2.5, 1001);
    std::vector<double> f(g.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x[2] = {z, g.y[i]};
      double fx[2];
      m.drift(ConstVec(x, 2), MutVec(fx, 2));
      f[i] = fx[0];
      mean += g.mass[i] * f[i];
    }
    for (double& v : f) v -= mean;
    CHECK(solve_level_set_poisson(g, f).bound_holds);
  }
}

TEST_CASE("kappa^2 and lambda^2") {
  const auto g = registry("nr-gauss", {{"a", 4.0}, {"gamma", 0.5}});
  const auto kg = estimate_kappa_lambda(g, kMap, sample_equilibrium(g, 100'000, 1));
  CHECK(std::abs(kg.kappa2.value - 4.0) <= 3.0 * kg.kappa2.std_error + 1e-9);
  CHECK(kg.lambda2.value == 0.0);

  const auto ts = registry("two-scale", {{"a", 4.0}, {"gamma", 0.5}, {"eps", 0.1}});
  const auto kt = estimate_kappa_lambda(ts, kMap, sample_equilibrium(ts, 100'000, 2));
  CHECK(std::abs(kt.kappa2.value - 40.0) <= 3.0 * kt.kappa2.std_error + 1e-7);

  const auto vd = registry("var-diff", {{"a", 4.0}, {"gamma", 0.5}, {"delta", 0.5}});
  const auto kv = estimate_kappa_lambda(vd, kMap, sample_equilibrium(vd, 400'000, 3));
  const double oracle = var_diff_lambda2(4.0, 0.5);
  MESSAGE("lambda2 " << kv.lambda2.value << " +- " << kv.lambda2.std_error << " oracle " << oracle);
  CHECK(kv.lambda2.value > 0.0);
  CHECK(std::abs(kv.lambda2.value - oracle) <= 3.0 * kv.lambda2.std_error);
}

TEST_CASE("coefficient gaps") {
  const auto g = registry("nr-gauss", {{"a", 4.0}, {"gamma", 0.5}});
  const auto gg = coefficient_gap(g, analytic_effective(g, kMap), kMap,
                                  sample_equilibrium(g, 400'000, 4));
  CHECK(std::abs(gg.drift.value - 1.0) <= 3.0 * gg.drift.std_error);
  CHECK(gg.diffusion.value == 0.0);

  const auto t = registry("torus-symplectic");
  const auto gt = coefficient_gap(t, analytic_effective(t, kMap), kMap, sample_equilibrium(t, 1000, 5));
  CHECK(gt.drift.value == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(gt.diffusion.value == 0.0);
}

TEST_CASE("property: gap invariants hold for every registry model") {
  for (const auto& name : registry_names()) {
    CAPTURE(name);
    const auto m = registry(name);
    const auto s = sample_equilibrium(m, 100'000, 6);
    const auto kl = estimate_kappa_lambda(m, kMap, s);
    const auto pc = poincare_constant(m, kMap, default_z_list(m, kMap), 2.5, 1001);
    const auto gap = coefficient_gap(m, analytic_effective(m, kMap), kMap, s);
    const double a = pc.alpha;
    const double se_d = std::hypot(gap.drift.std_error, kl.kappa2.std_error / a);
    CHECK(gap.drift.value <= kl.kappa2.value / a + 3.0 * se_d + 1e-12);
    const double se_s = std::hypot(gap.diffusion.std_error, 2.0 * kl.lambda2.std_error / a);
    CHECK(gap.diffusion.value <= 2.0 * kl.lambda2.value / a + 3.0 * se_s + 1e-12);
  }
}

TEST_CASE("bound formulas") {
  BoundInputs in;
  in.kappa2 = 4.0;
  in.alpha = 4.0;
  in.lipschitz_drift = 1.0;
  in.horizon = 1.0;
  in.identity_diffusion = true;
  auto b = evaluate_bounds(in);
  CHECK(b.weak_a == doctest::Approx((std::exp(3.0) - 1.0) / 3.0).epsilon(1e-14));
  CHECK(b.weak_a == doctest::Approx(6.362).epsilon(1e-3));
  CHECK(b.strong_a == doctest::Approx(27.0 * 4.0 / 16.0 * std::exp(1.0)).epsilon(1e-14));
  CHECK(b.row == TableRow::general_identity);
  CHECK(b.weak() == b.weak_a);
  CHECK(b.strong() == b.strong_a);

  in.identity_diffusion = false;
  b = evaluate_bounds(in);
  CHECK(b.row == TableRow::slow_diffusion);
  CHECK(b.c == 4.0);
  // lambda^2 = 0: strong-C reduces to 54 e^{CT} T kappa^2 / alpha^2
  CHECK(b.strong_c == doctest::Approx(54.0 * std::exp(4.0) * 4.0 / 16.0).epsilon(1e-14));
  CHECK(b.weak() == b.weak_c);

  in.lambda2 = 0.1;
  in.lipschitz_diffusion = 0.5;
  b = evaluate_bounds(in);
  CHECK(b.row == TableRow::general);
  CHECK(b.c == 8.0);
  CHECK(b.weak_c == doctest::Approx(std::exp(8.0) * (4.0 * 4.0 / 4.0 + 64.0 * 0.1 / 4.0)));

  in.identity_diffusion = true;
  in.reversible = true;
  CHECK(evaluate_bounds(in).row == TableRow::reversible_identity);

  in.horizon = 0.0;
  b = evaluate_bounds(in);
  CHECK(b.weak_a == 0.0);
  CHECK(b.strong_a == 0.0);
  CHECK(b.weak_c == 0.0);
  CHECK(b.strong_c == 0.0);

  in.alpha = 0.0;
  CHECK_THROWS_AS(evaluate_bounds(in), ModelError);
}

TEST_CASE("property: measured error stays under the applicable weak bound") {
  for (const auto& name : registry_names()) {
    CAPTURE(name);
    const auto m = registry(name);
    const auto eff = analytic_effective(m, kMap);
    const auto s = sample_equilibrium(m, 50'000, 7);
    const auto kl = estimate_kappa_lambda(m, kMap, s);
    const auto pc = poincare_constant(m, kMap, default_z_list(m, kMap), 2.5, 1001);
    BoundInputs in{kl.kappa2.value, kl.lambda2.value, pc.alpha, eff.lipschitz_drift,
                   eff.lipschitz_diffusion, 1.0, m.metadata().identity_diffusion,
                   m.metadata().reversible};
    const auto b = evaluate_bounds(in);
    CoupledOptions o;
    o.n_paths = 500;
    o.seed = 8;
    const auto st = error_stats(simulate_coupled(m, eff, kMap, o));
    CHECK(st.mean <= b.weak() + 3.0 * *st.std_error);
  }
}

TEST_CASE("report CSV and text") {
  const auto m = registry("var-diff");
  const auto s = sample_equilibrium(m, 10'000, 9);
  DiagnosticsReport r;
  r.kl = estimate_kappa_lambda(m, kMap, s);
  r.poincare = poincare_constant(m, kMap, {0.0}, 2.5, 201);
  r.gap = coefficient_gap(m, analytic_effective(m, kMap), kMap, s);
  r.inputs = {r.kl.kappa2.value, r.kl.lambda2.value, r.poincare.alpha, 1.0, 0.0, 1.0, false, false};
  r.bounds = evaluate_bounds(r.inputs);
  const auto path = (std::filesystem::temp_directory_path() / "cf_report_test.csv").string();
  write_report_csv(r, path);
  const auto rows = read_csv(path);
  CHECK(rows[0] == std::vector<std::string>{"quantity", "value", "std_error"});
  bool has_weak_c = false;
  for (const auto& row : rows)
    if (row[0] == "weak_C") has_weak_c = std::stod(row[1]) == r.bounds.weak_c;
  CHECK(has_weak_c);
  std::filesystem::remove(path);
  const auto text = report_text(r);
  CHECK(text.find("general F and Sigma") != std::string::npos);
  CHECK(text.find("weak") != std::string::npos);
}
