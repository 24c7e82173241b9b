#include <cmath>
#include <cstdio>
#include <numbers>
#include <filesystem>
#include <vector>

#include "coarse_forge/csv.hpp"
#include "coarse_forge/diagnostics.hpp"
#include "coarse_forge/effective.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/sampling.hpp"
#include "doctest.h"

using namespace cforge;

namespace {

// E[sin^2(y)], y ~ N(0, 1/a), by trapezoid quadrature on [-12 sd, 12 sd]
double mean_sin2(double a) {
  const double sd = 1.0 / std::sqrt(a);
  const int n = 20'000;
  const double lo = -12.0 * sd, h = 24.0 * sd / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * std::pow(std::sin(y), 2) * std::exp(-0.5 * a * y * y);
  }
  return s * h / std::sqrt(2.0 * std::numbers::pi / a);
}

double max_central_dev(const ConditionalProfile& p, double zmax) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.bins(); ++i)
    if (p.valid[i] && std::abs(p.centers[i]) <= zmax)
      worst = std::max(worst, std::abs(p.b_hat[i] + p.centers[i]));
  return worst;
}

// Same, against the exact bin average of b(z) = -z under N(0, 1).
double max_central_dev_exact(const ConditionalProfile& p, double zmax) {
  auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); };
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  double worst = 0.0;
  for (std::size_t i = 0; i < p.bins(); ++i) {
    if (!p.valid[i] || std::abs(p.centers[i]) > zmax) continue;
    const double lo = p.edges[i], hi = p.edges[i + 1];
    const double mean = (phi(lo) - phi(hi)) / (cdf(hi) - cdf(lo));
    worst = std::max(worst, std::abs(p.b_hat[i] + mean));
  }
  return worst;
}

}  // namespace

TEST_CASE("torus: b_hat = u2 in every valid bin") {
  const auto m = registry("torus-symplectic", {{"u2", 0.7}});
  const auto s = sample_equilibrium(m, 100'000, 1);
  const auto p = estimate_conditional(s, m, CoarseMap::coordinate(2), uniform_edges(0.0, 1.0, 20));
  CHECK(p.valid_bins() == 20);
  for (std::size_t i = 0; i < p.bins(); ++i) {
    const double tol = 3.0 * p.b_sd[i] / std::sqrt(static_cast<double>(p.counts[i])) + 1e-12;
    CHECK(std::abs(p.b_hat[i] - 0.7) <= tol);
    // Sigma = Id: |T Sigma|^2 is identically one
    CHECK(p.sigma2_hat[i] == 1.0);
  }
}

TEST_CASE("nr-gauss: b_hat(z) = -z on central bins") {
  const auto m = registry("nr-gauss", {{"a", 4.0}, {"gamma", 0.5}});
  const auto s = sample_equilibrium(m, 1'000'000, 2);
  const auto p = estimate_conditional(s, m, CoarseMap::coordinate(2), uniform_edges(-3.0, 3.0, 50));
  CHECK(max_central_dev(p, 2.0) < 0.05);
  CHECK(effective_from_profile(p).provenance == Provenance::estimated);
  // slopes between sparsely populated outer bins are noisy; the Lipschitz
  // estimate is checked on a coarser central profile
  const auto e = effective_from_profile(
      estimate_conditional(s, m, CoarseMap::coordinate(2), uniform_edges(-2.0, 2.0, 12)));
  CHECK(e.lipschitz_drift >= 0.9);
  CHECK(e.lipschitz_drift <= 1.2);
  CHECK(e.lipschitz_diffusion == 0.0);
}

TEST_CASE("property: estimator error shrinks like 1/sqrt(n)") {
  const auto m = registry("nr-gauss", {{"a", 4.0}, {"gamma", 0.5}});
  const auto edges = uniform_edges(-2.0, 2.0, 8);
  const auto map = CoarseMap::coordinate(2);
  // averaged over seeds so one unlucky draw cannot decide the check
  double small = 0.0, large = 0.0;
  for (std::uint64_t seed = 10; seed < 18; ++seed) {
    const auto ps = estimate_conditional(sample_equilibrium(m, 50'000, seed), m, map, edges);
    const auto pl = estimate_conditional(sample_equilibrium(m, 200'000, seed + 100), m, map, edges);
    small += max_central_dev_exact(ps, 1.5);
    large += max_central_dev_exact(pl, 1.5);
  }
  MESSAGE("deviation ratio " << large / small);
  CHECK(large / small <= 0.6);
}

TEST_CASE("interpolation arithmetic") {
  ConditionalProfile p;
  p.edges = {-1.5, -0.5, 0.5, 1.5};
  p.centers = {-1.0, 0.0, 1.0};
  p.b_hat = {-1.0, 0.0, 1.0};
  p.b_sd = {0.0, 0.0, 0.0};
  p.sigma2_hat = {4.0, 4.0, 4.0};
  p.counts = {100, 100, 100};
  p.valid = {true, true, true};
  const auto e = effective_from_profile(p);
  CHECK(e.drift(0.5) == doctest::Approx(0.5));
  CHECK(e.drift(2.0) == doctest::Approx(1.0));
  CHECK(e.drift(-7.0) == doctest::Approx(-1.0));
  CHECK(e.diffusion(0.3) == doctest::Approx(2.0));
  CHECK(e.lipschitz_drift == doctest::Approx(1.0));
  CHECK(e.lipschitz_diffusion == 0.0);
  CHECK(e.range_lo == -1.0);
  CHECK(e.range_hi == 1.0);

  p.valid = {false, true, false};
  CHECK_THROWS_AS(effective_from_profile(p), ModelError);
}

TEST_CASE("analytic effective coefficients") {
  const auto map = CoarseMap::coordinate(2);
  const auto t = analytic_effective(registry("torus-symplectic", {{"u2", 0.7}}), map);
  CHECK(t.drift(0.123) == doctest::Approx(0.7));
  CHECK(t.diffusion(0.5) == doctest::Approx(1.0));
  CHECK(t.lipschitz_drift == 0.0);

  const auto g = analytic_effective(registry("nr-gauss"), map);
  CHECK(g.drift(1.7) == doctest::Approx(-1.7));
  CHECK(g.diffusion(-3.0) == doctest::Approx(1.0));
  CHECK(g.lipschitz_drift == 1.0);

  const double a = 4.0, delta = 0.5;
  const auto v = analytic_effective(registry("var-diff", {{"a", a}, {"delta", delta}}), map);
  const double s2 = 1.0 + delta * mean_sin2(a);
  for (double z : {-2.0, 0.0, 0.4, 3.0})
    CHECK(v.diffusion(z) * v.diffusion(z) == doctest::Approx(s2).epsilon(1e-10));
  CHECK(v.drift(1.0) == doctest::Approx(-s2).epsilon(1e-10));
  CHECK(v.lipschitz_diffusion == 0.0);

  CHECK_THROWS_AS(analytic_effective(registry("nr-gauss"), CoarseMap::coordinate(2, 1)),
                  ModelError);
}

TEST_CASE("property: estimated b is no better an L2 predictor than the analytic one") {
  const auto m = registry("var-diff", {{"a", 4.0}, {"gamma", 0.5}, {"delta", 0.5}});
  const auto map = CoarseMap::coordinate(2);
  const auto s = sample_equilibrium(m, 400'000, 5);
  const auto est = effective_from_profile(
      estimate_conditional(s, m, map, uniform_edges(-3.0, 3.0, 40)));
  const auto ana = analytic_effective(m, map);
  const auto eval = sample_equilibrium(m, 200'000, 6);
  const auto ge = coefficient_gap(m, est, map, eval);
  const auto ga = coefficient_gap(m, ana, map, eval);
  CHECK(ge.drift.value >= ga.drift.value - 3.0 * std::hypot(ge.drift.std_error, ga.drift.std_error));
}

TEST_CASE("property: estimated sigma is nonnegative and bounded by the sampled |Sigma^1|") {
  const auto m = registry("var-diff", {{"delta", 0.5}});
  const auto map = CoarseMap::coordinate(2);
  const auto s = sample_equilibrium(m, 100'000, 7);
  double max_row = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::vector<double> sg(4);
    m.diffusion(s.point(i), sg);
    max_row = std::max(max_row, std::hypot(sg[0], sg[1]));
  }
  const auto e = effective_from_profile(estimate_conditional(s, m, map, uniform_edges(-3, 3, 30)));
  for (double z = -4.0; z <= 4.0; z += 0.01) {
    CHECK(e.diffusion(z) >= 0.0);
    CHECK(e.diffusion(z) <= max_row + 1e-12);
  }
}

TEST_CASE("estimation preconditions") {
  const auto m = registry("nr-gauss");
  const auto map = CoarseMap::coordinate(2);
  const auto s = sample_equilibrium(m, 100, 0);
  CHECK_THROWS(estimate_conditional(s, m, map, uniform_edges(-3, 3, 50)));
  // every bin below min_count
  CHECK_THROWS_AS(estimate_conditional(s, m, map, uniform_edges(50, 60, 5)), ModelError);
  CHECK_THROWS(uniform_edges(1.0, 0.0, 4));
}

TEST_CASE("profile CSV round-trips at 17 digits") {
  const auto m = registry("nr-gauss");
  const auto s = sample_equilibrium(m, 20'000, 3);
  const auto p = estimate_conditional(s, m, CoarseMap::coordinate(2), uniform_edges(-2, 2, 10));
  const auto path = (std::filesystem::temp_directory_path() / "cf_profile_test.csv").string();
  write_profile_csv(p, path);
  const auto rows = read_csv(path);
  REQUIRE(rows.size() == p.bins() + 1);
  CHECK(rows[0] == std::vector<std::string>{"z", "b_hat", "sigma2_hat", "count"});
  for (std::size_t i = 0; i < p.bins(); ++i) {
    CHECK(std::stod(rows[i + 1][0]) == p.centers[i]);
    CHECK(std::stod(rows[i + 1][1]) == p.b_hat[i]);
  }
  std::filesystem::remove(path);
}
