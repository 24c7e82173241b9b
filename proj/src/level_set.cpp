#include <algorithm>
#include <cmath>
#include <limits>

#include "coarse_forge/diagnostics.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/parallel.hpp"

namespace cforge {

LevelSetGrid make_level_set_grid(double lo, double hi, std::size_t n_nodes,
                                 const std::function<double(double)>& neg_log_density,
                                 const std::function<double(double)>& metric, double z) {
  if (n_nodes < 3) throw NumericalError("level set grid needs at least 3 nodes");
  if (!(hi > lo)) throw NumericalError("level set grid interval is empty");
  LevelSetGrid g;
  g.z = z;
  g.h = (hi - lo) / static_cast<double>(n_nodes - 1);
  g.y.resize(n_nodes);
  g.weights.resize(n_nodes);
  g.mass.resize(n_nodes);
  g.b_vals.resize(n_nodes);
  std::vector<double> v(n_nodes);
  double vmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n_nodes; ++i) {
    g.y[i] = lo + g.h * static_cast<double>(i);
    v[i] = neg_log_density(g.y[i]);
    if (std::isnan(v[i])) throw NumericalError("level set density is NaN");
    vmin = std::min(vmin, v[i]);
    g.b_vals[i] = metric(g.y[i]);
    if (!(g.b_vals[i] > 0.0) || !std::isfinite(g.b_vals[i]))
      throw NumericalError("level set metric B is not positive");
  }
  if (!std::isfinite(vmin)) throw NumericalError("level set density is not normalizable");
  double total = 0.0;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    g.weights[i] = std::exp(-(v[i] - vmin));
    const double q = (i == 0 || i + 1 == n_nodes) ? 0.5 * g.h : g.h;
    total += q * g.weights[i];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericalError("level set weights are not normalizable");
  for (std::size_t i = 0; i < n_nodes; ++i) {
    g.weights[i] /= total;
    if (!(g.weights[i] > 0.0))
      throw NumericalError("level set weight underflows; reduce the truncation R");
    const double q = (i == 0 || i + 1 == n_nodes) ? 0.5 * g.h : g.h;
    g.mass[i] = q * g.weights[i];
  }
  const double wmax = *std::max_element(g.weights.begin(), g.weights.end());
  g.tail_ratio = std::max(g.weights.front(), g.weights.back()) / wmax;
  return g;
}

LevelSetGrid level_set_grid(const SdeModel& model, const CoarseMap& map, double z, double r,
                            std::size_t n_nodes) {
  if (model.dim() != 2 || map.dim() != 2 || map.rank() != 1)
    throw DimensionError("level set grids need d = 2 and a rank-1 map");
  const auto& t = map.matrix();
  if (t(0, 0) != 1.0 || t(0, 1) != 0.0)
    throw DimensionError("level set grids need xi(x) = x^1 + tau");
  const double x1 = z - map.offset()(0);
  double lo = -r, hi = r;
  if (model.domain().is_torus()) {
    lo = 0.0;
    hi = model.domain().period;
  } else if (!(r > 0.0)) {
    throw NumericalError("level set truncation R must be positive");
  }
  auto neg_log = [&](double y) {
    const double x[2] = {x1, y};
    return model.potential(ConstVec(x, 2));
  };
  auto metric = [&](double y) {
    const double x[2] = {x1, y};
    return geometry_at(model, ConstVec(x, 2)).b(0, 0);
  };
  return make_level_set_grid(lo, hi, n_nodes, neg_log, metric, z);
}

namespace {

// k_{i+1/2}: edge conductances of the weighted Dirichlet form
std::vector<double> edge_coefficients(const LevelSetGrid& g) {
  std::vector<double> k(g.size() - 1);
  for (std::size_t i = 0; i + 1 < g.size(); ++i)
    k[i] = 0.5 * (g.b_vals[i] * g.weights[i] + g.b_vals[i + 1] * g.weights[i + 1]) / g.h;
  return k;
}

}  // namespace

double spectral_gap(const LevelSetGrid& g) {
  const std::size_t n = g.size();
  if (n < 3) throw NumericalError("spectral gap needs at least 3 nodes");
  const auto k = edge_coefficients(g);
  Eigen::VectorXd diag(static_cast<Eigen::Index>(n));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    if (i > 0) s += k[i - 1];
    if (i + 1 < n) s += k[i];
    diag(static_cast<Eigen::Index>(i)) = s / g.mass[i];
    if (i + 1 < n)
      sub(static_cast<Eigen::Index>(i)) = -k[i] / std::sqrt(g.mass[i] * g.mass[i + 1]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("tridiagonal eigen-solve failed");
  // eigenvalues ascending; the first is the constant mode
  return es.eigenvalues()(1);
}

std::vector<double> default_z_list(const SdeModel& model, const CoarseMap& map) {
  double mean = map.offset()(0), sd = 1.0;
  if (const auto& gm = model.metadata().gaussian) {
    const std::size_t d = model.dim();
    double m = 0.0, var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double ti = map.matrix()(0, static_cast<Eigen::Index>(i));
      m += ti * gm->mean[i];
      for (std::size_t j = 0; j < d; ++j)
        var += ti * gm->covariance[i * d + j] * map.matrix()(0, static_cast<Eigen::Index>(j));
    }
    mean += m;
    sd = std::sqrt(var);
  }
  std::vector<double> z(9);
  for (std::size_t i = 0; i < 9; ++i) z[i] = mean + sd * (-3.0 + 0.75 * static_cast<double>(i));
  return z;
}

PoincareEstimate poincare_constant(const SdeModel& model, const CoarseMap& map,
                                   const std::vector<double>& z_list, double r,
                                   std::size_t n_nodes) {
  if (z_list.empty()) throw NumericalError("poincare_constant: empty z list");
  PoincareEstimate est;
  est.z_list = z_list;
  est.per_z.assign(z_list.size(), 0.0);
  std::vector<double> wide(z_list.size(), 0.0);
  const std::size_t n_wide =
      static_cast<std::size_t>(std::llround(1.25 * static_cast<double>(n_nodes - 1))) + 1;
  const bool torus = model.domain().is_torus();
  parallel_for(z_list.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      est.per_z[i] = spectral_gap(level_set_grid(model, map, z_list[i], r, n_nodes));
      wide[i] = torus ? est.per_z[i]
                      : spectral_gap(level_set_grid(model, map, z_list[i], 1.25 * r, n_wide));
    }
  });
  const auto imin = static_cast<std::size_t>(
      std::min_element(est.per_z.begin(), est.per_z.end()) - est.per_z.begin());
  est.alpha = est.per_z[imin];
  est.alpha_wide = *std::min_element(wide.begin(), wide.end());
  if (!(est.alpha > 0.0)) throw NumericalError("poincare_constant: nonpositive spectral gap");
  est.r_change = std::abs(est.alpha_wide - est.alpha) / est.alpha;
  est.r_sensitive = est.r_change > 0.01;
  return est;
}

PoissonSolution solve_level_set_poisson(const LevelSetGrid& g, const std::vector<double>& f_in) {
  const std::size_t n = g.size();
  if (f_in.size() != n) throw DimensionError("poisson: data length does not match grid");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += g.mass[i] * f_in[i];
  if (!(std::abs(mean) < 1e-8))
    throw NumericalError("poisson: data is not mean-zero under the level set measure");
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = f_in[i] - mean;

  const auto k = edge_coefficients(g);
  // u_0 pinned to 0; Thomas sweep over nodes 1..n-1
  const std::size_t m = n - 1;
  std::vector<double> cp(m), dp(m);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t i = r + 1;
    const double lower = -k[i - 1];
    const double upper = (i + 1 < n) ? -k[i] : 0.0;
    const double diag = k[i - 1] + ((i + 1 < n) ? k[i] : 0.0);
    const double rhs = g.mass[i] * f[i];
    const double denom = r == 0 ? diag : diag - lower * cp[r - 1];
    if (!(std::abs(denom) > 0.0) || !std::isfinite(denom))
      throw NumericalError("poisson: singular tridiagonal system");
    cp[r] = upper / denom;
    dp[r] = r == 0 ? rhs / denom : (rhs - lower * dp[r - 1]) / denom;
  }
  PoissonSolution sol;
  sol.u.assign(n, 0.0);
  for (std::size_t r = m; r-- > 0;) sol.u[r + 1] = dp[r] - (r + 1 < m ? cp[r] * sol.u[r + 2] : 0.0);
  double umean = 0.0;
  for (std::size_t i = 0; i < n; ++i) umean += g.mass[i] * sol.u[i];
  for (double& v : sol.u) v -= umean;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double du = sol.u[i + 1] - sol.u[i];
    sol.energy += k[i] * du * du;
  }
  for (std::size_t i = 0; i < n; ++i) sol.f_norm2 += g.mass[i] * f[i] * f[i];
  sol.mean_removed = mean;
  sol.alpha = spectral_gap(g);
  sol.bound = sol.f_norm2 / sol.alpha;
  // tolerance for round-off in the equality case
  sol.bound_holds = sol.energy <= sol.bound * (1.0 + 1e-9) + 1e-300;
  return sol;
}

}  // namespace cforge
