#include "coarse_forge/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coarse_forge/error.hpp"

namespace cforge {

namespace {

double norm(ConstVec x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void check_finite(ConstVec v, const char* what) {
  for (double e : v)
    if (!std::isfinite(e)) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

double SdeModel::fd_step(ConstVec x) const { return fd_scale_ * (1.0 + norm(x)); }

double SdeModel::potential(ConstVec x) const {
  double xw[kMaxDim];
  wrapped(x, MutVec(xw, dim()));
  return potential_.eval(ConstVec(xw, dim()));
}

void SdeModel::potential_gradient_wrapped(ConstVec xw, MutVec out) const {
  const std::size_t d = dim();
  if (potential_.has_gradient()) {
    potential_.gradient(xw, out);
    return;
  }
  const double h = fd_step(xw);
  double xp[kMaxDim];
  for (std::size_t i = 0; i < d; ++i) xp[i] = xw[i];
  for (std::size_t k = 0; k < d; ++k) {
    const double x0 = xw[k];
    const double hi = x0 + h, lo = x0 - h;
    xp[k] = hi;
    const double vp = potential_.eval(ConstVec(xp, d));
    xp[k] = lo;
    const double vm = potential_.eval(ConstVec(xp, d));
    xp[k] = x0;
    out[k] = (vp - vm) / (hi - lo);
  }
}

void SdeModel::potential_gradient(ConstVec x, MutVec out) const {
  double xw[kMaxDim];
  wrapped(x, MutVec(xw, dim()));
  potential_gradient_wrapped(ConstVec(xw, dim()), out);
}

void SdeModel::perturbation(ConstVec x, MutVec out) const {
  double xw[kMaxDim];
  wrapped(x, MutVec(xw, dim()));
  perturbation_.eval(ConstVec(xw, dim()), out);
}

void SdeModel::diffusion(ConstVec x, MutVec out) const {
  double xw[kMaxDim];
  wrapped(x, MutVec(xw, dim()));
  diffusion_.eval(ConstVec(xw, dim()), out);
}

void SdeModel::diffusion_matrix(ConstVec x, MutVec out) const {
  const std::size_t d = dim(), m = noise_dim();
  double s[kMaxDim * kMaxDim];
  diffusion(x, MutVec(s, d * m));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += s[i * m + k] * s[j * m + k];
      out[i * d + j] = acc;
    }
}

// (div A)_i = sum_j sum_m (d_j S_im S_jm + S_im d_j S_jm)
void SdeModel::divergence_wrapped(ConstVec xw, ConstVec sigma, MutVec out) const {
  const std::size_t d = dim(), m = noise_dim();
  double ds[kMaxDim * kMaxDim];
  for (std::size_t i = 0; i < d; ++i) out[i] = 0.0;

  double xp[kMaxDim], xw2[kMaxDim];
  double sp[kMaxDim * kMaxDim], sm[kMaxDim * kMaxDim];
  const double h = fd_step(xw);
  for (std::size_t i = 0; i < d; ++i) xp[i] = xw[i];

  for (std::size_t j = 0; j < d; ++j) {
    if (diffusion_.has_partial()) {
      diffusion_.partial(xw, j, MutVec(ds, d * m));
    } else {
      const double x0 = xw[j];
      const double hi = x0 + h, lo = x0 - h;
      xp[j] = hi;
      domain_.wrap(ConstVec(xp, d), MutVec(xw2, d));
      diffusion_.eval(ConstVec(xw2, d), MutVec(sp, d * m));
      xp[j] = lo;
      domain_.wrap(ConstVec(xp, d), MutVec(xw2, d));
      diffusion_.eval(ConstVec(xw2, d), MutVec(sm, d * m));
      xp[j] = x0;
      for (std::size_t q = 0; q < d * m; ++q) ds[q] = (sp[q] - sm[q]) / (hi - lo);
    }
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        acc += ds[i * m + k] * sigma[j * m + k] + sigma[i * m + k] * ds[j * m + k];
      out[i] += acc;
    }
  }
}

void SdeModel::diffusion_divergence(ConstVec x, MutVec out) const {
  const std::size_t d = dim(), m = noise_dim();
  double xw[kMaxDim], s[kMaxDim * kMaxDim];
  wrapped(x, MutVec(xw, d));
  diffusion_.eval(ConstVec(xw, d), MutVec(s, d * m));
  divergence_wrapped(ConstVec(xw, d), ConstVec(s, d * m), out);
}

void SdeModel::drift_wrapped(ConstVec xw, MutVec drift_out, MutVec sigma_out) const {
  const std::size_t d = dim(), m = noise_dim();
  diffusion_.eval(xw, sigma_out);
  double g[kMaxDim], div[kMaxDim], c[kMaxDim];
  potential_gradient_wrapped(xw, MutVec(g, d));
  divergence_wrapped(xw, ConstVec(sigma_out.data(), d * m), MutVec(div, d));
  perturbation_.eval(xw, MutVec(c, d));
  for (std::size_t i = 0; i < d; ++i) {
    double ag = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double aij = 0.0;
      for (std::size_t k = 0; k < m; ++k) aij += sigma_out[i * m + k] * sigma_out[j * m + k];
      ag += aij * g[j];
    }
    drift_out[i] = -ag + div[i] + c[i];
  }
}

void SdeModel::drift_and_diffusion(ConstVec x, MutVec drift_out, MutVec sigma_out) const {
  double xw[kMaxDim];
  wrapped(x, MutVec(xw, dim()));
  drift_wrapped(ConstVec(xw, dim()), drift_out, sigma_out);
}

void SdeModel::drift(ConstVec x, MutVec out) const {
  double s[kMaxDim * kMaxDim];
  drift_and_diffusion(x, out, MutVec(s, dim() * noise_dim()));
}

void SdeModel::drift_jacobian(ConstVec x, MutVec out) const {
  const std::size_t d = dim();
  const double h = fd_step(x);
  double xp[kMaxDim], fp[kMaxDim], fm[kMaxDim];
  for (std::size_t i = 0; i < d; ++i) xp[i] = x[i];
  for (std::size_t j = 0; j < d; ++j) {
    const double x0 = x[j];
    const double hi = x0 + h, lo = x0 - h;
    xp[j] = hi;
    drift(ConstVec(xp, d), MutVec(fp, d));
    xp[j] = lo;
    drift(ConstVec(xp, d), MutVec(fm, d));
    xp[j] = x0;
    for (std::size_t i = 0; i < d; ++i) out[i * d + j] = (fp[i] - fm[i]) / (hi - lo);
  }
}

SdeModel build_model(ScalarField potential, MatrixField diffusion, VectorField perturbation,
                     DomainSpec domain, ModelMetadata meta, BuildOptions options) {
  domain.validate();
  const std::size_t d = domain.dim;
  if (!potential.eval) throw ModelError("potential has no eval");
  if (!diffusion.eval) throw ModelError("diffusion has no eval");
  if (!perturbation.eval) throw ModelError("perturbation has no eval");
  if (diffusion.rows != d)
    throw DimensionError("diffusion has " + std::to_string(diffusion.rows) +
                         " rows, domain dimension is " + std::to_string(d));
  if (diffusion.cols == 0 || diffusion.cols > kMaxDim)
    throw DimensionError("noise dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  if (!(options.fd_scale > 0.0)) throw ModelError("fd_scale must be positive");
  if (meta.gaussian) {
    if (meta.gaussian->mean.size() != d || meta.gaussian->covariance.size() != d * d)
      throw DimensionError("gaussian measure does not match domain dimension");
  }

  SdeModel model;
  model.domain_ = domain;
  model.potential_ = std::move(potential);
  model.diffusion_ = std::move(diffusion);
  model.perturbation_ = std::move(perturbation);
  model.meta_ = std::move(meta);
  model.fd_scale_ = options.fd_scale;

  if (options.probe_points.empty()) {
    options.probe_points.emplace_back(d, 0.0);
    options.probe_points.emplace_back(d, 0.5);
    std::vector<double> p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = (i % 2 == 0) ? -0.7 : 1.3;
    options.probe_points.push_back(p);
  }
  Eigen::MatrixXd a(d, d);
  for (const auto& p : options.probe_points) {
    if (p.size() != d) throw DimensionError("probe point has wrong dimension");
    model.diffusion_matrix(p, MutVec(a.data(), d * d));
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success || !a.allFinite())
      throw ModelError("diffusion matrix A is not SPD at a probe point");
    double f[kMaxDim];
    model.drift(p, MutVec(f, d));
    check_finite(ConstVec(f, d), "drift at a probe point");
  }
  return model;
}

// ---------------------------------------------------------------------------

CoarseMap::CoarseMap(Eigen::MatrixXd t, Eigen::VectorXd tau) : t_(std::move(t)), tau_(std::move(tau)) {}

CoarseMap CoarseMap::coordinate(std::size_t dim, std::size_t index) {
  if (index >= dim)
    throw DimensionError("coordinate index " + std::to_string(index) + " out of range");
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(dim));
  t(0, static_cast<Eigen::Index>(index)) = 1.0;
  return affine(t, Eigen::VectorXd::Zero(1));
}

CoarseMap CoarseMap::affine(Eigen::MatrixXd t, Eigen::VectorXd tau) {
  const auto k = t.rows(), d = t.cols();
  if (k < 1 || d < 1) throw DimensionError("coarse map matrix is empty");
  if (k >= d) throw DimensionError("coarse map must have k < d");
  if (tau.size() != k) throw DimensionError("coarse map offset has wrong length");
  if (!t.allFinite() || !tau.allFinite()) throw ModelError("coarse map is not finite");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(t);
  if (lu.rank() != k) throw ModelError("coarse map matrix is rank deficient");
  return CoarseMap(std::move(t), std::move(tau));
}

bool CoarseMap::is_first_coordinate() const {
  if (rank() != 1 || tau_(0) != 0.0 || t_(0, 0) != 1.0) return false;
  for (Eigen::Index j = 1; j < t_.cols(); ++j)
    if (t_(0, j) != 0.0) return false;
  return true;
}

void CoarseMap::apply(ConstVec x, MutVec out) const {
  if (x.size() != dim()) throw DimensionError("point dimension does not match coarse map");
  for (Eigen::Index i = 0; i < t_.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < t_.cols(); ++j) acc += t_(i, j) * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = acc + tau_(i);
  }
}

double CoarseMap::apply_scalar(ConstVec x) const {
  if (rank() != 1) throw DimensionError("apply_scalar needs a rank-1 coarse map");
  double z;
  apply(x, MutVec(&z, 1));
  return z;
}

Eigen::MatrixXd level_set_projector(const Eigen::MatrixXd& a, const CoarseMap& map) {
  const Eigen::MatrixXd& t = map.matrix();
  if (a.rows() != t.cols() || a.cols() != t.cols())
    throw DimensionError("diffusion matrix does not match coarse map");
  const Eigen::MatrixXd gram = t * a * t.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("T A T^T is not SPD");
  const auto d = a.rows();
  return Eigen::MatrixXd::Identity(d, d) - t.transpose() * llt.solve(t * a);
}

GeometryAt geometry_at(const SdeModel& model, ConstVec x) {
  const std::size_t d = model.dim();
  if (x.size() != d) throw DimensionError("point dimension does not match model");
  if (d < 2) throw DimensionError("geometry needs d >= 2");
  GeometryAt g;
  g.a.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  model.diffusion_matrix(x, MutVec(g.a.data(), d * d));  // symmetric, layout irrelevant
  const double a11 = g.a(0, 0);
  if (!(a11 > 0.0)) throw NumericalError("A^11 is not positive");
  const auto n = static_cast<Eigen::Index>(d - 1);
  const Eigen::VectorXd a12 = g.a.block(0, 1, 1, n).transpose();
  g.b = g.a.block(1, 1, n, n) - a12 * a12.transpose() / a11;
  g.pi = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  g.pi.row(0) -= g.a.row(0) / a11;
  return g;
}

// ---------------------------------------------------------------------------

namespace {

struct GridIndexer {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> stride;
  std::size_t total = 1;

  explicit GridIndexer(const std::vector<std::size_t>& n) : nodes(n), stride(n.size()) {
    for (std::size_t i = n.size(); i-- > 0;) {
      stride[i] = total;
      total *= n[i];
    }
  }
};

// Fourth-order first derivative along `axis` at flat index `p`.
double d1(const std::vector<double>& f, std::size_t p, std::size_t s, double h) {
  return (-f[p + 2 * s] + 8.0 * f[p + s] - 8.0 * f[p - s] + f[p - 2 * s]) / (12.0 * h);
}

double d2(const std::vector<double>& f, std::size_t p, std::size_t s, double h) {
  return (-f[p + 2 * s] + 16.0 * f[p + s] - 30.0 * f[p] + 16.0 * f[p - s] - f[p - 2 * s]) /
         (12.0 * h * h);
}

double dmixed(const std::vector<double>& f, std::size_t p, std::size_t si, double hi,
              std::size_t sj, double hj) {
  const double c[5] = {1.0, -8.0, 0.0, 8.0, -1.0};  // offsets -2..2
  double acc = 0.0;
  for (int a = 0; a < 5; ++a) {
    if (c[a] == 0.0) continue;
    const std::size_t pa = p + si * static_cast<std::size_t>(a) - 2 * si;
    acc += c[a] * d1(f, pa, sj, hj);
  }
  return acc / (12.0 * hi);
}

}  // namespace

double verify_stationarity(const SdeModel& model, const GridSpec& grid) {
  const std::size_t d = model.dim();
  if (grid.lower.size() != d || grid.upper.size() != d || grid.nodes.size() != d)
    throw DimensionError("grid dimension does not match model");
  for (std::size_t i = 0; i < d; ++i) {
    if (grid.nodes[i] < 8) throw NumericalError("grid too coarse: fewer than 8 nodes per axis");
    if (!(grid.upper[i] > grid.lower[i])) throw NumericalError("grid interval is empty");
  }
  const GridIndexer idx(grid.nodes);
  std::vector<double> h(d);
  for (std::size_t i = 0; i < d; ++i)
    h[i] = (grid.upper[i] - grid.lower[i]) / static_cast<double>(grid.nodes[i] - 1);

  std::vector<double> pot(idx.total);
  std::vector<std::vector<double>> flux(d, std::vector<double>(idx.total));
  std::vector<std::vector<double>> amu(d * d, std::vector<double>(idx.total));
  std::vector<std::vector<double>> f_all(d, std::vector<double>(idx.total));
  std::vector<std::vector<double>> a_all(d * d, std::vector<double>(idx.total));
  std::vector<double> x(d), f(d), a(d * d);

  auto point = [&](std::size_t p) {
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t k = (p / idx.stride[i]) % idx.nodes[i];
      x[i] = grid.lower[i] + h[i] * static_cast<double>(k);
    }
  };

  double vmin = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < idx.total; ++p) {
    point(p);
    pot[p] = model.potential(x);
    vmin = std::min(vmin, pot[p]);
    model.drift(x, f);
    model.diffusion_matrix(x, a);
    for (std::size_t i = 0; i < d; ++i) f_all[i][p] = f[i];
    for (std::size_t q = 0; q < d * d; ++q) a_all[q][p] = a[q];
  }
  if (!std::isfinite(vmin)) throw NumericalError("potential is not finite on the grid");
  // mu scaled so that its max over the grid is 1
  for (std::size_t p = 0; p < idx.total; ++p) {
    const double mu = std::exp(-(pot[p] - vmin));
    for (std::size_t i = 0; i < d; ++i) flux[i][p] = -mu * f_all[i][p];
    for (std::size_t q = 0; q < d * d; ++q) amu[q][p] = a_all[q][p] * mu;
  }

  double worst = 0.0;
  for (std::size_t p = 0; p < idx.total; ++p) {
    bool interior = true;
    for (std::size_t i = 0; i < d && interior; ++i) {
      const std::size_t k = (p / idx.stride[i]) % idx.nodes[i];
      interior = k >= 2 && k + 2 < idx.nodes[i];
    }
    if (!interior) continue;
    double r = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      r += d1(flux[i], p, idx.stride[i], h[i]);
      for (std::size_t j = 0; j < d; ++j) {
        const auto& g = amu[i * d + j];
        r += (i == j) ? d2(g, p, idx.stride[i], h[i])
                      : dmixed(g, p, idx.stride[i], h[i], idx.stride[j], h[j]);
      }
    }
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kNames = {"torus-symplectic", "nr-gauss", "two-scale", "var-diff"};

double param(const ModelParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void check_keys(const std::string& name, const ModelParams& p) {
  const auto allowed = registry_parameters(name);
  for (const auto& [k, v] : p) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ModelError("model '" + name + "' has no parameter '" + k + "'");
    if (!std::isfinite(v)) throw ModelError("parameter '" + k + "' is not finite");
  }
}

ScalarField quadratic_potential(double a) {
  ScalarField v;
  v.eval = [a](ConstVec x) { return 0.5 * (x[0] * x[0] + a * x[1] * x[1]); };
  v.gradient = [a](ConstVec x, MutVec g) {
    g[0] = x[0];
    g[1] = a * x[1];
  };
  return v;
}

// c = gamma * J grad V with J the symplectic rotation, divergence-free w.r.t. mu
VectorField rotation_perturbation(double a, double gamma) {
  VectorField c;
  c.eval = [a, gamma](ConstVec x, MutVec out) {
    out[0] = gamma * (a * x[1]);
    out[1] = gamma * (-x[0]);
  };
  c.jacobian = [a, gamma](ConstVec, MutVec j) {
    j[0] = 0.0;
    j[1] = gamma * a;
    j[2] = -gamma;
    j[3] = 0.0;
  };
  return c;
}

GaussianMeasure product_gaussian(double a) { return {{0.0, 0.0}, {1.0, 0.0, 0.0, 1.0 / a}}; }

AnalyticCoefficients linear_effective(double slope, double sigma) {
  AnalyticCoefficients e;
  e.drift = [slope](double z) { return -slope * z; };
  e.diffusion = [sigma](double) { return sigma; };
  e.lipschitz_drift = slope;
  e.lipschitz_diffusion = 0.0;
  return e;
}

}  // namespace

std::vector<std::string> registry_names() { return kNames; }

std::vector<std::string> registry_parameters(const std::string& name) {
  if (name == "torus-symplectic") return {"u1", "u2"};
  if (name == "nr-gauss") return {"a", "gamma"};
  if (name == "two-scale") return {"a", "gamma", "eps"};
  if (name == "var-diff") return {"a", "gamma", "delta"};
  throw ModelError("unknown model '" + name + "'");
}

SdeModel registry(const std::string& name, const ModelParams& params) {
  check_keys(name, params);
  const double a = param(params, "a", 4.0);
  const double gamma = param(params, "gamma", 0.5);
  if (name != "torus-symplectic" && !(a > 0.0)) throw ModelError("parameter a must be positive");

  if (name == "torus-symplectic") {
    const double u1 = param(params, "u1", 1.0);
    const double u2 = param(params, "u2", 0.7);
    VectorField c;
    c.eval = [u1, u2](ConstVec, MutVec out) {
      out[0] = u2;
      out[1] = -u1;
    };
    c.jacobian = [](ConstVec, MutVec j) {
      for (int i = 0; i < 4; ++i) j[i] = 0.0;
    };
    ModelMetadata meta;
    meta.name = name;
    AnalyticCoefficients e;
    e.drift = [u2](double) { return u2; };
    e.diffusion = [](double) { return 1.0; };
    meta.analytic = e;
    meta.reversible = (u1 == 0.0 && u2 == 0.0);
    meta.identity_diffusion = true;
    meta.uniform = true;
    return build_model(zero_scalar_field(2), identity_matrix_field(2), c, DomainSpec::torus(2),
                       meta);
  }

  if (name == "nr-gauss") {
    ModelMetadata meta;
    meta.name = name;
    meta.gaussian = product_gaussian(a);
    meta.analytic = linear_effective(1.0, 1.0);
    meta.reversible = (gamma == 0.0);
    meta.identity_diffusion = true;
    return build_model(quadratic_potential(a), identity_matrix_field(2),
                       rotation_perturbation(a, gamma), DomainSpec::euclidean(2), meta);
  }

  if (name == "two-scale") {
    const double eps = param(params, "eps", 0.1);
    if (!(eps > 0.0)) throw ModelError("parameter eps must be positive");
    const double s2 = 1.0 / std::sqrt(eps);
    auto sigma = diagonal_matrix_field(
        2,
        [s2](ConstVec, MutVec dg) {
          dg[0] = 1.0;
          dg[1] = s2;
        },
        [](ConstVec, std::size_t, MutVec dg) {
          dg[0] = 0.0;
          dg[1] = 0.0;
        });
    ModelMetadata meta;
    meta.name = name;
    meta.gaussian = product_gaussian(a);
    meta.analytic = linear_effective(1.0, 1.0);
    meta.reversible = (gamma == 0.0);
    meta.identity_diffusion = (eps == 1.0);
    return build_model(quadratic_potential(a), sigma, rotation_perturbation(a, gamma),
                       DomainSpec::euclidean(2), meta);
  }

  if (name == "var-diff") {
    const double delta = param(params, "delta", 0.5);
    if (!(delta >= 0.0)) throw ModelError("parameter delta must be nonnegative");
    auto sigma = diagonal_matrix_field(
        2,
        [delta](ConstVec x, MutVec dg) {
          const double sn = std::sin(x[1]);
          dg[0] = std::sqrt(1.0 + delta * sn * sn);
          dg[1] = 1.0;
        },
        [delta](ConstVec x, std::size_t k, MutVec dg) {
          dg[0] = 0.0;
          dg[1] = 0.0;
          if (k == 1) {
            const double sn = std::sin(x[1]), cs = std::cos(x[1]);
            dg[0] = delta * sn * cs / std::sqrt(1.0 + delta * sn * sn);
          }
        });
    // x2 ~ N(0, 1/a): E sin^2(x2) = (1 - exp(-2/a)) / 2
    const double m = 0.5 * (1.0 - std::exp(-2.0 / a));
    const double s2 = 1.0 + delta * m;
    ModelMetadata meta;
    meta.name = name;
    meta.gaussian = product_gaussian(a);
    meta.analytic = linear_effective(s2, std::sqrt(s2));
    meta.reversible = (gamma == 0.0);
    meta.identity_diffusion = (delta == 0.0);
    return build_model(quadratic_potential(a), sigma, rotation_perturbation(a, gamma),
                       DomainSpec::euclidean(2), meta);
  }

  throw ModelError("unknown model '" + name + "'");
}

}  // namespace cforge
