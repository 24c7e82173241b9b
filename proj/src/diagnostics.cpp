#include "coarse_forge/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "coarse_forge/csv.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/parallel.hpp"

namespace cforge {

namespace {

struct MeanAcc {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  void merge(const MeanAcc& o) {
    if (o.n == 0) return;
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double delta = o.mean - mean;
    mean += delta * nb / (na + nb);
    m2 += o.m2 + delta * delta * na * nb / (na + nb);
    n += o.n;
  }
  MonteCarloValue value() const {
    MonteCarloValue v;
    v.value = mean;
    if (n > 1) v.std_error = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
    return v;
  }
};

// Runs body(i, accs) over the sample in fixed chunks and merges in order.
template <class Body>
std::vector<MeanAcc> reduce_sample(std::size_t n, std::size_t n_acc, Body body) {
  constexpr std::size_t kParts = 64;
  const std::size_t parts = std::min(n, kParts);
  std::vector<std::vector<MeanAcc>> partial(parts, std::vector<MeanAcc>(n_acc));
  parallel_for(parts, [&](std::size_t pb, std::size_t pe) {
    for (std::size_t part = pb; part < pe; ++part) {
      const std::size_t b = n * part / parts, e = n * (part + 1) / parts;
      for (std::size_t i = b; i < e; ++i) body(i, partial[part]);
    }
  });
  std::vector<MeanAcc> total(n_acc);
  for (const auto& p : partial)
    for (std::size_t a = 0; a < n_acc; ++a) total[a].merge(p[a]);
  return total;
}

// |v|_A^2 with v = Pi grad
double projected_norm2(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& a,
                       const Eigen::VectorXd& grad) {
  const Eigen::VectorXd v = pi * grad;
  return v.dot(a * v);
}

// Symmetric square root of T A T^T, written row-major into out (k x k).
void projected_sigma(const SdeModel& model, const CoarseMap& map, ConstVec x, double* out) {
  const std::size_t d = model.dim(), k = map.rank();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  model.diffusion_matrix(x, MutVec(a.data(), d * d));
  const Eigen::MatrixXd g = map.matrix() * a * map.matrix().transpose();
  if (k == 1) {
    out[0] = std::sqrt(g(0, 0));
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  const Eigen::MatrixXd s = es.operatorSqrt();
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c)
      out[r * k + c] = s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

}  // namespace

KappaLambda estimate_kappa_lambda(const SdeModel& model, const CoarseMap& map,
                                  const EquilibriumSample& sample) {
  const std::size_t d = model.dim(), k = map.rank();
  if (sample.dim != d || map.dim() != d)
    throw DimensionError("estimate_kappa_lambda: dimension mismatch");
  if (sample.size() == 0) throw ModelError("estimate_kappa_lambda: empty sample");
  const auto di = static_cast<Eigen::Index>(d);
  const Eigen::MatrixXd& t = map.matrix();

  auto accs = reduce_sample(sample.size(), 2, [&](std::size_t i, std::vector<MeanAcc>& acc) {
    const ConstVec x = sample.point(i);
    Eigen::MatrixXd a(di, di);
    model.diffusion_matrix(x, MutVec(a.data(), d * d));
    const Eigen::MatrixXd pi = level_set_projector(a, map);

    // J is row-major J(i, j) = d_j F^i; Eigen map as row-major
    double jac[kMaxDim * kMaxDim];
    model.drift_jacobian(x, MutVec(jac, d * d));
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> j(
        jac, di, di);
    double kappa = 0.0;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      const Eigen::VectorXd grad = (t.row(r) * j).transpose();
      kappa += projected_norm2(pi, a, grad);
    }

    // gradient of the entries of (T A T^T)^{1/2} by central differences
    double xp[kMaxDim], sp[kMaxDim * kMaxDim], sm[kMaxDim * kMaxDim];
    for (std::size_t q = 0; q < d; ++q) xp[q] = x[q];
    std::vector<Eigen::VectorXd> grads(k * k, Eigen::VectorXd(di));
    const double h = model.fd_step(x);
    for (std::size_t q = 0; q < d; ++q) {
      const double x0 = x[q], hi = x0 + h, lo = x0 - h;
      xp[q] = hi;
      projected_sigma(model, map, ConstVec(xp, d), sp);
      xp[q] = lo;
      projected_sigma(model, map, ConstVec(xp, d), sm);
      xp[q] = x0;
      for (std::size_t e = 0; e < k * k; ++e)
        grads[e](static_cast<Eigen::Index>(q)) = (sp[e] - sm[e]) / (hi - lo);
    }
    double lambda = 0.0;
    for (const auto& g : grads) lambda += projected_norm2(pi, a, g);

    if (!std::isfinite(kappa) || !std::isfinite(lambda))
      throw NumericalError("estimate_kappa_lambda: non-finite gradient at sample " +
                           std::to_string(i));
    acc[0].add(kappa);
    acc[1].add(lambda);
  });
  KappaLambda kl;
  kl.kappa2 = accs[0].value();
  kl.lambda2 = accs[1].value();
  kl.n = sample.size();
  return kl;
}

CoefficientGap coefficient_gap(const SdeModel& model, const EffectiveModel& eff,
                               const CoarseMap& map, const EquilibriumSample& sample) {
  const std::size_t d = model.dim(), m = model.noise_dim();
  if (map.rank() != 1 || eff.rank != 1) throw DimensionError("coefficient_gap: rank-1 only");
  if (sample.dim != d || map.dim() != d) throw DimensionError("coefficient_gap: dimension mismatch");
  if (sample.size() == 0) throw ModelError("coefficient_gap: empty sample");
  std::vector<double> t(d);
  for (std::size_t j = 0; j < d; ++j) t[j] = map.matrix()(0, static_cast<Eigen::Index>(j));

  constexpr std::size_t kClampSlot = 2;
  auto accs = reduce_sample(sample.size(), 3, [&](std::size_t i, std::vector<MeanAcc>& acc) {
    const ConstVec x = sample.point(i);
    double f[kMaxDim], s[kMaxDim * kMaxDim];
    model.drift_and_diffusion(x, MutVec(f, d), MutVec(s, d * m));
    double tf = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) tf += t[j] * f[j];
    for (std::size_t c = 0; c < m; ++c) {
      double w = 0.0;
      for (std::size_t j = 0; j < d; ++j) w += t[j] * s[j * m + c];
      s2 += w * w;
    }
    double z = map.apply_scalar(x);
    const bool out = !eff.in_range(z);
    if (out) z = std::clamp(z, eff.range_lo, eff.range_hi);
    const double gb = tf - eff.drift(z);
    const double gs = std::sqrt(s2) - eff.diffusion(z);
    acc[0].add(gb * gb);
    acc[1].add(gs * gs);
    acc[kClampSlot].add(out ? 1.0 : 0.0);
  });
  CoefficientGap g;
  g.drift = accs[0].value();
  g.diffusion = accs[1].value();
  g.clamped = static_cast<std::size_t>(std::llround(accs[kClampSlot].mean *
                                                    static_cast<double>(sample.size())));
  return g;
}

std::string to_string(TableRow r) {
  switch (r) {
    case TableRow::reversible_identity: return "F=-grad V, Sigma=Id";
    case TableRow::general_identity: return "general F, Sigma=Id";
    case TableRow::slow_diffusion: return "general F, |Sigma^1|=|Sigma^1|(x^1)";
    case TableRow::general: return "general F and Sigma";
  }
  return "unknown";
}

double BoundTable::weak() const { return identity_case() ? weak_a : weak_c; }
double BoundTable::strong() const { return identity_case() ? strong_a : strong_c; }

BoundTable evaluate_bounds(const BoundInputs& in) {
  const double vals[] = {in.kappa2, in.lambda2, in.alpha, in.lipschitz_drift,
                         in.lipschitz_diffusion, in.horizon};
  for (double v : vals)
    if (!std::isfinite(v)) throw ModelError("evaluate_bounds: non-finite input");
  if (!(in.alpha > 0.0)) throw ModelError("evaluate_bounds: alpha must be positive");
  if (in.horizon < 0.0 || in.kappa2 < 0.0 || in.lambda2 < 0.0)
    throw ModelError("evaluate_bounds: negative input");

  const double t = in.horizon, a = in.alpha, lb = in.lipschitz_drift;
  BoundTable b;
  const double rate = 2.0 * lb + 1.0;
  b.weak_a = std::expm1(rate * t) / rate * in.kappa2 / a;
  b.strong_a = 27.0 * in.kappa2 / (a * a) * t * std::exp(lb * lb * t * t);
  b.c = std::max(4.0 * lb, 32.0 * in.lipschitz_diffusion * in.lipschitz_diffusion);
  const double g = std::exp(b.c * t);
  b.weak_c = g * (4.0 * t * t * in.kappa2 / a + 64.0 * t * in.lambda2 / a);
  b.strong_c = g * (54.0 * t * in.kappa2 / (a * a) + 64.0 * t * in.lambda2 / a);

  if (in.identity_diffusion)
    b.row = in.reversible ? TableRow::reversible_identity : TableRow::general_identity;
  else if (in.lambda2 == 0.0)
    b.row = TableRow::slow_diffusion;
  else
    b.row = TableRow::general;
  return b;
}

void write_report_csv(const DiagnosticsReport& r, const std::string& path) {
  CsvWriter w(path, {"quantity", "value", "std_error"});
  auto row = [&](const std::string& q, double v, double se) {
    w.row({q, CsvWriter::num(v), CsvWriter::num(se)});
  };
  row("kappa2", r.kl.kappa2.value, r.kl.kappa2.std_error);
  row("lambda2", r.kl.lambda2.value, r.kl.lambda2.std_error);
  row("alpha_pi", r.poincare.alpha, 0.0);
  row("alpha_pi_wide", r.poincare.alpha_wide, 0.0);
  row("gap_drift", r.gap.drift.value, r.gap.drift.std_error);
  row("gap_diff", r.gap.diffusion.value, r.gap.diffusion.std_error);
  row("lipschitz_drift", r.inputs.lipschitz_drift, 0.0);
  row("lipschitz_diffusion", r.inputs.lipschitz_diffusion, 0.0);
  row("horizon", r.inputs.horizon, 0.0);
  row("weak_A", r.bounds.weak_a, 0.0);
  row("strong_A", r.bounds.strong_a, 0.0);
  row("weak_C", r.bounds.weak_c, 0.0);
  row("strong_C", r.bounds.strong_c, 0.0);
  row("C", r.bounds.c, 0.0);
  w.row({"table_row", to_string(r.bounds.row), ""});
  w.close();
}

std::string report_text(const DiagnosticsReport& r) {
  std::ostringstream os;
  char line[160];
  auto put = [&](const char* name, double v, double se) {
    std::snprintf(line, sizeof line, "  %-22s %14.6g  (se %.3g)\n", name, v, se);
    os << line;
  };
  os << "constants\n";
  put("kappa^2", r.kl.kappa2.value, r.kl.kappa2.std_error);
  put("lambda^2", r.kl.lambda2.value, r.kl.lambda2.std_error);
  put("alpha_PI", r.poincare.alpha, 0.0);
  put("gap_drift", r.gap.drift.value, r.gap.drift.std_error);
  put("gap_diff", r.gap.diffusion.value, r.gap.diffusion.std_error);
  if (r.poincare.r_sensitive) os << "  warning: alpha_PI changes by more than 1% when R grows\n";
  os << "bounds (T = " << r.inputs.horizon << ")\n";
  put("weak-A", r.bounds.weak_a, 0.0);
  put("strong-A", r.bounds.strong_a, 0.0);
  put("weak-C", r.bounds.weak_c, 0.0);
  put("strong-C", r.bounds.strong_c, 0.0);
  os << "  table row: " << to_string(r.bounds.row) << "\n";
  return os.str();
}

}  // namespace cforge
