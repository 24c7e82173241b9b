#include "coarse_forge/effective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coarse_forge/csv.hpp"
#include "coarse_forge/error.hpp"
#include "coarse_forge/parallel.hpp"

namespace cforge {

std::size_t ConditionalProfile::valid_bins() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

std::string to_string(Provenance p) {
  return p == Provenance::analytic ? "analytic" : "estimated";
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (bins < 1 || !(hi > lo)) throw ModelError("uniform_edges: need bins >= 1 and hi > lo");
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  return e;
}

namespace {

// Welford accumulator, merged with Chan's update.
struct BinAcc {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double s2 = 0.0;  // running sum of |T Sigma|^2

  void add(double v, double sig2) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
    s2 += sig2;
  }
  void merge(const BinAcc& o) {
    if (o.n == 0) return;
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double delta = o.mean - mean;
    const double nn = na + nb;
    mean += delta * nb / nn;
    m2 += o.m2 + delta * delta * na * nb / nn;
    n += o.n;
    s2 += o.s2;
  }
};

}  // namespace

ConditionalProfile estimate_conditional(const EquilibriumSample& sample, const SdeModel& model,
                                        const CoarseMap& map, const std::vector<double>& edges,
                                        std::size_t min_count) {
  if (edges.size() < 2) throw ModelError("estimate_conditional: z grid is empty");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      throw ModelError("estimate_conditional: bin edges must be strictly increasing");
  if (map.rank() != 1) throw DimensionError("estimate_conditional: needs a rank-1 map");
  const std::size_t d = model.dim(), m = model.noise_dim();
  if (sample.dim != d || map.dim() != d)
    throw DimensionError("estimate_conditional: sample, model and map dimensions differ");
  const std::size_t bins = edges.size() - 1;
  const std::size_t n = sample.size();
  if (n < 10 * bins)
    throw ModelError("estimate_conditional: need at least 10 samples per bin (" +
                     std::to_string(n) + " samples for " + std::to_string(bins) + " bins)");

  std::vector<double> t(d);
  for (std::size_t j = 0; j < d; ++j) t[j] = map.matrix()(0, static_cast<Eigen::Index>(j));

  // chunk partial sums, combined in chunk order for determinism
  constexpr std::size_t kParts = 64;
  const std::size_t parts = std::min(n, kParts);
  std::vector<std::vector<BinAcc>> partial(parts, std::vector<BinAcc>(bins));
  std::vector<std::size_t> outside(parts, 0);
  parallel_for(parts, [&](std::size_t pb, std::size_t pe) {
    double f[kMaxDim], s[kMaxDim * kMaxDim];
    for (std::size_t part = pb; part < pe; ++part) {
      const std::size_t b = n * part / parts, e = n * (part + 1) / parts;
      for (std::size_t i = b; i < e; ++i) {
        const ConstVec x = sample.point(i);
        const double z = map.apply_scalar(x);
        if (z < edges.front() || z > edges.back()) {
          ++outside[part];
          continue;
        }
        auto it = std::upper_bound(edges.begin(), edges.end(), z);
        std::size_t bin = static_cast<std::size_t>(it - edges.begin());
        bin = bin == 0 ? 0 : std::min(bin - 1, bins - 1);
        model.drift_and_diffusion(x, MutVec(f, d), MutVec(s, d * m));
        double tf = 0.0, sig2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) tf += t[j] * f[j];
        for (std::size_t k = 0; k < m; ++k) {
          double w = 0.0;
          for (std::size_t j = 0; j < d; ++j) w += t[j] * s[j * m + k];
          sig2 += w * w;
        }
        if (!std::isfinite(tf) || !std::isfinite(sig2))
          throw NumericalError("estimate_conditional: non-finite coefficient at sample " +
                               std::to_string(i));
        partial[part][bin].add(tf, sig2);
      }
    }
  });

  ConditionalProfile p;
  p.edges = edges;
  p.min_count = min_count;
  p.centers.resize(bins);
  p.b_hat.assign(bins, std::numeric_limits<double>::quiet_NaN());
  p.b_sd.assign(bins, std::numeric_limits<double>::quiet_NaN());
  p.sigma2_hat.assign(bins, std::numeric_limits<double>::quiet_NaN());
  p.counts.assign(bins, 0);
  p.valid.assign(bins, false);
  for (std::size_t part = 0; part < parts; ++part) p.outside += outside[part];
  for (std::size_t b = 0; b < bins; ++b) {
    BinAcc acc;
    for (std::size_t part = 0; part < parts; ++part) acc.merge(partial[part][b]);
    p.centers[b] = 0.5 * (edges[b] + edges[b + 1]);
    p.counts[b] = acc.n;
    if (acc.n > 0) {
      p.b_hat[b] = acc.mean;
      p.sigma2_hat[b] = std::max(0.0, acc.s2 / static_cast<double>(acc.n));
      p.b_sd[b] = acc.n > 1 ? std::sqrt(acc.m2 / static_cast<double>(acc.n - 1)) : 0.0;
    }
    p.valid[b] = acc.n >= min_count && acc.n > 0;
  }
  if (p.valid_bins() == 0) throw ModelError("estimate_conditional: every bin is invalid");
  return p;
}

namespace {

struct Interpolant {
  std::vector<double> z, v;

  double operator()(double q) const {
    if (q <= z.front()) return v.front();
    if (q >= z.back()) return v.back();
    auto it = std::upper_bound(z.begin(), z.end(), q);
    const std::size_t i = static_cast<std::size_t>(it - z.begin());
    const double w = (q - z[i - 1]) / (z[i] - z[i - 1]);
    return v[i - 1] + w * (v[i] - v[i - 1]);
  }

  double max_slope() const {
    double s = 0.0;
    for (std::size_t i = 1; i < z.size(); ++i)
      s = std::max(s, std::abs((v[i] - v[i - 1]) / (z[i] - z[i - 1])));
    return s;
  }
};

}  // namespace

EffectiveModel effective_from_profile(const ConditionalProfile& profile) {
  Interpolant b, sigma;
  for (std::size_t i = 0; i < profile.bins(); ++i) {
    if (!profile.valid[i]) continue;
    b.z.push_back(profile.centers[i]);
    b.v.push_back(profile.b_hat[i]);
    sigma.z.push_back(profile.centers[i]);
    sigma.v.push_back(std::sqrt(std::max(0.0, profile.sigma2_hat[i])));
  }
  if (b.z.size() < 2) throw ModelError("effective_from_profile: fewer than 2 valid bins");

  EffectiveModel e;
  e.rank = 1;
  e.lipschitz_drift = b.max_slope();
  e.lipschitz_diffusion = sigma.max_slope();
  e.range_lo = b.z.front();
  e.range_hi = b.z.back();
  e.drift = [b](double z) { return b(z); };
  e.diffusion = [sigma](double z) { return sigma(z); };
  e.provenance = Provenance::estimated;
  e.profile = profile;
  return e;
}

EffectiveModel analytic_effective(const SdeModel& model, const CoarseMap& map) {
  const auto& an = model.metadata().analytic;
  if (!an) throw ModelError("model '" + model.name() + "' has no closed-form effective coefficients");
  if (!map.is_first_coordinate() || map.dim() != model.dim())
    throw ModelError("closed-form effective coefficients are for xi(x) = x^1 only");
  EffectiveModel e;
  e.rank = 1;
  e.drift = an->drift;
  e.diffusion = an->diffusion;
  e.lipschitz_drift = an->lipschitz_drift;
  e.lipschitz_diffusion = an->lipschitz_diffusion;
  e.provenance = Provenance::analytic;
  return e;
}

void write_profile_csv(const ConditionalProfile& profile, const std::string& path) {
  CsvWriter w(path, {"z", "b_hat", "sigma2_hat", "count"});
  for (std::size_t i = 0; i < profile.bins(); ++i)
    w.row({CsvWriter::num(profile.centers[i]), CsvWriter::num(profile.b_hat[i]),
           CsvWriter::num(profile.sigma2_hat[i]), CsvWriter::num(profile.counts[i])});
  w.close();
}

}  // namespace cforge
