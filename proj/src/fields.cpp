#include "coarse_forge/fields.hpp"

#include <cmath>
#include <string>

#include "coarse_forge/error.hpp"

namespace cforge {

void DomainSpec::validate() const {
  if (dim == 0) throw DimensionError("domain dimension must be positive");
  if (dim > kMaxDim)
    throw DimensionError("domain dimension " + std::to_string(dim) + " exceeds limit " +
                         std::to_string(kMaxDim));
  if (is_torus() && !(period > 0.0)) throw ModelError("torus period must be positive");
}

void DomainSpec::wrap(ConstVec x, MutVec out) const {
  if (!is_torus()) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    double w = x[i] - period * std::floor(x[i] / period);
    // floor can round the result up to exactly `period`
    if (w >= period) w -= period;
    out[i] = w;
  }
}

ScalarField zero_scalar_field(std::size_t dim) {
  ScalarField f;
  f.eval = [](ConstVec) { return 0.0; };
  f.gradient = [dim](ConstVec, MutVec g) {
    for (std::size_t i = 0; i < dim; ++i) g[i] = 0.0;
  };
  return f;
}

VectorField zero_vector_field(std::size_t dim) {
  VectorField f;
  f.eval = [dim](ConstVec, MutVec v) {
    for (std::size_t i = 0; i < dim; ++i) v[i] = 0.0;
  };
  f.jacobian = [dim](ConstVec, MutVec j) {
    for (std::size_t i = 0; i < dim * dim; ++i) j[i] = 0.0;
  };
  return f;
}

MatrixField identity_matrix_field(std::size_t dim) {
  MatrixField m;
  m.rows = dim;
  m.cols = dim;
  m.eval = [dim](ConstVec, MutVec s) {
    for (std::size_t i = 0; i < dim * dim; ++i) s[i] = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s[i * dim + i] = 1.0;
  };
  m.partial = [dim](ConstVec, std::size_t, MutVec ds) {
    for (std::size_t i = 0; i < dim * dim; ++i) ds[i] = 0.0;
  };
  return m;
}

MatrixField diagonal_matrix_field(std::size_t dim, std::function<void(ConstVec, MutVec)> diag,
                                  std::function<void(ConstVec, std::size_t, MutVec)> diag_partial) {
  MatrixField m;
  m.rows = dim;
  m.cols = dim;
  m.eval = [dim, diag](ConstVec x, MutVec s) {
    double d[kMaxDim];
    diag(x, MutVec(d, dim));
    for (std::size_t i = 0; i < dim * dim; ++i) s[i] = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s[i * dim + i] = d[i];
  };
  if (diag_partial) {
    m.partial = [dim, diag_partial](ConstVec x, std::size_t k, MutVec ds) {
      double d[kMaxDim];
      diag_partial(x, k, MutVec(d, dim));
      for (std::size_t i = 0; i < dim * dim; ++i) ds[i] = 0.0;
      for (std::size_t i = 0; i < dim; ++i) ds[i * dim + i] = d[i];
    };
  }
  return m;
}

}  // namespace cforge
