#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace cforge {

/// Upper bound on state and noise dimension. Hot loops keep their scratch
/// buffers on the stack.
inline constexpr std::size_t kMaxDim = 16;

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// Real-valued field on R^d with an optional analytic gradient.
struct ScalarField {
  std::function<double(ConstVec)> eval;
  std::function<void(ConstVec, MutVec)> gradient;

  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// R^d -> R^d field. `jacobian` (optional) writes J(i, j) = d v_i / d x_j,
/// row-major.
struct VectorField {
  std::function<void(ConstVec, MutVec)> eval;
  std::function<void(ConstVec, MutVec)> jacobian;

  bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

/// R^d -> R^{rows x cols} field, written row-major. `partial` (optional)
/// writes the derivative of the matrix with respect to coordinate k.
struct MatrixField {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::function<void(ConstVec, MutVec)> eval;
  std::function<void(ConstVec, std::size_t, MutVec)> partial;

  bool has_partial() const { return static_cast<bool>(partial); }
};

enum class DomainKind { euclidean, torus };

struct DomainSpec {
  DomainKind kind = DomainKind::euclidean;
  std::size_t dim = 0;
  double period = 1.0;  // torus only

  static DomainSpec euclidean(std::size_t d) { return {DomainKind::euclidean, d, 1.0}; }
  static DomainSpec torus(std::size_t d, double period = 1.0) {
    return {DomainKind::torus, d, period};
  }

  bool is_torus() const { return kind == DomainKind::torus; }

  /// Throws DimensionError on a bad dimension, ModelError on a bad period.
  void validate() const;

  /// Maps a lifted point into the fundamental cell [0, period)^d. A no-op on
  /// euclidean domains.
  void wrap(ConstVec x, MutVec out) const;
};

// Constant and simple fields used by the registry and tests.
ScalarField zero_scalar_field(std::size_t dim);
VectorField zero_vector_field(std::size_t dim);
MatrixField identity_matrix_field(std::size_t dim);
MatrixField diagonal_matrix_field(std::size_t dim, std::function<void(ConstVec, MutVec)> diag,
                                  std::function<void(ConstVec, std::size_t, MutVec)> diag_partial);

}  // namespace cforge
