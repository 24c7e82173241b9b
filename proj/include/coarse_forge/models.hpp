#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coarse_forge/fields.hpp"

namespace cforge {

/// Gaussian invariant measure N(mean, covariance); covariance row-major d x d.
struct GaussianMeasure {
  std::vector<double> mean;
  std::vector<double> covariance;
};

/// Closed-form effective coefficients for the coordinate map xi(x) = x^1.
struct AnalyticCoefficients {
  std::function<double(double)> drift;      // b(z)
  std::function<double(double)> diffusion;  // sigma(z) >= 0
  double lipschitz_drift = 0.0;
  double lipschitz_diffusion = 0.0;
};

struct ModelMetadata {
  std::string name = "custom";
  std::optional<GaussianMeasure> gaussian;
  std::optional<AnalyticCoefficients> analytic;
  // True when c is identically zero (reversible dynamics).
  bool reversible = false;
  // True when Sigma is the identity everywhere.
  bool identity_diffusion = false;
  // True when mu is uniform on a torus (V constant).
  bool uniform = false;
};

struct BuildOptions {
  // Central-difference step is fd_scale * (1 + |x|).
  double fd_scale = 1e-5;
  // Points at which A = Sigma Sigma^T is checked for positive definiteness.
  std::vector<std::vector<double>> probe_points;
};

/// Full-dimensional SDE dX = F dX + sqrt(2) Sigma(X) dW with invariant measure
/// mu = Z^{-1} exp(-V) guaranteed by F = -A grad V + div A + c, div(c mu) = 0.
///
/// Immutable after construction. Points passed to the evaluation methods may
/// be lifted torus coordinates; wrapping happens internally.
class SdeModel {
 public:
  std::size_t dim() const { return domain_.dim; }
  std::size_t noise_dim() const { return diffusion_.cols; }
  const DomainSpec& domain() const { return domain_; }
  const ModelMetadata& metadata() const { return meta_; }
  const std::string& name() const { return meta_.name; }
  double fd_scale() const { return fd_scale_; }

  double potential(ConstVec x) const;
  void potential_gradient(ConstVec x, MutVec out) const;
  void perturbation(ConstVec x, MutVec out) const;
  /// Sigma(x), row-major d x d'.
  void diffusion(ConstVec x, MutVec out) const;
  /// A(x) = Sigma Sigma^T, row-major d x d.
  void diffusion_matrix(ConstVec x, MutVec out) const;
  /// (div A)_i = sum_j d_j A^{ij}.
  void diffusion_divergence(ConstVec x, MutVec out) const;

  void drift(ConstVec x, MutVec out) const;
  /// F(x) and Sigma(x) in one pass (the integrators need both).
  void drift_and_diffusion(ConstVec x, MutVec drift_out, MutVec sigma_out) const;
  /// Central-difference Jacobian of F, row-major J(i, j) = d_j F^i.
  void drift_jacobian(ConstVec x, MutVec out) const;

  /// Central-difference step used around x.
  double fd_step(ConstVec x) const;

 private:
  friend SdeModel build_model(ScalarField, MatrixField, VectorField, DomainSpec, ModelMetadata,
                              BuildOptions);
  SdeModel() = default;

  void wrapped(ConstVec x, MutVec out) const { domain_.wrap(x, out); }
  void potential_gradient_wrapped(ConstVec xw, MutVec out) const;
  void divergence_wrapped(ConstVec xw, ConstVec sigma, MutVec out) const;
  void drift_wrapped(ConstVec xw, MutVec drift_out, MutVec sigma_out) const;

  DomainSpec domain_;
  ScalarField potential_;
  MatrixField diffusion_;
  VectorField perturbation_;
  ModelMetadata meta_;
  double fd_scale_ = 1e-5;
};

/// Assembles a model from (V, Sigma, c). F is derived; div A comes from the
/// analytic partials of Sigma when present, central differences otherwise.
/// Throws DimensionError on inconsistent sizes and ModelError when A is not
/// SPD at a probe point.
SdeModel build_model(ScalarField potential, MatrixField diffusion, VectorField perturbation,
                     DomainSpec domain, ModelMetadata meta = {}, BuildOptions options = {});

/// Affine coarse-graining map xi(x) = T x + tau, T of size k x d, full rank,
/// k < d.
class CoarseMap {
 public:
  /// xi(x) = x^{index} (0-based).
  static CoarseMap coordinate(std::size_t dim, std::size_t index = 0);
  static CoarseMap affine(Eigen::MatrixXd t, Eigen::VectorXd tau);

  std::size_t rank() const { return static_cast<std::size_t>(t_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(t_.cols()); }
  const Eigen::MatrixXd& matrix() const { return t_; }
  const Eigen::VectorXd& offset() const { return tau_; }
  /// True for T = e_1^T and tau = 0.
  bool is_first_coordinate() const;

  void apply(ConstVec x, MutVec out) const;
  double apply_scalar(ConstVec x) const;

 private:
  CoarseMap(Eigen::MatrixXd t, Eigen::VectorXd tau);
  Eigen::MatrixXd t_;
  Eigen::VectorXd tau_;
};

/// A, B and Pi at one point for xi(x) = x^1.
struct GeometryAt {
  Eigen::MatrixXd a;   // d x d
  Eigen::MatrixXd b;   // (d-1) x (d-1), Schur complement of A^{11}
  Eigen::MatrixXd pi;  // d x d, A-orthogonal projector off e_1
};

/// Throws NumericalError when A^{11}(x) <= 0.
GeometryAt geometry_at(const SdeModel& model, ConstVec x);

/// Pi = I - T^T (T A T^T)^{-1} T A for a general affine map.
Eigen::MatrixXd level_set_projector(const Eigen::MatrixXd& a, const CoarseMap& map);

/// Rectangular grid: one [lower, upper] interval and node count per axis.
struct GridSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> nodes;
};

/// Max over interior nodes of |d_i(-mu F^i + d_j(A^{ij} mu))| with mu
/// normalized to max 1 on the grid. Fourth-order central differences.
/// Throws NumericalError when an axis has fewer than 8 nodes.
double verify_stationarity(const SdeModel& model, const GridSpec& grid);

using ModelParams = std::map<std::string, double>;

/// Benchmark models: torus-symplectic(u1, u2), nr-gauss(a, gamma),
/// two-scale(a, gamma, eps), var-diff(a, gamma, delta). Missing parameters
/// take the defaults u1=1, u2=0.7, a=4, gamma=0.5, eps=0.1, delta=0.5.
SdeModel registry(const std::string& name, const ModelParams& params = {});

/// Names accepted by registry().
std::vector<std::string> registry_names();

/// Parameter names accepted by registry(name).
std::vector<std::string> registry_parameters(const std::string& name);

}  // namespace cforge
