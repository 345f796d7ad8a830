#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "decompound/kernels.hpp"
#include "decompound/rng.hpp"
#include "json.hpp"

namespace decompound {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Finite location(-scale) mixture of d-variate Gaussians.
///
/// Immutable once built. Construction validates weights (positive, sum 1),
/// covariances (symmetric, positive-definite) and precomputes one Cholesky
/// factor per distinct covariance plus the SoA table the density kernels run
/// on. Weights below kMinWeight are dropped and the rest renormalized.
class NormalMixture {
public:
  static constexpr double kMinWeight = 1e-15;

  /// covariances has one entry per component, or exactly one entry when shared_sigma is set.
  NormalMixture(std::vector<double> weights, std::vector<Vector> means, std::vector<Matrix> covariances,
                bool shared_sigma = false);

  static NormalMixture gaussian(const Vector& mean, const Matrix& covariance);
  static NormalMixture shared(std::vector<double> weights, std::vector<Vector> means, const Matrix& sigma);
  /// d = 1 convenience.
  static NormalMixture gaussian1d(double mean, double variance);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  bool shared_sigma() const { return shared_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const Matrix& covariance(std::size_t component) const { return covs_[shared_ ? 0 : component]; }
  const std::vector<Matrix>& covariances() const { return covs_; }

  double log_density(std::span<const double> x) const;
  double density(std::span<const double> x) const;
  double log_density(const Vector& x) const { return log_density(std::span<const double>(x.data(), x.size())); }
  double density(const Vector& x) const { return density(std::span<const double>(x.data(), x.size())); }
  /// Point-major batch evaluation; points.size() == out.size() * dim().
  void log_density_batch(std::span<const double> points, std::span<double> out) const;
  /// log(w_k) + log phi_k(x) for every component k (unnormalized label log-probabilities).
  void component_log_terms(std::span<const double> x, std::span<double> out) const;

  Vector mean() const;
  Matrix covariance() const;
  /// sup_x of the density, bounded by sum_k w_k phi_k(mu_k).
  double density_upper_bound() const;
  /// Largest per-axis standard deviation over components.
  double max_axis_sd() const;

  Vector sample(Rng& rng) const;
  void sample_into(Rng& rng, double* out) const;

  const kernels::ComponentTable& table() const { return table_; }

private:
  void validate_and_factor();

  std::size_t dim_ = 0;
  bool shared_ = false;
  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covs_;
  std::vector<Matrix> chol_;  // lower factors, parallel to covs_
  std::vector<double> cumulative_;
  kernels::ComponentTable table_;
};

/// Components (w_i v_j, mu_i + nu_j, S_i + L_j) for all pairs.
NormalMixture convolve(const NormalMixture& a, const NormalMixture& b);

/// Merges components with identical covariance and means equal to within
/// 1e-12 (relative). The density is unchanged up to rounding.
NormalMixture merge_duplicates(const NormalMixture& m);

struct PrunedMixture {
  NormalMixture mixture;
  double pruned_mass = 0.0;
};

/// Drops the smallest weights whose total stays <= prune_tol and renormalizes.
PrunedMixture prune_smallest(const NormalMixture& m, double prune_tol);

struct ConvolutionOptions {
  std::size_t max_components = 4096;
  double prune_tol = 1e-10;
};

/// k-fold self-convolution r^{*k}, with pruning whenever the component
/// budget is exceeded. pruned_mass accumulates over steps.
PrunedMixture self_convolve(const NormalMixture& m, int k, const ConvolutionOptions& options = {});

/// Powers r^{*1}, ..., r^{*max_power} computed incrementally. Stops early
/// (returning fewer entries) once a power still exceeds the budget after pruning.
struct ConvolutionPowers {
  std::vector<NormalMixture> powers;
  double pruned_mass = 0.0;
  bool budget_exhausted = false;
};
ConvolutionPowers convolution_powers(const NormalMixture& m, int max_power, const ConvolutionOptions& options = {});

/// Jump intensity plus jump density.
struct CppModel {
  double lambda;
  NormalMixture jumps;

  CppModel(double lambda, NormalMixture jumps);
  std::size_t dim() const { return jumps.dim(); }
};

void to_json(nlohmann::json& j, const NormalMixture& m);
NormalMixture mixture_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const CppModel& m);
CppModel model_from_json(const nlohmann::json& j);

}  // namespace decompound
