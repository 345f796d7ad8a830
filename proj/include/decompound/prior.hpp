#pragma once

#include <optional>
#include <string>
#include <vector>

#include "decompound/model.hpp"
#include "decompound/rng.hpp"
#include "json.hpp"

namespace decompound {

/// Prior density for the jump intensity, supported on [lo, hi].
///
/// Families: uniform; linear (density proportional to 1 + slope*u, u the
/// position in [0, 1], slope > -1); vee (proportional to |lambda - center|,
/// vanishes at an interior point); bump (6u(1-u), vanishes at both ends).
struct LambdaPrior {
  enum class Family { uniform, linear, vee, bump };

  double lo = 0.1;
  double hi = 5.0;
  Family family = Family::uniform;
  double slope = 0.0;
  double center = 0.0;

  LambdaPrior() = default;
  LambdaPrior(double lo, double hi, Family family = Family::uniform, double shape = 0.0);
  static LambdaPrior uniform(double lo, double hi) { return LambdaPrior(lo, hi); }

  double pdf(double lambda) const;
  /// -inf outside [lo, hi].
  double logpdf(double lambda) const;
  double cdf(double lambda) const;
  double quantile(double p) const;
  double median() const { return quantile(0.5); }
  double mean() const;
  double sample(Rng& rng) const;
};

std::string family_name(LambdaPrior::Family family);

/// Truncated Dirichlet-process location mixture of normals with a shared
/// covariance. Locations come from the Gaussian base N(base_mean, base_cov)
/// with total mass `concentration`; the shared covariance from an inverse
/// Wishart(iw_df, iw_scale); weights from K stick-breaking fractions with the
/// last weight absorbing the remaining stick.
struct DpmPrior {
  double concentration = 1.0;
  Vector base_mean;
  Matrix base_cov;
  double iw_df = 3.0;
  Matrix iw_scale;
  int truncation = 50;

  /// Defaults: base N(0, 4 I), concentration 1, IW(d + 2, I), K = 50.
  static DpmPrior defaults(std::size_t dim);
  std::size_t dim() const { return static_cast<std::size_t>(base_mean.size()); }
  void validate() const;
};

/// Raw truncated-DP parameters; keeps every stick even when its weight is negligible.
struct MixtureParams {
  std::vector<double> weights;
  std::vector<Vector> means;
  Matrix sigma;

  NormalMixture to_mixture() const;
};

Matrix sample_inverse_wishart(double df, const Matrix& scale, Rng& rng);
/// Log density of the inverse Wishart at sigma.
double inverse_wishart_logpdf(const Matrix& sigma, double df, const Matrix& scale);
std::vector<double> stick_breaking_weights(std::size_t count, double concentration, Rng& rng);

MixtureParams sample_prior_params(const DpmPrior& prior, Rng& rng);
NormalMixture sample_prior_draw(const DpmPrior& prior, Rng& rng);
/// Log prior density of the raw parameters (stick fractions, locations, covariance).
double dpm_log_prior(const DpmPrior& prior, const MixtureParams& params);

struct AssumptionClause {
  std::string name;
  bool pass = false;
  bool warning = false;
  std::string message;
  nlohmann::json constants;
};

struct AssumptionReport {
  std::vector<AssumptionClause> clauses;
  bool all_pass() const;
  nlohmann::json to_json() const;
};

/// Location base-measure family used by the tail check. The sampler only
/// supports Gaussian bases; Cauchy exists so the check can be exercised on a heavy tail.
struct BaseMeasureSpec {
  enum class Family { gaussian, cauchy };
  Family family = Family::gaussian;
  Vector location;
  Vector scale;  // per-axis sd (Gaussian) or half-width (Cauchy)

  static BaseMeasureSpec from_prior(const DpmPrior& prior);
};

AssumptionReport validate_assumptions(const DpmPrior& dpm, const LambdaPrior& lambda,
                                      std::optional<double> interior_truth = std::nullopt);
AssumptionReport validate_assumptions(const DpmPrior& dpm, const BaseMeasureSpec& base, const LambdaPrior& lambda,
                                      std::optional<double> interior_truth = std::nullopt);

struct PriorConfig {
  LambdaPrior lambda;
  DpmPrior dpm;
};

PriorConfig default_prior_config(std::size_t dim);
PriorConfig prior_config_from_json(const nlohmann::json& j, std::size_t dim);
nlohmann::json prior_config_to_json(const PriorConfig& config);

}  // namespace decompound
