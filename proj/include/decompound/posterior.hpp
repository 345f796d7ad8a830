#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "decompound/error.hpp"
#include "decompound/grid.hpp"
#include "decompound/prior.hpp"
#include "decompound/rng.hpp"
#include "decompound/simulate.hpp"
#include "json.hpp"

namespace decompound {

struct ChainConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 5000;
  std::size_t thin = 10;
  double p_birth = 0.3;
  double p_death = 0.3;
  double p_relocate = 0.4;
  /// Relocation step is N(0, scale^2 * Sigma) with Sigma the current shared covariance.
  double relocate_scale = 0.7;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  /// Warm start for lambda; must lie in the prior support.
  std::optional<double> initial_lambda;

  void validate() const;
};

nlohmann::json chain_config_to_json(const ChainConfig& c);
ChainConfig chain_config_from_json(const nlohmann::json& j);

/// Latent jumps of one increment. The last stored jump is the residual
/// Z_i minus the others, so the jumps always sum to Z_i.
struct LatentIncrement {
  std::size_t count = 0;
  std::vector<double> jumps;  // count * dim
  std::vector<int> labels;    // component label per jump
};

struct ChainState {
  double lambda = 1.0;
  MixtureParams params;
  NormalMixture mixture;
  std::vector<LatentIncrement> latent;
  double log_post = 0.0;

  std::size_t total_jumps() const;
};

struct MoveCounts {
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

struct LatentStats {
  MoveCounts birth, death, relocate;
};

/// Everything the sampler conditions on.
struct Posterior {
  IncrementSample sample;  // canonical (sorted) order
  LambdaPrior lambda_prior;
  DpmPrior dpm_prior;

  Posterior(IncrementSample sample, LambdaPrior lambda_prior, DpmPrior dpm_prior);
};

/// Log MH acceptance of BIRTH t -> t + 1: a jump y ~ r is inserted as the
/// last free jump and the residual moves from `residual` to `residual - y`.
///   log(rate / (t + 1)) + log r(new residual) - log r(old residual) + log(p_death / p_birth)
double birth_log_acceptance(double rate, std::size_t t, double log_r_new_residual, double log_r_old_residual,
                            const ChainConfig& config);
/// Log MH acceptance of DEATH t -> t - 1 (t >= 2), the exact reverse of BIRTH from t - 1.
double death_log_acceptance(double rate, std::size_t t, double log_r_new_residual, double log_r_old_residual,
                            const ChainConfig& config);
/// RELOCATE on jumps a < b: y_a += step, y_b -= step, then the residual is rebuilt from z.
void apply_relocation(LatentIncrement& inc, std::span<const double> z, std::size_t a, std::size_t b,
                      std::span<const double> step);

ChainState init_chain(const Posterior& post, const ChainConfig& config, Rng& rng);

/// One birth/death/relocate proposal per nonzero increment. Exact-zero
/// increments carry no jumps: given Z_i = 0 the jump count is 0 almost surely.
void update_latent(ChainState& state, const Posterior& post, const ChainConfig& config, Rng& rng,
                   LatentStats* stats = nullptr);
/// Slice sample from lambda^S e^{-n mesh lambda} pi_1(lambda) on the prior support.
void update_lambda(ChainState& state, const Posterior& post, Rng& rng);
/// Draw from lambda^S e^{-n mesh lambda} pi_1(lambda) given the sufficient statistics directly.
double sample_lambda_conditional(double current, std::size_t total_jumps, std::size_t n, double mesh,
                                 const LambdaPrior& prior, Rng& rng);
/// Labels, stick weights, locations, shared covariance from their full conditionals.
void update_mixture(ChainState& state, const Posterior& post, Rng& rng);
/// Unnormalized log posterior of the augmented state.
double log_posterior(const ChainState& state, const Posterior& post);

struct RetainedState {
  std::size_t iter;
  double lambda;
  std::size_t jump_count_total;
  NormalMixture mixture;
  double log_post;
};

struct ChainOutput {
  std::vector<RetainedState> states;
  std::vector<double> lambda_trace;  // every iteration
  std::vector<double> jump_count_trace;
  std::vector<double> log_post_trace;
  LatentStats moves;
  double ess_lambda = 0.0;
  double runtime_seconds = 0.0;

  nlohmann::json diagnostics(bool include_runtime) const;
};

/// Thrown when the log posterior stops being finite; carries the offending
/// state and everything the chain produced before it.
class ChainAbort : public NumericalError {
public:
  ChainAbort(const std::string& what, nlohmann::json dump, std::shared_ptr<const ChainOutput> partial = nullptr)
      : NumericalError(what), dump_(std::move(dump)), partial_(std::move(partial)) {}
  const nlohmann::json& dump() const { return dump_; }
  const ChainOutput* partial() const { return partial_.get(); }

private:
  nlohmann::json dump_;
  std::shared_ptr<const ChainOutput> partial_;
};

nlohmann::json state_to_json(const ChainState& state);

/// Cycles update_latent, update_lambda, update_mixture.
ChainOutput run_chain(const Posterior& post, const ChainConfig& config);
ChainOutput run_chain(const Posterior& post, const ChainConfig& config, ChainState initial);

struct DensityBand {
  Grid grid;
  std::vector<double> mean;
  std::vector<double> lower;  // 5% pointwise
  std::vector<double> upper;  // 95% pointwise
};

DensityBand posterior_mean_density(const ChainOutput& output, const Grid& grid);
double posterior_mean_lambda(const ChainOutput& output);

}  // namespace decompound
