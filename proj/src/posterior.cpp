#include "decompound/posterior.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "decompound/stats.hpp"

namespace decompound {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::span<const double> jump_at(const LatentIncrement& inc, std::size_t j, std::size_t dim) {
  return {inc.jumps.data() + j * dim, dim};
}

// Residual (last jump) <- z - sum of the free jumps.
void refresh_residual(LatentIncrement& inc, std::span<const double> z) {
  const std::size_t dim = z.size();
  if (inc.count == 0) return;
  double* res = inc.jumps.data() + (inc.count - 1) * dim;
  for (std::size_t a = 0; a < dim; ++a) {
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < inc.count; ++j) s += inc.jumps[j * dim + a];
    res[a] = z[a] - s;
  }
}

std::vector<double> sorted_rows(const IncrementSample& sample) {
  const std::size_t n = sample.size(), d = sample.dim;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(sample.z.begin() + a * d, sample.z.begin() + (a + 1) * d,
                                        sample.z.begin() + b * d, sample.z.begin() + (b + 1) * d);
  });
  std::vector<double> z;
  z.reserve(sample.z.size());
  for (std::size_t i : order) z.insert(z.end(), sample.z.begin() + i * d, sample.z.begin() + (i + 1) * d);
  return z;
}

double log_lambda_conditional(double lambda, std::size_t jumps, std::size_t n, double mesh, const LambdaPrior& prior) {
  const double lp = prior.logpdf(lambda);
  if (lp == kNegInf) return kNegInf;
  return static_cast<double>(jumps) * std::log(lambda) - static_cast<double>(n) * mesh * lambda + lp;
}

}  // namespace

void ChainConfig::validate() const {
  if (!(iterations > burn_in)) throw InputError("chain needs iterations > burn_in");
  if (thin < 1) throw InputError("thin must be >= 1");
  if (p_birth < 0 || p_death < 0 || p_relocate < 0 || std::abs(p_birth + p_death + p_relocate - 1.0) > 1e-12)
    throw InputError("move probabilities must be nonnegative and sum to 1");
  if (!(p_birth > 0.0) || !(p_death > 0.0)) throw InputError("birth and death probabilities must be positive");
  if (!(relocate_scale > 0.0)) throw InputError("relocation scale must be positive");
}

nlohmann::json chain_config_to_json(const ChainConfig& c) {
  nlohmann::json j = {{"iterations", c.iterations}, {"burn_in", c.burn_in},   {"thin", c.thin},
                      {"p_birth", c.p_birth},       {"p_death", c.p_death},   {"p_relocate", c.p_relocate},
                      {"relocate_scale", c.relocate_scale}, {"seed", c.seed}, {"stream", c.stream}};
  if (c.initial_lambda) j["initial_lambda"] = *c.initial_lambda;
  return j;
}

ChainConfig chain_config_from_json(const nlohmann::json& j) {
  ChainConfig c;
  try {
    c.iterations = j.value("iterations", c.iterations);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.thin = j.value("thin", c.thin);
    c.p_birth = j.value("p_birth", c.p_birth);
    c.p_death = j.value("p_death", c.p_death);
    c.p_relocate = j.value("p_relocate", c.p_relocate);
    c.relocate_scale = j.value("relocate_scale", c.relocate_scale);
    c.seed = j.value("seed", c.seed);
    c.stream = j.value("stream", c.stream);
    if (j.contains("initial_lambda")) c.initial_lambda = j.at("initial_lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed chain config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t ChainState::total_jumps() const {
  std::size_t s = 0;
  for (const auto& inc : latent) s += inc.count;
  return s;
}

Posterior::Posterior(IncrementSample sample_, LambdaPrior lambda_prior_, DpmPrior dpm_prior_)
    : sample(std::move(sample_)), lambda_prior(std::move(lambda_prior_)), dpm_prior(std::move(dpm_prior_)) {
  dpm_prior.validate();
  if (sample.size() > 0 && sample.dim != dpm_prior.dim())
    throw InputError("data dimension does not match the prior dimension");
  sample.dim = dpm_prior.dim();
  sample.z = sorted_rows(sample);
}

ChainState init_chain(const Posterior& post, const ChainConfig& config, Rng& rng) {
  const auto& lp = post.lambda_prior;
  double lambda = config.initial_lambda ? *config.initial_lambda : lp.median();
  if (!(lambda >= lp.lo && lambda <= lp.hi) || lp.logpdf(lambda) == kNegInf)
    throw InputError("initial lambda lies outside the prior support");
  MixtureParams params = sample_prior_params(post.dpm_prior, rng);
  NormalMixture mixture = params.to_mixture();
  ChainState state{lambda, std::move(params), std::move(mixture), {}, 0.0};
  const auto& sample = post.sample;
  state.latent.resize(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.is_zero(i)) continue;
    auto& inc = state.latent[i];
    inc.count = 1;
    inc.jumps.assign(sample.at(i).begin(), sample.at(i).end());
    inc.labels.assign(1, 0);
  }
  state.log_post = log_posterior(state, post);
  return state;
}

double birth_log_acceptance(double rate, std::size_t t, double log_r_new_residual, double log_r_old_residual,
                            const ChainConfig& config) {
  return std::log(rate) - std::log(static_cast<double>(t + 1)) + log_r_new_residual - log_r_old_residual +
         std::log(config.p_death) - std::log(config.p_birth);
}

double death_log_acceptance(double rate, std::size_t t, double log_r_new_residual, double log_r_old_residual,
                            const ChainConfig& config) {
  return std::log(static_cast<double>(t)) - std::log(rate) + log_r_new_residual - log_r_old_residual +
         std::log(config.p_birth) - std::log(config.p_death);
}

void apply_relocation(LatentIncrement& inc, std::span<const double> z, std::size_t a, std::size_t b,
                      std::span<const double> step) {
  const std::size_t d = z.size();
  if (a >= b || b >= inc.count || step.size() != d) throw InputError("invalid relocation");
  for (std::size_t c = 0; c < d; ++c) {
    inc.jumps[a * d + c] += step[c];
    inc.jumps[b * d + c] -= step[c];
  }
  refresh_residual(inc, z);
}

void update_latent(ChainState& state, const Posterior& post, const ChainConfig& config, Rng& rng,
                   LatentStats* stats) {
  const auto& sample = post.sample;
  const std::size_t d = sample.dim;
  const double rate = state.lambda * sample.mesh;
  const auto& r = state.mixture;
  const Matrix step_factor = config.relocate_scale * Matrix(state.params.sigma.llt().matrixL());
  std::vector<double> proposal(d), eps(d), step(d), trial_a(d), trial_b(d);

  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.is_zero(i)) continue;
    auto& inc = state.latent[i];
    const auto z = sample.at(i);
    const std::size_t t = inc.count;
    const double u = rng.uniform();
    const auto residual = jump_at(inc, t - 1, d);

    if (u < config.p_birth) {
      if (stats) ++stats->birth.proposed;
      r.sample_into(rng, proposal.data());
      for (std::size_t a = 0; a < d; ++a) trial_a[a] = residual[a] - proposal[a];
      const double log_alpha =
          birth_log_acceptance(rate, t, r.log_density(trial_a), r.log_density(residual), config);
      if (std::log(rng.uniform()) < log_alpha) {
        inc.jumps.insert(inc.jumps.begin() + static_cast<std::ptrdiff_t>((t - 1) * d), proposal.begin(), proposal.end());
        inc.labels.insert(inc.labels.begin() + static_cast<std::ptrdiff_t>(t - 1), 0);
        inc.count = t + 1;
        refresh_residual(inc, z);
        if (stats) ++stats->birth.accepted;
      }
    } else if (u < config.p_birth + config.p_death) {
      if (stats) ++stats->death.proposed;
      if (t < 2) continue;
      const auto removed = jump_at(inc, t - 2, d);
      for (std::size_t a = 0; a < d; ++a) trial_a[a] = residual[a] + removed[a];
      const double log_alpha =
          death_log_acceptance(rate, t, r.log_density(trial_a), r.log_density(residual), config);
      if (std::log(rng.uniform()) < log_alpha) {
        inc.jumps.erase(inc.jumps.begin() + static_cast<std::ptrdiff_t>((t - 2) * d),
                        inc.jumps.begin() + static_cast<std::ptrdiff_t>((t - 1) * d));
        inc.labels.erase(inc.labels.begin() + static_cast<std::ptrdiff_t>(t - 2));
        inc.count = t - 1;
        refresh_residual(inc, z);
        if (stats) ++stats->death.accepted;
      }
    } else {
      if (stats) ++stats->relocate.proposed;
      if (t < 2) continue;
      // unordered pair a < b among all t jumps; b == t - 1 is the residual
      const auto a_idx = static_cast<std::size_t>(rng.uniform() * static_cast<double>(t));
      auto b_idx = static_cast<std::size_t>(rng.uniform() * static_cast<double>(t - 1));
      if (b_idx >= a_idx) ++b_idx;
      const std::size_t lo = std::min(a_idx, b_idx), hi = std::max(a_idx, b_idx);
      for (std::size_t a = 0; a < d; ++a) eps[a] = rng.normal();
      const auto ya = jump_at(inc, lo, d), yb = jump_at(inc, hi, d);
      for (std::size_t a = 0; a < d; ++a) {
        step[a] = 0.0;
        for (std::size_t c = 0; c <= a; ++c) step[a] += step_factor(a, c) * eps[c];
        trial_a[a] = ya[a] + step[a];
        trial_b[a] = yb[a] - step[a];
      }
      const double log_alpha =
          r.log_density(trial_a) + r.log_density(trial_b) - r.log_density(ya) - r.log_density(yb);
      if (std::log(rng.uniform()) < log_alpha) {
        apply_relocation(inc, z, lo, hi, step);
        if (stats) ++stats->relocate.accepted;
      }
    }
  }
}

double sample_lambda_conditional(double current, std::size_t total_jumps, std::size_t n, double mesh,
                                 const LambdaPrior& prior, Rng& rng) {
  // shrinkage-only slice sampler started from the whole support
  const double level = log_lambda_conditional(current, total_jumps, n, mesh, prior) + std::log(rng.uniform());
  double left = prior.lo, right = prior.hi;
  for (int it = 0; it < 500; ++it) {
    const double x = left + rng.uniform() * (right - left);
    if (log_lambda_conditional(x, total_jumps, n, mesh, prior) > level) return x;
    (x < current ? left : right) = x;
  }
  return current;
}

void update_lambda(ChainState& state, const Posterior& post, Rng& rng) {
  state.lambda = sample_lambda_conditional(state.lambda, state.total_jumps(), post.sample.size(), post.sample.mesh,
                                           post.lambda_prior, rng);
}

void update_mixture(ChainState& state, const Posterior& post, Rng& rng) {
  const auto& prior = post.dpm_prior;
  const std::size_t d = prior.dim();
  const auto K = static_cast<std::size_t>(prior.truncation);
  auto& params = state.params;

  // labels
  const Eigen::LLT<Matrix> sigma_llt(params.sigma);
  const Matrix sigma_lower_inv = Matrix(sigma_llt.matrixL()).triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  std::vector<double> log_w(K), probs(K);
  for (std::size_t k = 0; k < K; ++k) log_w[k] = params.weights[k] > 0.0 ? std::log(params.weights[k]) : kNegInf;
  std::vector<std::size_t> counts(K, 0);
  std::vector<Vector> sums(K, Vector::Zero(d));
  Vector diff(d);
  for (auto& inc : state.latent) {
    inc.labels.resize(inc.count);
    for (std::size_t j = 0; j < inc.count; ++j) {
      const auto y = jump_at(inc, j, d);
      double top = kNegInf;
      for (std::size_t k = 0; k < K; ++k) {
        if (log_w[k] == kNegInf) {
          probs[k] = kNegInf;
          continue;
        }
        double maha = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
          double s = 0.0;
          for (std::size_t c = 0; c <= a; ++c) s += sigma_lower_inv(a, c) * (y[c] - params.means[k](c));
          maha += s * s;
        }
        probs[k] = log_w[k] - 0.5 * maha;
        top = std::max(top, probs[k]);
      }
      for (auto& p : probs) p = p == kNegInf ? 0.0 : std::exp(p - top);
      const std::size_t label = rng.categorical(probs);
      inc.labels[j] = static_cast<int>(label);
      ++counts[label];
      for (std::size_t a = 0; a < d; ++a) sums[label](a) += y[a];
    }
  }

  // stick weights, last stick absorbs the remainder
  std::vector<std::size_t> tail(K, 0);
  for (std::size_t k = K; k-- > 1;) tail[k - 1] = tail[k] + counts[k];
  double remaining = 1.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double v = rng.beta(1.0 + static_cast<double>(counts[k]),
                              prior.concentration + static_cast<double>(tail[k]));
    params.weights[k] = v * remaining;
    remaining *= 1.0 - v;
  }
  params.weights[K - 1] = remaining;

  // locations
  const Matrix sigma_inv = sigma_llt.solve(Matrix::Identity(d, d));
  const Eigen::LLT<Matrix> base_llt(prior.base_cov);
  const Matrix base_inv = base_llt.solve(Matrix::Identity(d, d));
  const Vector base_term = base_inv * prior.base_mean;
  Vector z(d);
  for (std::size_t k = 0; k < K; ++k) {
    const Matrix precision = base_inv + static_cast<double>(counts[k]) * sigma_inv;
    const Eigen::LLT<Matrix> prec_llt(precision);
    const Vector centre = prec_llt.solve(base_term + sigma_inv * sums[k]);
    for (std::size_t a = 0; a < d; ++a) z(a) = rng.normal();
    // x = centre + L^{-T} z has covariance precision^{-1}
    params.means[k] = centre + Matrix(prec_llt.matrixU()).triangularView<Eigen::Upper>().solve(z);
  }

  // shared covariance
  Matrix scatter = prior.iw_scale;
  std::size_t total = 0;
  for (const auto& inc : state.latent) {
    for (std::size_t j = 0; j < inc.count; ++j) {
      const auto y = jump_at(inc, j, d);
      const auto& mu = params.means[static_cast<std::size_t>(inc.labels[j])];
      for (std::size_t a = 0; a < d; ++a) diff(a) = y[a] - mu(a);
      scatter.noalias() += diff * diff.transpose();
      ++total;
    }
  }
  params.sigma = sample_inverse_wishart(prior.iw_df + static_cast<double>(total), scatter, rng);
  state.mixture = params.to_mixture();
}

double log_posterior(const ChainState& state, const Posterior& post) {
  const auto& sample = post.sample;
  const std::size_t d = sample.dim;
  const double rate = state.lambda * sample.mesh;
  const double log_rate = std::log(rate);
  double total = post.lambda_prior.logpdf(state.lambda) + dpm_log_prior(post.dpm_prior, state.params);
  for (const auto& inc : state.latent) {
    total += -rate + static_cast<double>(inc.count) * log_rate - std::lgamma(static_cast<double>(inc.count) + 1.0);
    for (std::size_t j = 0; j < inc.count; ++j) total += state.mixture.log_density(jump_at(inc, j, d));
  }
  return total;
}

nlohmann::json state_to_json(const ChainState& state) {
  nlohmann::json latent = nlohmann::json::array();
  for (const auto& inc : state.latent) latent.push_back({{"count", inc.count}, {"jumps", inc.jumps}});
  return {{"lambda", state.lambda}, {"mixture", state.mixture}, {"log_post", state.log_post}, {"latent", latent}};
}

nlohmann::json ChainOutput::diagnostics(bool include_runtime) const {
  nlohmann::json j;
  j["acceptance"] = {{"birth", moves.birth.rate()}, {"death", moves.death.rate()}, {"relocate", moves.relocate.rate()}};
  j["proposals"] = {{"birth", moves.birth.proposed}, {"death", moves.death.proposed}, {"relocate", moves.relocate.proposed}};
  j["ess_lambda"] = ess_lambda;
  j["retained"] = states.size();
  j["iterations"] = lambda_trace.size();
  if (include_runtime) j["runtime_seconds"] = runtime_seconds;
  return j;
}

ChainOutput run_chain(const Posterior& post, const ChainConfig& config) {
  config.validate();
  Rng rng(config.seed, config.stream);
  ChainState state = init_chain(post, config, rng);
  return run_chain(post, config, std::move(state));
}

ChainOutput run_chain(const Posterior& post, const ChainConfig& config, ChainState state) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  // the sampling stream is distinct from the one init_chain consumed
  Rng rng = Rng(config.seed, config.stream).substream(1);
  ChainOutput out;
  out.lambda_trace.reserve(config.iterations);
  out.jump_count_trace.reserve(config.iterations);
  out.log_post_trace.reserve(config.iterations);
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    update_latent(state, post, config, rng, &out.moves);
    update_lambda(state, post, rng);
    update_mixture(state, post, rng);
    state.log_post = log_posterior(state, post);
    if (!std::isfinite(state.log_post)) {
      out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw ChainAbort("non-finite log posterior at iteration " + std::to_string(iter), state_to_json(state),
                       std::make_shared<const ChainOutput>(std::move(out)));
    }
    out.lambda_trace.push_back(state.lambda);
    out.jump_count_trace.push_back(static_cast<double>(state.total_jumps()));
    out.log_post_trace.push_back(state.log_post);
    if (iter > config.burn_in && (iter - config.burn_in) % config.thin == 0) {
      out.states.push_back({iter, state.lambda, state.total_jumps(), state.mixture, state.log_post});
    }
  }
  std::vector<double> retained;
  for (const auto& s : out.states) retained.push_back(s.lambda);
  out.ess_lambda = retained.size() >= 4 ? stats::effective_sample_size(retained) : static_cast<double>(retained.size());
  out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

DensityBand posterior_mean_density(const ChainOutput& output, const Grid& grid) {
  if (output.states.empty()) throw InputError("posterior summary needs at least one retained state");
  const auto points = grid.points();
  const std::size_t n = grid.size();
  constexpr std::size_t kMaxStored = 50'000'000;
  const std::size_t states = output.states.size();
  const std::size_t stride = std::max<std::size_t>(1, (states * n + kMaxStored - 1) / kMaxStored);
  DensityBand band{grid, std::vector<double>(n, 0.0), std::vector<double>(n), std::vector<double>(n)};
  std::vector<std::vector<double>> stored;
  std::vector<double> values(n);
  for (std::size_t s = 0; s < states; ++s) {
    output.states[s].mixture.log_density_batch(points, values);
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = std::exp(values[i]);
      band.mean[i] += values[i];
    }
    if (s % stride == 0) stored.push_back(values);
  }
  for (double& v : band.mean) v /= static_cast<double>(states);
  std::vector<double> column(stored.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < stored.size(); ++s) column[s] = stored[s][i];
    band.lower[i] = stats::quantile(column, 0.05);
    band.upper[i] = stats::quantile(column, 0.95);
  }
  return band;
}

double posterior_mean_lambda(const ChainOutput& output) {
  if (output.states.empty()) throw InputError("posterior summary needs at least one retained state");
  double s = 0.0;
  for (const auto& st : output.states) s += st.lambda;
  return s / static_cast<double>(output.states.size());
}

}  // namespace decompound
